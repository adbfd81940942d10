/**
 * posefuse — typed-array bindings to the pose-fusion numeric kernels.
 *
 * The heavy lifting happens in the posefuse engine behind the `posefuse
 * kernel` endpoint; this package validates shapes, ships flat float64
 * buffers over the wire without copying read-only inputs, and returns the
 * engine's results bit for bit (seeded operations included).
 *
 * ```ts
 * const kernel = new PosefuseKernel();
 * const { quaternion } = await kernel.markleyAverage(quats, weights);
 * kernel.close();
 * ```
 */

import {
  EmptyAggregationError,
  KernelRequest,
  KernelResponse,
  KernelTransport,
  TransportOptions,
  raiseKernelError,
  runBatch,
} from "./client.js";
import { WireArray, decodeArray, encodeArray, viewOf } from "./wire.js";

export { EmptyAggregationError, KernelTransport, runBatch, raiseKernelError };
export type { KernelRequest, KernelResponse, TransportOptions, WireArray };
export { decodeArray, encodeArray, viewOf };

/** A fused orientation with its provenance. */
export interface OrientationResult {
  /** Unit quaternion, scalar-first [w, x, y, z]. */
  quaternion: Float64Array;
  /** Sum of inlier/used weights behind the result. */
  support: number;
  usedCount: number;
  /** True when the average sat on a flat (degenerate) objective. */
  ambiguous: boolean;
}

export interface RansacOptions {
  /** Inlier angular distance in radians (default 0.2). */
  threshold?: number;
  /** Hypothesis draws (default 50). */
  iterations?: number;
  /** 64-bit seed; bigint survives unclipped. */
  seed?: number | bigint;
  /** Draw and score by weight instead of uniformly/count. */
  weighted?: boolean;
}

function quadsOf(name: string, values: Float64Array): number {
  if (values.length === 0 || values.length % 4 !== 0) {
    throw new RangeError(
      `${name}: length ${values.length} is not a positive multiple of 4 (n x 4 quaternions)`,
    );
  }
  return values.length / 4;
}

function tripletsOf(name: string, values: Float64Array): number {
  if (values.length === 0 || values.length % 3 !== 0) {
    throw new RangeError(
      `${name}: length ${values.length} is not a positive multiple of 3 (m x 3 points)`,
    );
  }
  return values.length / 3;
}

function exactLength(name: string, values: Float64Array, n: number): void {
  if (values.length !== n) {
    throw new RangeError(`${name}: expected length ${n}, got ${values.length}`);
  }
}

function quatSetArgs(quats: Float64Array, weights: Float64Array) {
  const n = quadsOf("quats", quats);
  exactLength("weights", weights, n);
  return {
    quats: encodeArray(quats, [n, 4]),
    weights: encodeArray(weights, [n]),
  };
}

function poseLossArgs(qEst: Float64Array, qGt: Float64Array, points: Float64Array) {
  exactLength("q_est", qEst, 4);
  exactLength("q_gt", qGt, 4);
  const m = tripletsOf("points", points);
  return {
    q_est: encodeArray(qEst, [4]),
    q_gt: encodeArray(qGt, [4]),
    points: encodeArray(points, [m, 3]),
  };
}

function wireSeed(seed: number | bigint | undefined): number | string {
  if (seed === undefined) return 0;
  return typeof seed === "bigint" ? seed.toString() : seed;
}

function orientationOf(result: Record<string, unknown>): OrientationResult {
  return {
    quaternion: decodeArray(result.quaternion as WireArray),
    support: decodeArray(result.support as WireArray)[0],
    usedCount: result.used_count as number,
    ambiguous: result.ambiguous as boolean,
  };
}

/**
 * Stateless kernel wrappers over one engine process.
 *
 * Calls are answered strictly in order; the instance is safe to share as
 * long as `close()` runs after the last call settles.
 */
export class PosefuseKernel {
  private readonly transport: KernelTransport;

  constructor(options?: TransportOptions) {
    this.transport = new KernelTransport(options);
  }

  /** Build the wire request for an op (exposed so tests can replay the
   * identical request through an independent one-shot process). */
  static request(op: string, args: Record<string, unknown>): KernelRequest {
    return { op, args };
  }

  private async call(
    op: string,
    args: Record<string, unknown>,
  ): Promise<Record<string, unknown>> {
    const response = await this.transport.request({ op, args });
    if (!response.ok) raiseKernelError(response.error);
    return (response as { ok: true; result: Record<string, unknown> }).result;
  }

  /** Weighted chordal mean of (n x 4) raw quaternions. */
  async markleyAverage(
    quats: Float64Array,
    weights: Float64Array,
  ): Promise<{ quaternion: Float64Array; ambiguous: boolean }> {
    const result = await this.call("markley_average", quatSetArgs(quats, weights));
    return {
      quaternion: decodeArray(result.quaternion as WireArray),
      ambiguous: result.ambiguous as boolean,
    };
  }

  /** Drop the least-confident fraction, then average the survivors. */
  async pruneAndAverage(
    quats: Float64Array,
    weights: Float64Array,
    pruneFraction: number,
  ): Promise<OrientationResult> {
    const result = await this.call("prune_and_average", {
      ...quatSetArgs(quats, weights),
      prune_fraction: pruneFraction,
    });
    return orientationOf(result);
  }

  /** Seeded RANSAC clustering under the angular distance. */
  async ransacCluster(
    quats: Float64Array,
    weights: Float64Array,
    options: RansacOptions = {},
  ): Promise<OrientationResult> {
    const result = await this.call("ransac_cluster", {
      ...quatSetArgs(quats, weights),
      threshold: options.threshold ?? 0.2,
      iterations: options.iterations ?? 50,
      seed: wireSeed(options.seed),
      weighted: options.weighted ?? false,
    });
    return orientationOf(result);
  }

  /** Symmetry-blind point-matching loss. */
  async ploss(
    qEst: Float64Array,
    qGt: Float64Array,
    points: Float64Array,
  ): Promise<number> {
    const result = await this.call("ploss", poseLossArgs(qEst, qGt, points));
    return decodeArray(result.value as WireArray)[0];
  }

  /** Symmetry-robust nearest-point loss. */
  async sloss(
    qEst: Float64Array,
    qGt: Float64Array,
    points: Float64Array,
  ): Promise<number> {
    const result = await this.call("sloss", poseLossArgs(qEst, qGt, points));
    return decodeArray(result.value as WireArray)[0];
  }

  /** sloss for symmetric models, ploss otherwise. */
  async smloss(
    qEst: Float64Array,
    qGt: Float64Array,
    points: Float64Array,
    symmetric: boolean,
  ): Promise<number> {
    const result = await this.call("smloss", {
      ...poseLossArgs(qEst, qGt, points),
      symmetric,
    });
    return decodeArray(result.value as WireArray)[0];
  }

  /** log(eps + 1 - |q1 . q2|), antipodally symmetric. */
  async qloss(
    qEst: Float64Array,
    qGt: Float64Array,
    eps: number = 1e-4,
  ): Promise<number> {
    exactLength("q_est", qEst, 4);
    exactLength("q_gt", qGt, 4);
    const result = await this.call("qloss", {
      q_est: encodeArray(qEst, [4]),
      q_gt: encodeArray(qGt, [4]),
      eps,
    });
    return decodeArray(result.value as WireArray)[0];
  }

  /** Gradient of ploss w.r.t. the raw estimate (through normalization). */
  async gradPloss(
    qEst: Float64Array,
    qGt: Float64Array,
    points: Float64Array,
  ): Promise<Float64Array> {
    const result = await this.call("grad_ploss", poseLossArgs(qEst, qGt, points));
    return decodeArray(result.grad as WireArray);
  }

  /** Gradient of qloss w.r.t. its first argument. */
  async gradQloss(
    qEst: Float64Array,
    qGt: Float64Array,
    eps: number = 1e-4,
  ): Promise<Float64Array> {
    exactLength("q_est", qEst, 4);
    exactLength("q_gt", qGt, 4);
    const result = await this.call("grad_qloss", {
      q_est: encodeArray(qEst, [4]),
      q_gt: encodeArray(qGt, [4]),
      eps,
    });
    return decodeArray(result.grad as WireArray);
  }

  /** Mean pointwise distance between two poses of a model (ADD). */
  async add(
    qEst: Float64Array,
    tEst: Float64Array,
    qGt: Float64Array,
    tGt: Float64Array,
    points: Float64Array,
  ): Promise<number> {
    exactLength("t_est", tEst, 3);
    exactLength("t_gt", tGt, 3);
    const result = await this.call("add", {
      ...poseLossArgs(qEst, qGt, points),
      t_est: encodeArray(tEst, [3]),
      t_gt: encodeArray(tGt, [3]),
    });
    return decodeArray(result.value as WireArray)[0];
  }

  /** Symmetry-robust nearest-point distance (ADD-S). */
  async adds(
    qEst: Float64Array,
    tEst: Float64Array,
    qGt: Float64Array,
    tGt: Float64Array,
    points: Float64Array,
  ): Promise<number> {
    exactLength("t_est", tEst, 3);
    exactLength("t_gt", tGt, 3);
    const result = await this.call("adds", {
      ...poseLossArgs(qEst, qGt, points),
      t_est: encodeArray(tEst, [3]),
      t_gt: encodeArray(tGt, [3]),
    });
    return decodeArray(result.value as WireArray)[0];
  }

  /** Area under the accuracy curve up to tauMax, in percent. */
  async auc(distances: Float64Array, tauMax: number = 0.1): Promise<number> {
    if (distances.length === 0) {
      throw new RangeError("distances: expected at least one value");
    }
    const result = await this.call("auc", {
      distances: encodeArray(distances, [distances.length]),
      tau_max: tauMax,
    });
    return decodeArray(result.value as WireArray)[0];
  }

  close(): void {
    this.transport.close();
  }
}
