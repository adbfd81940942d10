/**
 * client.ts — transport to the `posefuse kernel` endpoint.
 *
 * A persistent child process runs `posefuse kernel --serve` (one JSON
 * request per line, one response per line); requests are answered in
 * order, so a FIFO of pending promises suffices. `runBatch` is the
 * one-shot variant: a single process invocation handles a whole request
 * list, which the tests use as the independent path to the primary.
 */

import { spawn, spawnSync, type ChildProcessByStdio } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";

type KernelProcess = ChildProcessByStdio<Writable, Readable, null>;

export interface KernelError {
  type: string;
  message: string;
}

export type KernelResponse =
  | { ok: true; result: Record<string, unknown> }
  | { ok: false; error: KernelError };

export interface KernelRequest {
  op: string;
  args: Record<string, unknown>;
}

/** Raised when the primary reports an empty aggregation. */
export class EmptyAggregationError extends Error {}

const DEFAULT_COMMAND = ["python3", "-m", "posefuse", "kernel"];

export interface TransportOptions {
  /** Command prefix launching the kernel endpoint (before --serve). */
  command?: string[];
}

function commandFrom(options?: TransportOptions): string[] {
  if (options?.command) return options.command;
  const env = process.env.POSEFUSE_KERNEL_CMD;
  return env ? env.split(" ") : DEFAULT_COMMAND;
}

export function raiseKernelError(error: KernelError): never {
  if (error.type === "empty_aggregation") {
    throw new EmptyAggregationError(error.message);
  }
  if (error.type === "invalid_argument") {
    throw new RangeError(error.message);
  }
  throw new Error(`${error.type}: ${error.message}`);
}

export class KernelTransport {
  private readonly command: string[];
  private proc: KernelProcess | null = null;
  private lines: Interface | null = null;
  private pending: Array<{
    resolve: (r: KernelResponse) => void;
    reject: (e: Error) => void;
  }> = [];

  constructor(options?: TransportOptions) {
    this.command = commandFrom(options);
  }

  private ensure(): KernelProcess {
    if (this.proc) return this.proc;
    const [cmd, ...args] = this.command;
    const proc = spawn(cmd, [...args, "--serve"], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    const lines = createInterface({ input: proc.stdout });
    lines.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as KernelResponse);
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    proc.on("error", (err) => this.failAll(err));
    proc.on("exit", (code) => {
      this.proc = null;
      this.lines = null;
      this.failAll(new Error(`kernel endpoint exited with code ${code}`));
    });
    this.proc = proc;
    this.lines = lines;
    return proc;
  }

  private failAll(err: Error): void {
    const waiting = this.pending;
    this.pending = [];
    for (const waiter of waiting) waiter.reject(err);
  }

  request(request: KernelRequest): Promise<KernelResponse> {
    const proc = this.ensure();
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      proc.stdin.write(JSON.stringify(request) + "\n", (err) => {
        if (err) reject(err);
      });
    });
  }

  close(): void {
    if (this.proc) {
      this.proc.stdin.end();
      this.proc = null;
      this.lines = null;
    }
  }
}

/** One-shot batch: a fresh endpoint process answers the whole list. */
export function runBatch(
  requests: KernelRequest[],
  options?: TransportOptions,
): KernelResponse[] {
  const [cmd, ...args] = commandFrom(options);
  const proc = spawnSync(cmd, args, {
    input: JSON.stringify(requests),
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (proc.status !== 0) {
    throw new Error(`kernel endpoint failed (${proc.status}): ${proc.stderr}`);
  }
  return JSON.parse(proc.stdout) as KernelResponse[];
}
