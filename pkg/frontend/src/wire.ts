/**
 * wire.ts — array encoding for the kernel endpoint.
 *
 * Float64Array payloads travel as base64 of their little-endian bytes, so
 * values round-trip bit for bit (including infinities). Read-only inputs
 * are never duplicated: `viewOf` wraps the caller's buffer in a zero-copy
 * Buffer view and base64 encoding streams straight from it.
 */

export interface WireArray {
  b64: string;
  shape: number[];
}

const LITTLE_ENDIAN =
  new Uint8Array(new Float64Array([1]).buffer)[7] === 0x3f;

/** Zero-copy Buffer view over a typed array (no bytes are duplicated). */
export function viewOf(view: ArrayBufferView): Buffer {
  return Buffer.from(view.buffer, view.byteOffset, view.byteLength);
}

/** Encode a Float64Array (with its logical shape) for the wire. */
export function encodeArray(values: Float64Array, shape: number[]): WireArray {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== values.length) {
    throw new RangeError(
      `shape [${shape.join(", ")}] holds ${count} values, buffer has ${values.length}`,
    );
  }
  if (!LITTLE_ENDIAN) {
    // byte-swap fallback for exotic hosts; normal platforms take the
    // zero-copy path below
    const swapped = Buffer.from(viewOf(values));
    swapped.swap64();
    return { b64: swapped.toString("base64"), shape };
  }
  return { b64: viewOf(values).toString("base64"), shape };
}

/** Decode a wire array into a fresh, aligned Float64Array. */
export function decodeArray(wire: WireArray): Float64Array {
  const bytes = Buffer.from(wire.b64, "base64");
  if (bytes.byteLength % 8 !== 0) {
    throw new RangeError(`payload of ${bytes.byteLength} bytes is not float64-aligned`);
  }
  // Buffer.from may sit unaligned inside Node's pool; copy into an owned,
  // 8-byte-aligned buffer before viewing as float64
  const out = new Float64Array(bytes.byteLength / 8);
  new Uint8Array(out.buffer).set(bytes);
  if (!LITTLE_ENDIAN) {
    viewOf(out).swap64();
  }
  return out;
}
