/**
 * The 21-byte digest frame: the only thing that crosses the process
 * boundary between an instrumented target and the collector.
 *
 * Layout: "LSC" | version 0x01 | flags u8 | digest lo u64 LE | hi u64 LE.
 */

export const FRAME_MAGIC = new Uint8Array([0x4c, 0x53, 0x43]); // "LSC"
export const FRAME_VERSION = 0x01;
export const FRAME_LEN = 21;

/** flags bit 0: execution terminated abnormally (crash/signal path). */
export const FLAG_ABNORMAL = 0x01;
/** flags bit 1: the target-side edge set overflowed (digest partial). */
export const FLAG_EDGE_OVERFLOW = 0x02;

const MASK64 = (1n << 64n) - 1n;

export function encodeFrame(digest: bigint, flags = 0): Uint8Array {
  if (flags < 0 || flags > 0xff) {
    throw new RangeError(`flags out of range: ${flags}`);
  }
  const out = new Uint8Array(FRAME_LEN);
  out.set(FRAME_MAGIC, 0);
  out[3] = FRAME_VERSION;
  out[4] = flags;
  const view = new DataView(out.buffer);
  view.setBigUint64(5, digest & MASK64, true);
  view.setBigUint64(13, (digest >> 64n) & MASK64, true);
  return out;
}

export interface Frame {
  digest: bigint;
  flags: number;
}

export function decodeFrame(raw: Uint8Array): Frame {
  if (raw.length !== FRAME_LEN) {
    throw new RangeError(`frame must be ${FRAME_LEN} bytes, got ${raw.length}`);
  }
  if (raw[0] !== 0x4c || raw[1] !== 0x53 || raw[2] !== 0x43) {
    throw new RangeError("bad frame magic");
  }
  if (raw[3] !== FRAME_VERSION) {
    throw new RangeError(`unknown frame version ${raw[3]}`);
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const lo = view.getBigUint64(5, true);
  const hi = view.getBigUint64(13, true);
  return { digest: (hi << 64n) | lo, flags: raw[4]! };
}

/** Split a trace-file buffer into frames (ignores a partial tail). */
export function framesFromTrace(buf: Uint8Array): Frame[] {
  const frames: Frame[] = [];
  for (let off = 0; off + FRAME_LEN <= buf.length; off += FRAME_LEN) {
    frames.push(decodeFrame(buf.subarray(off, off + FRAME_LEN)));
  }
  return frames;
}
