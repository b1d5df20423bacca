/**
 * MurmurHash3, 128-bit x64 variant, on BigInt arithmetic.
 *
 * The digest value is (h2 << 64) | h1, matching the collector side
 * bit for bit; everything downstream depends on that equivalence.
 */

const MASK64 = (1n << 64n) - 1n;
const C1 = 0x87c37b91114253d5n;
const C2 = 0x4cf5ad432745937fn;

function rotl64(x: bigint, r: bigint): bigint {
  return ((x << r) | (x >> (64n - r))) & MASK64;
}

function fmix64(k: bigint): bigint {
  k ^= k >> 33n;
  k = (k * 0xff51afd7ed558ccdn) & MASK64;
  k ^= k >> 33n;
  k = (k * 0xc4ceb9fe1a85ec53n) & MASK64;
  k ^= k >> 33n;
  return k;
}

/** Both 64-bit halves of the 128-bit hash. */
export function hash128Halves(
  data: Uint8Array,
  seed = 0,
): [bigint, bigint] {
  const nblocks = data.length >> 4;
  let h1 = BigInt(seed) & MASK64;
  let h2 = BigInt(seed) & MASK64;
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);

  for (let i = 0; i < nblocks; i++) {
    let k1 = view.getBigUint64(i * 16, true);
    let k2 = view.getBigUint64(i * 16 + 8, true);

    k1 = (k1 * C1) & MASK64;
    k1 = rotl64(k1, 31n);
    k1 = (k1 * C2) & MASK64;
    h1 ^= k1;
    h1 = rotl64(h1, 27n);
    h1 = (h1 + h2) & MASK64;
    h1 = (h1 * 5n + 0x52dce729n) & MASK64;

    k2 = (k2 * C2) & MASK64;
    k2 = rotl64(k2, 33n);
    k2 = (k2 * C1) & MASK64;
    h2 ^= k2;
    h2 = rotl64(h2, 31n);
    h2 = (h2 + h1) & MASK64;
    h2 = (h2 * 5n + 0x38495ab5n) & MASK64;
  }

  const tail = nblocks * 16;
  const tailLen = data.length & 15;
  let k1 = 0n;
  let k2 = 0n;
  for (let i = tailLen - 1; i >= 8; i--) {
    k2 ^= BigInt(data[tail + i]!) << BigInt((i - 8) * 8);
  }
  if (tailLen > 8) {
    k2 = (k2 * C2) & MASK64;
    k2 = rotl64(k2, 33n);
    k2 = (k2 * C1) & MASK64;
    h2 ^= k2;
  }
  for (let i = Math.min(tailLen, 8) - 1; i >= 0; i--) {
    k1 ^= BigInt(data[tail + i]!) << BigInt(i * 8);
  }
  if (tailLen > 0) {
    k1 = (k1 * C1) & MASK64;
    k1 = rotl64(k1, 31n);
    k1 = (k1 * C2) & MASK64;
    h1 ^= k1;
  }

  const len = BigInt(data.length);
  h1 ^= len;
  h2 ^= len;
  h1 = (h1 + h2) & MASK64;
  h2 = (h2 + h1) & MASK64;
  h1 = fmix64(h1);
  h2 = fmix64(h2);
  h1 = (h1 + h2) & MASK64;
  h2 = (h2 + h1) & MASK64;
  return [h1, h2];
}

/** The 128-bit hash as one unsigned BigInt: (h2 << 64) | h1. */
export function hash128(data: Uint8Array, seed = 0): bigint {
  const [h1, h2] = hash128Halves(data, seed);
  return (h2 << 64n) | h1;
}
