/**
 * Logic-state recording primitives: edge combination, a fixed-capacity
 * edge set safe to use on the hot path, canonical serialization, and
 * the 128-bit state digest.
 */

import { hash128 } from "./murmur3.js";

/** Size of a serialized digest in bytes. */
export const DIGEST_BYTES = 16;

/**
 * Branch-edge identifier for the transition prev -> cur:
 * rotate prev left by one bit (32-bit) and XOR with cur.
 * Direction-sensitive, so A->B and B->A stay distinct in general.
 */
export function combineEdge(prev: number, cur: number): number {
  const p = prev >>> 0;
  return (((p << 1) | (p >>> 31)) ^ cur) >>> 0;
}

/**
 * Fixed-capacity open-addressing set of 32-bit edge ids.
 *
 * Capacity never grows after construction, so recording stays
 * allocation-free no matter what the target does; inserts beyond
 * capacity are dropped and counted in `overflow`. Slot value 0 marks
 * an empty slot, so edge id 0 is tracked by a side flag.
 */
export class EdgeSet {
  static readonly DEFAULT_CAPACITY = 1 << 16;

  private readonly table: Uint32Array;
  private readonly mask: number;
  private hasZero = false;
  size = 0;
  overflow = 0;

  constructor(capacity: number = EdgeSet.DEFAULT_CAPACITY) {
    if (capacity < 1) {
      throw new RangeError(`capacity must be >= 1, got ${capacity}`);
    }
    // The table is kept one power of two above capacity so probe
    // chains stay short even when the set is allowed to fill up.
    let slots = 1;
    while (slots < capacity * 2) slots *= 2;
    this.table = new Uint32Array(slots);
    this.mask = slots - 1;
    this.capacity = capacity;
  }

  readonly capacity: number;

  /** Insert an edge; returns true if it was not present before. */
  add(edge: number): boolean {
    const e = edge >>> 0;
    if (e === 0) {
      if (this.hasZero) return false;
      if (this.size >= this.capacity) {
        this.overflow++;
        return false;
      }
      this.hasZero = true;
      this.size++;
      return true;
    }
    // Fibonacci hashing spreads consecutive ids across the table.
    let i = (Math.imul(e, 0x9e3779b1) >>> 0) & this.mask;
    for (;;) {
      const slot = this.table[i]!;
      if (slot === e) return false;
      if (slot === 0) break;
      i = (i + 1) & this.mask;
    }
    if (this.size >= this.capacity) {
      this.overflow++;
      return false;
    }
    this.table[i] = e;
    this.size++;
    return true;
  }

  has(edge: number): boolean {
    const e = edge >>> 0;
    if (e === 0) return this.hasZero;
    let i = (Math.imul(e, 0x9e3779b1) >>> 0) & this.mask;
    for (;;) {
      const slot = this.table[i]!;
      if (slot === e) return true;
      if (slot === 0) return false;
      i = (i + 1) & this.mask;
    }
  }

  /** All stored edges, unordered. */
  edges(): number[] {
    const out: number[] = [];
    if (this.hasZero) out.push(0);
    for (const v of this.table) {
      if (v !== 0) out.push(v);
    }
    return out;
  }

  clear(): void {
    this.table.fill(0);
    this.hasZero = false;
    this.size = 0;
    this.overflow = 0;
  }
}

/**
 * Canonical byte form of an edge set: edges sorted ascending, each
 * packed as a little-endian u32. Equal sets always serialize
 * identically, whatever the insertion order was.
 */
export function canonicalBytes(edges: Iterable<number>): Uint8Array {
  const sorted = Array.from(edges, (e) => e >>> 0).sort((a, b) => a - b);
  const out = new Uint8Array(sorted.length * 4);
  const view = new DataView(out.buffer);
  sorted.forEach((e, i) => view.setUint32(i * 4, e, true));
  return out;
}

/** 128-bit digest of an edge set (hash of its canonical bytes). */
export function digestEdges(edges: Iterable<number>): bigint {
  return hash128(canonicalBytes(edges));
}

/**
 * Digest of the logic state reached by visiting `blocks` in order,
 * starting from previous-block 0. This mirrors the recording path
 * exactly and is the cross-language parity surface: the collector's
 * digest of the same block sequence is bit-identical.
 */
export function digestBlockSequence(blocks: Iterable<number>): bigint {
  const edges = new Set<number>();
  let prev = 0;
  for (const block of blocks) {
    edges.add(combineEdge(prev, block));
    prev = block >>> 0;
  }
  return digestEdges(edges);
}

/** Render a digest as the 32-hex-char form used by the CLI tools. */
export function digestHex(digest: bigint): string {
  return digest.toString(16).padStart(32, "0");
}
