"""Logic states: the set of branch edges one execution satisfied.

An edge id combines the previous and current block ids in 32-bit
arithmetic so that direction survives (a->b and b->a hash apart) and a
self edge a->a stays nonzero. A logic state erases order and repetition:
it is just the set of edge ids seen during one execution. Two
executions that exercise the same branch outcomes, in whatever order or
multiplicity, land on the same state.

States are digested to 128 bits through a canonical byte encoding so a
state can be shipped in a fixed-size frame and counted by the bloom
filter without retaining the set itself.
"""

import struct

from .murmur3 import hash128

MASK32 = 0xFFFFFFFF
DIGEST_BYTES = 16


def combine_edge(prev: int, cur: int) -> int:
    """Edge id of the branch ``prev -> cur``: rotl1(prev) XOR cur, 32-bit."""
    p = prev & MASK32
    return (((p << 1) | (p >> 31)) & MASK32) ^ (cur & MASK32)


class LogicState:
    """Mutable per-execution accumulator of satisfied branch edges."""

    __slots__ = ("_edges",)

    def __init__(self, edges=()):
        self._edges = {e & MASK32 for e in edges}

    def record(self, edge: int) -> None:
        """Add one satisfied edge. Re-recording is a no-op by design."""
        self._edges.add(edge & MASK32)

    def record_block(self, prev: int, cur: int) -> int:
        """Record the edge for block transition ``prev -> cur``, return it."""
        e = combine_edge(prev, cur)
        self._edges.add(e)
        return e

    @property
    def edges(self) -> frozenset:
        return frozenset(self._edges)

    def __len__(self) -> int:
        return len(self._edges)

    def __contains__(self, edge: int) -> bool:
        return (edge & MASK32) in self._edges

    def __iter__(self):
        return iter(self._edges)

    def __eq__(self, other) -> bool:
        if isinstance(other, LogicState):
            return self._edges == other._edges
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._edges))

    def __repr__(self) -> str:
        return f"LogicState({sorted(self._edges)!r})"

    def canonical_bytes(self) -> bytes:
        """Canonical encoding: edge ids ascending, 4 bytes little-endian each.

        The empty state encodes to the empty byte string.
        """
        ordered = sorted(self._edges)
        return struct.pack(f"<{len(ordered)}I", *ordered)

    def digest(self) -> int:
        """128-bit digest of the canonical encoding."""
        return hash128(self.canonical_bytes())


def digest_to_bytes(digest: int) -> bytes:
    """Digest as 16 bytes: low 64-bit lane first, both little-endian."""
    return struct.pack("<QQ", digest & 0xFFFFFFFFFFFFFFFF, digest >> 64)


def digest_from_bytes(raw: bytes) -> int:
    if len(raw) != DIGEST_BYTES:
        raise ValueError(f"digest must be {DIGEST_BYTES} bytes, got {len(raw)}")
    lo, hi = struct.unpack("<QQ", raw)
    return (hi << 64) | lo


def digest_halves(digest: int) -> "tuple[int, int]":
    """Split a digest into its two 64-bit lanes ``(h1, h2)``."""
    return digest & 0xFFFFFFFFFFFFFFFF, digest >> 64


def digest_block_sequence(blocks) -> int:
    """Digest of the logic state traced by a block id sequence.

    The recorder starts from previous block 0, so the first block of the
    sequence contributes the edge ``combine_edge(0, first)``. This is the
    exact semantics instrumented targets use, which makes this function
    the cross-language parity surface: any recorder that sees the same
    block sequence must produce the same digest.
    """
    state = LogicState()
    prev = 0
    for b in blocks:
        prev_cur = combine_edge(prev, b)
        state.record(prev_cur)
        prev = b & MASK32
    return state.digest()
