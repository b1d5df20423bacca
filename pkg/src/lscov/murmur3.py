"""Pure-Python MurmurHash3, x64 128-bit variant.

Bit-exact with the reference C++ implementation for byte-string input.
Only the x64 128-bit variant is provided; it is the one used to digest
logic states throughout this package. Returned values follow the common
Python binding convention: the unsigned 128-bit integer is
``(h2 << 64) | h1`` where ``h1``/``h2`` are the two 64-bit lanes of the
reference implementation.
"""

import struct

_MASK64 = 0xFFFFFFFFFFFFFFFF
_C1 = 0x87C37B91114253D5
_C2 = 0x4CF5AD432745937F


def _rotl64(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & _MASK64


def _fmix64(k: int) -> int:
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & _MASK64
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & _MASK64
    k ^= k >> 33
    return k


def hash128_halves(data: bytes, seed: int = 0) -> "tuple[int, int]":
    """Hash ``data`` and return the two 64-bit lanes ``(h1, h2)``."""
    length = len(data)
    h1 = seed & _MASK64
    h2 = seed & _MASK64

    n_blocks = length // 16
    for off in range(0, n_blocks * 16, 16):
        k1, k2 = struct.unpack_from("<QQ", data, off)

        k1 = (k1 * _C1) & _MASK64
        k1 = _rotl64(k1, 31)
        k1 = (k1 * _C2) & _MASK64
        h1 ^= k1
        h1 = _rotl64(h1, 27)
        h1 = (h1 + h2) & _MASK64
        h1 = (h1 * 5 + 0x52DCE729) & _MASK64

        k2 = (k2 * _C2) & _MASK64
        k2 = _rotl64(k2, 33)
        k2 = (k2 * _C1) & _MASK64
        h2 ^= k2
        h2 = _rotl64(h2, 31)
        h2 = (h2 + h1) & _MASK64
        h2 = (h2 * 5 + 0x38495AB5) & _MASK64

    tail = data[n_blocks * 16:]
    k1 = 0
    k2 = 0
    tail_len = len(tail)
    for i in range(tail_len - 1, 7, -1):
        k2 = (k2 << 8) | tail[i]
    for i in range(min(tail_len, 8) - 1, -1, -1):
        k1 = (k1 << 8) | tail[i]
    if tail_len > 8:
        k2 = (k2 * _C2) & _MASK64
        k2 = _rotl64(k2, 33)
        k2 = (k2 * _C1) & _MASK64
        h2 ^= k2
    if tail_len > 0:
        k1 = (k1 * _C1) & _MASK64
        k1 = _rotl64(k1, 31)
        k1 = (k1 * _C2) & _MASK64
        h1 ^= k1

    h1 ^= length
    h2 ^= length
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64
    h1 = _fmix64(h1)
    h2 = _fmix64(h2)
    h1 = (h1 + h2) & _MASK64
    h2 = (h2 + h1) & _MASK64
    return h1, h2


def hash128(data: bytes, seed: int = 0) -> int:
    """Hash ``data`` to an unsigned 128-bit integer, ``(h2 << 64) | h1``."""
    h1, h2 = hash128_halves(data, seed)
    return (h2 << 64) | h1
