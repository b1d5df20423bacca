"""Distinct counting of logic-state digests in fixed memory.

A bloom filter absorbs one 128-bit digest per execution; the number of
set bits then yields an estimate of how many distinct digests were ever
added. Adding stays O(n_hashes) regardless of how many states exist, and
the estimate reads a single counter, so the measurement cost never grows
with coverage.

The estimator is ln(1 - X/n_b) / (n_h * ln(1 - 1/n_b)) for X set bits.
It diverges as X approaches n_b, so a full filter raises
SaturatedFilterError instead of returning infinity, and a density
warning threshold is exposed at 90% where accuracy degrades.
"""

import math
import struct
import threading
from dataclasses import dataclass

from .logic_state import digest_halves

SNAPSHOT_MAGIC = b"LSCF"
SNAPSHOT_VERSION = 1
_SNAPSHOT_HEADER = struct.Struct("<4sHHQQQ")

# Accuracy was characterized up to this fill ratio; past it the estimate
# still computes but should be treated as degraded.
DENSITY_WARNING = 0.90

_LN2_SQ = math.log(2) ** 2

# 512 Mbit = 64 MB filter with 4 hashes: the campaign-scale profile
# (one day at 1,000 execs/s with epsilon 0.05, rounded to a power of two).
DEFAULT_N_E = 86_400_000
DEFAULT_EPSILON = 0.05


class SaturatedFilterError(RuntimeError):
    """Every bit is set; the cardinality estimate is undefined."""


class SnapshotFormatError(ValueError):
    """Snapshot bytes are not a valid serialized filter."""


@dataclass(frozen=True)
class FilterParams:
    """Bloom filter geometry: n_bits array size, n_hashes probes per add."""

    n_bits: int
    n_hashes: int

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError(f"n_bits must be positive, got {self.n_bits}")
        if not 1 <= self.n_hashes <= 16:
            raise ValueError(
                f"n_hashes must be in [1, 16], got {self.n_hashes}")


DEFAULT_PARAMS = FilterParams(n_bits=1 << 29, n_hashes=4)


def derive_params(n_e: int, epsilon: float) -> FilterParams:
    """Size a filter for n_e expected distinct states at false-positive
    rate epsilon: n_bits = ceil(-n_e ln eps / (ln 2)^2), n_hashes =
    round(-log2 eps) clamped to at least 1 (half-up rounding).
    """
    if n_e < 1:
        raise ValueError(f"n_e must be at least 1, got {n_e}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    n_bits = math.ceil(-n_e * math.log(epsilon) / _LN2_SQ)
    n_hashes = max(1, math.floor(-math.log2(epsilon) + 0.5))
    return FilterParams(n_bits=n_bits, n_hashes=n_hashes)


def bit_indices(digest: int, params: FilterParams) -> "list[int]":
    """The n_hashes filter positions for a digest.

    Double hashing over the digest's two 64-bit lanes:
    index_i = (h1 + i * h2) mod n_bits.
    """
    h1, h2 = digest_halves(digest)
    n_bits = params.n_bits
    return [(h1 + i * h2) % n_bits for i in range(params.n_hashes)]


class CoverageFilter:
    """Bloom filter over digests with an incrementally maintained
    set-bit count, so estimates are O(1) at readout time.

    Adds are serialized by an internal lock (multiple producers are
    legal); `estimate` reads the counter without taking the lock, so a
    concurrent reader sees a value at most a few in-flight adds stale
    and never blocks ingestion.
    """

    MIN_BITS = 64

    def __init__(self, params: FilterParams = DEFAULT_PARAMS):
        if params.n_bits < self.MIN_BITS:
            raise ValueError(
                f"filter needs at least {self.MIN_BITS} bits, "
                f"got {params.n_bits}")
        self.params = params
        self._bits = bytearray((params.n_bits + 7) // 8)
        self._ones = 0
        self._adds = 0
        self._lock = threading.Lock()

    @property
    def n_bits(self) -> int:
        return self.params.n_bits

    @property
    def n_hashes(self) -> int:
        return self.params.n_hashes

    @property
    def ones(self) -> int:
        return self._ones

    @property
    def adds(self) -> int:
        return self._adds

    @property
    def density(self) -> float:
        return self._ones / self.params.n_bits

    @property
    def saturated(self) -> bool:
        return self._ones >= self.params.n_bits

    @property
    def dense(self) -> bool:
        """True past the density threshold where accuracy degrades."""
        return self.density >= DENSITY_WARNING

    def add(self, digest: int) -> int:
        """Set the digest's bit positions; returns how many were fresh."""
        h1, h2 = digest_halves(digest)
        n_bits = self.params.n_bits
        bits = self._bits
        new = 0
        with self._lock:
            idx = h1 % n_bits
            step = h2 % n_bits
            for _ in range(self.params.n_hashes):
                byte, mask = idx >> 3, 1 << (idx & 7)
                if not bits[byte] & mask:
                    bits[byte] |= mask
                    new += 1
                idx += step
                if idx >= n_bits:
                    idx -= n_bits
            self._ones += new
            self._adds += 1
        return new

    def __contains__(self, digest: int) -> bool:
        bits = self._bits
        return all(
            bits[i >> 3] & (1 << (i & 7))
            for i in bit_indices(digest, self.params))

    def estimate(self) -> float:
        """Estimated count of distinct digests ever added.

        ln(1 - X/n_b) / (n_h * ln(1 - 1/n_b)) with X the set-bit count.
        Raises SaturatedFilterError when X = n_b (the formula diverges).
        """
        ones = self._ones
        n_bits = self.params.n_bits
        if ones >= n_bits:
            raise SaturatedFilterError(
                f"all {n_bits} bits set; distinct count unrecoverable")
        return math.log1p(-ones / n_bits) / (
            self.params.n_hashes * math.log1p(-1.0 / n_bits))

    def scan_popcount(self) -> int:
        """Full-scan set-bit count; verification hook for the
        incrementally maintained `ones` counter.
        """
        return int.from_bytes(self._bits, "little").bit_count()

    def __eq__(self, other) -> bool:
        if isinstance(other, CoverageFilter):
            return (self.params == other.params
                    and self._adds == other._adds
                    and self._ones == other._ones
                    and self._bits == other._bits)
        return NotImplemented

    def serialize(self) -> bytes:
        """Snapshot: magic | version u16 | n_hashes u16 | n_bits u64 |
        adds u64 | ones u64 | bitmap, all little-endian.
        """
        with self._lock:
            header = _SNAPSHOT_HEADER.pack(
                SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.params.n_hashes,
                self.params.n_bits, self._adds, self._ones)
            return header + bytes(self._bits)

    @classmethod
    def deserialize(cls, raw: bytes) -> "CoverageFilter":
        if len(raw) < _SNAPSHOT_HEADER.size:
            raise SnapshotFormatError(
                f"snapshot truncated: {len(raw)} bytes is shorter than "
                f"the {_SNAPSHOT_HEADER.size}-byte header")
        magic, version, n_hashes, n_bits, adds, ones = \
            _SNAPSHOT_HEADER.unpack_from(raw)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        try:
            params = FilterParams(n_bits=n_bits, n_hashes=n_hashes)
        except ValueError as exc:
            raise SnapshotFormatError(str(exc)) from exc
        n_bytes = (n_bits + 7) // 8
        body = raw[_SNAPSHOT_HEADER.size:]
        if len(body) != n_bytes:
            raise SnapshotFormatError(
                f"bitmap length {len(body)} does not match the declared "
                f"{n_bits} bits ({n_bytes} bytes)")
        filt = cls(params)
        filt._bits[:] = body
        if filt.scan_popcount() != ones:
            raise SnapshotFormatError(
                "ones field does not match bitmap popcount")
        filt._ones = ones
        filt._adds = adds
        return filt

    def to_file(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.serialize())

    @classmethod
    def from_file(cls, path) -> "CoverageFilter":
        with open(path, "rb") as fh:
            return cls.deserialize(fh.read())


class OracleSet:
    """Exact distinct-digest set, for desk-scale validation only.

    Memory grows with the number of distinct states, which is precisely
    what the filter exists to avoid; never use this at campaign scale.
    """

    __slots__ = ("_digests", "_lock")

    def __init__(self):
        self._digests = set()
        self._lock = threading.Lock()

    def add(self, digest: int) -> bool:
        """Insert; returns True iff the digest was new."""
        with self._lock:
            if digest in self._digests:
                return False
            self._digests.add(digest)
            return True

    @property
    def count(self) -> int:
        return len(self._digests)

    def __contains__(self, digest: int) -> bool:
        return digest in self._digests

    def __len__(self) -> int:
        return len(self._digests)


def empirical_error_bound(params: FilterParams, estimate: float,
                          confidence: float = 0.9, trials: int = 20,
                          seed: int = 0) -> "tuple[float, float]":
    """Simulation-calibrated interval around a point estimate.

    Runs `trials` fresh filters with round(estimate) distinct random
    digests each, measures the spread of their estimates, and maps the
    confidence quantile of the relative deviation back around the given
    estimate. This is an artifact-local calibration, not a published
    bound; cost scales with the estimate, so it is desk-scale only.
    """
    import random

    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if trials < 2:
        raise ValueError(f"need at least 2 trials, got {trials}")
    true_n = max(1, round(estimate))
    rng = random.Random(seed)
    deviations = []
    for _ in range(trials):
        filt = CoverageFilter(params)
        for _ in range(true_n):
            filt.add(rng.getrandbits(128))
        deviations.append(abs(filt.estimate() - true_n) / true_n)
    deviations.sort()
    rank = min(trials - 1, math.ceil(confidence * trials) - 1)
    spread = deviations[rank]
    return estimate / (1.0 + spread), estimate * (1.0 + spread)
