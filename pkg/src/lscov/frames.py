"""The 21-byte execution frame and trace files.

One frame per execution crosses the process boundary: magic "LSC" plus
a version byte, one flags byte, and the 16-byte logic-state digest.
Datagram framing means a crashing producer loses at most its own final
frame, never stream synchronization. A trace file is just concatenated
frames, which makes recorded campaigns replayable bit-for-bit.
"""

import struct
from dataclasses import dataclass
from typing import Iterator

from .logic_state import digest_from_bytes, digest_to_bytes

FRAME_MAGIC = b"LSC"
FRAME_VERSION = 1
FRAME_LEN = 21

FLAG_ABNORMAL = 0x01      # execution terminated abnormally (informational)
FLAG_EDGE_OVERFLOW = 0x02  # producer's edge set overflowed; digest partial

_PREFIX = FRAME_MAGIC + bytes([FRAME_VERSION])


class FrameError(ValueError):
    """Raised for malformed frame bytes; callers count and drop."""


@dataclass(frozen=True)
class Frame:
    digest: int
    flags: int = 0

    @property
    def abnormal(self) -> bool:
        return bool(self.flags & FLAG_ABNORMAL)

    @property
    def overflowed(self) -> bool:
        return bool(self.flags & FLAG_EDGE_OVERFLOW)


def encode_frame(digest: int, flags: int = 0) -> bytes:
    if not 0 <= flags <= 0xFF:
        raise ValueError(f"flags must fit one byte, got {flags}")
    return _PREFIX + struct.pack("<B", flags) + digest_to_bytes(digest)


def decode_frame(raw: bytes) -> Frame:
    if len(raw) != FRAME_LEN:
        raise FrameError(f"frame must be {FRAME_LEN} bytes, got {len(raw)}")
    if raw[:3] != FRAME_MAGIC:
        raise FrameError(f"bad magic {raw[:3]!r}")
    if raw[3] != FRAME_VERSION:
        raise FrameError(f"unsupported frame version {raw[3]}")
    return Frame(digest=digest_from_bytes(raw[5:21]), flags=raw[4])


def iter_trace_chunks(path) -> Iterator[bytes]:
    """Yield raw 21-byte chunks from a trace file.

    A trailing partial chunk is yielded as-is so the consumer's
    malformed-frame accounting sees it; fixed-length framing keeps the
    rest of the stream aligned regardless.
    """
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(FRAME_LEN)
            if not chunk:
                return
            yield chunk


class TraceWriter:
    """Append-only trace file of encoded frames."""

    def __init__(self, path):
        self._fh = open(path, "ab")

    def write(self, digest: int, flags: int = 0) -> None:
        self._fh.write(encode_frame(digest, flags))

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
