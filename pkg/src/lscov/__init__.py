"""lscov: logic state coverage for fuzzing campaigns.

A logic state is the set of branch edges an execution satisfied, with
order and repetition erased. Counting distinct logic states over a
campaign gives a coverage signal that keeps growing (and keeps
discriminating between fuzzers) long after plain branch coverage has
flattened out.

The package splits into small layers:

- ``murmur3``: the 128-bit hash used to digest logic states.
- ``logic_state``: edge ids, per-execution state accumulation, digests.
- ``bloom``: the fixed-memory distinct counter and its snapshots.
- ``frames``: the 21-byte wire frame and trace files.
- ``collector``: campaign engine, ingest sockets, readout time series.
- ``synth``: synthetic control-flow graphs for calibration and checks.
- ``service``: FastAPI control plane; ``cli``: command line front end.
"""

from .bloom import (
    CoverageFilter,
    FilterParams,
    OracleSet,
    SaturatedFilterError,
    SnapshotFormatError,
    derive_params,
)
from .logic_state import LogicState, combine_edge, digest_block_sequence
from .frames import decode_frame, encode_frame

__version__ = "0.1.0"

__all__ = [
    "CoverageFilter",
    "FilterParams",
    "OracleSet",
    "SaturatedFilterError",
    "SnapshotFormatError",
    "derive_params",
    "LogicState",
    "combine_edge",
    "digest_block_sequence",
    "decode_frame",
    "encode_frame",
    "__version__",
]
