"""Campaign measurement process.

The collector owns one CoverageFilter per campaign. Producers (fuzzer
shims or the synthetic generator) send one 21-byte frame per execution
over a datagram endpoint; the collector folds each digest into the
filter and periodically reads the estimator off, emitting one row per
readout period into a CSV or JSON time series.

Endpoints are datagram-style: `unix:/path/to.sock` (default flavor,
lossless on a single host because senders block when the queue fills)
or `udp:host:port` (cross-host, best-effort). Producers locate the
endpoint through the LSCOV_ENDPOINT environment variable.

Two clocks are supported. Wall pacing reads the monotonic clock and is
the live-campaign default. Execution pacing derives time from the frame
count (t = execs/rate), which makes replays deterministic and lets a
recorded campaign re-run at full ingest speed while still landing rows
on the original readout grid; it is the replay default at 1,000
executions per virtual second.
"""

import csv
import io
import json
import logging
import os
import select
import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .bloom import (
    DEFAULT_EPSILON,
    DEFAULT_N_E,
    DEFAULT_PARAMS,
    CoverageFilter,
    FilterParams,
    OracleSet,
    SaturatedFilterError,
    derive_params,
)
from .frames import FrameError, decode_frame, iter_trace_chunks

log = logging.getLogger("lscov.collector")

ENDPOINT_ENV = "LSCOV_ENDPOINT"
DEFAULT_REPLAY_RATE = 1000.0

CSV_COLUMNS = (
    "t_sec", "execs", "coverage", "new_per_sec_ins", "new_per_sec_avg",
    "new_per_exec_ins_pct", "new_per_exec_avg_pct",
)


class EndpointBusyError(RuntimeError):
    """The requested ingest endpoint is already served by a live process."""


def parse_endpoint(spec: str):
    """Split an endpoint string into (kind, address).

    `unix:<path>` or a bare filesystem path -> ("unix", path);
    `udp:<host>:<port>` -> ("udp", (host, port)).
    """
    if spec.startswith("unix:"):
        path = spec[5:]
        if not path:
            raise ValueError("unix endpoint needs a socket path")
        return "unix", path
    if spec.startswith("udp:"):
        host, sep, port = spec[4:].rpartition(":")
        if not sep or not host:
            raise ValueError(f"udp endpoint must be udp:host:port, got {spec!r}")
        return "udp", (host, int(port))
    if "/" in spec or spec.endswith(".sock"):
        return "unix", spec
    raise ValueError(
        f"cannot parse endpoint {spec!r}; use unix:<path> or udp:<host>:<port>")


def bind_ingest_socket(endpoint: str) -> socket.socket:
    """Bind the collector side of an endpoint, failing loudly if busy.

    A leftover unix socket path from a crashed collector is detected by
    a connect probe (nobody answers) and swept away; a live listener
    raises EndpointBusyError instead.
    """
    kind, addr = parse_endpoint(endpoint)
    if kind == "unix":
        if os.path.exists(addr):
            probe = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
            try:
                probe.connect(addr)
            except (ConnectionRefusedError, OSError):
                os.unlink(addr)
            else:
                probe.close()
                raise EndpointBusyError(f"endpoint {addr} is already in use")
            finally:
                probe.close()
        sock = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
        sock.bind(addr)
    else:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.bind(addr)
        except OSError as exc:
            sock.close()
            raise EndpointBusyError(f"cannot bind {endpoint}: {exc}") from exc
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
    except OSError:
        pass
    return sock


class FrameSender:
    """Producer-side handle on a collector endpoint.

    Connected unix datagram sockets give flow control for free: send()
    blocks while the collector's queue is full, so no frame is dropped
    on a single host. UDP is fire-and-forget.
    """

    def __init__(self, endpoint: Optional[str] = None):
        if endpoint is None:
            endpoint = os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(
                f"no endpoint given and {ENDPOINT_ENV} is not set")
        kind, addr = parse_endpoint(endpoint)
        if kind == "unix":
            self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_DGRAM)
        else:
            self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.connect(addr)
        self.endpoint = endpoint

    def send_frame(self, raw: bytes) -> None:
        self._sock.send(raw)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "FrameSender":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class ReadoutRow:
    """One periodic sample of the campaign time series.

    The avg quantities are cumulative (coverage/t and coverage/execs);
    the ins quantities cover only the window since the previous row.
    `saturated` is collector-internal state, not a report column.
    """

    t_sec: float
    execs: int
    coverage: float
    new_per_sec_ins: float
    new_per_sec_avg: float
    new_per_exec_ins_pct: float
    new_per_exec_avg_pct: float
    saturated: bool = False

    def as_report_dict(self) -> dict:
        return {
            "t_sec": self.t_sec,
            "execs": self.execs,
            "coverage": self.coverage,
            "new_per_sec_ins": self.new_per_sec_ins,
            "new_per_sec_avg": self.new_per_sec_avg,
            "new_per_exec_ins_pct": self.new_per_exec_ins_pct,
            "new_per_exec_avg_pct": self.new_per_exec_avg_pct,
        }


@dataclass
class CampaignConfig:
    """Everything one collector run needs.

    Filter geometry comes from explicit n_bits/n_hashes when given,
    else is derived from the n_e/epsilon pair when either is given,
    else falls back to the 64 MB default profile.
    """

    n_e: Optional[int] = None
    epsilon: Optional[float] = None
    n_bits: Optional[int] = None
    n_hashes: Optional[int] = None
    period: float = 10.0
    endpoint: Optional[str] = None
    out: Optional[str] = None
    out_format: Optional[str] = None        # "csv" | "json"; None = by suffix
    snapshot: Optional[str] = None
    snapshot_period: Optional[float] = None
    replay: Optional[str] = None
    exact_oracle: bool = False
    pace: Optional[str] = None              # "wall" | "exec[:rate]"
    resume_from: Optional[str] = None
    duration: Optional[float] = None

    def __post_init__(self):
        if self.period < 1.0:
            raise ValueError(f"readout period must be >= 1 s, got {self.period}")

    def filter_params(self) -> FilterParams:
        if self.n_bits is not None or self.n_hashes is not None:
            if self.n_bits is None or self.n_hashes is None:
                raise ValueError("--n-bits and --n-hashes must be given together")
            return FilterParams(n_bits=self.n_bits, n_hashes=self.n_hashes)
        if self.n_e is not None or self.epsilon is not None:
            return derive_params(
                self.n_e if self.n_e is not None else DEFAULT_N_E,
                self.epsilon if self.epsilon is not None else DEFAULT_EPSILON)
        return DEFAULT_PARAMS

    def resolved_pace(self):
        """Returns ("wall", None) or ("exec", rate)."""
        pace = self.pace
        if pace is None:
            pace = "exec" if self.replay else "wall"
        if pace == "wall":
            return "wall", None
        if pace == "exec":
            return "exec", DEFAULT_REPLAY_RATE
        if pace.startswith("exec:"):
            rate = float(pace[5:])
            if rate <= 0:
                raise ValueError(f"exec pace rate must be positive, got {rate}")
            return "exec", rate
        raise ValueError(f"unknown pace {pace!r}; use wall or exec[:rate]")

    def report_format(self) -> str:
        if self.out_format:
            return self.out_format
        if self.out and str(self.out).endswith(".json"):
            return "json"
        return "csv"


class CollectorEngine:
    """State machine behind both the CLI collector and the service.

    ingest() is the hot path: decode, filter add, counters. Readouts
    are either driven externally (wall pacing, from the run loop or the
    service) or fire inline when execution-paced virtual time crosses a
    period boundary.
    """

    def __init__(self, config: CampaignConfig):
        self.config = config
        if config.resume_from:
            self.filter = CoverageFilter.from_file(config.resume_from)
            log.info("resumed filter from %s (adds=%d, ones=%d)",
                     config.resume_from, self.filter.adds, self.filter.ones)
        else:
            self.filter = CoverageFilter(config.filter_params())
        self.oracle = OracleSet() if config.exact_oracle else None
        self.rows: "list[ReadoutRow]" = []
        self.execs = self.filter.adds
        self.malformed = 0
        self.abnormal = 0
        self.overflowed = 0
        self.saturated = False
        self._pace_kind, self._pace_rate = config.resolved_pace()
        self._t0 = time.monotonic()
        self._base_execs = self.execs     # exec pacing starts at resume point
        self._last_t = 0.0
        self._last_cov = 0.0
        self._last_execs = self.execs
        self._next_boundary = config.period
        self._last_snapshot = time.monotonic()
        self._warned_dense = False
        # set once run() has bound its endpoint (live mode only)
        self.ready = threading.Event()

    # -- time ------------------------------------------------------------

    def now(self) -> float:
        """Campaign time in seconds under the configured pacing."""
        if self._pace_kind == "exec":
            return (self.execs - self._base_execs) / self._pace_rate
        return time.monotonic() - self._t0

    # -- ingest ----------------------------------------------------------

    def ingest(self, raw: bytes) -> bool:
        """Fold one frame in; malformed input is counted, never fatal."""
        try:
            frame = decode_frame(raw)
        except FrameError as exc:
            self.malformed += 1
            log.debug("dropped malformed frame: %s", exc)
            return False
        self.filter.add(frame.digest)
        if self.oracle is not None:
            self.oracle.add(frame.digest)
        self.execs += 1
        if frame.flags & 0x01:
            self.abnormal += 1
        if frame.flags & 0x02:
            self.overflowed += 1
        if self._pace_kind == "exec":
            t = (self.execs - self._base_execs) / self._pace_rate
            while t >= self._next_boundary:
                self._emit_row(self._next_boundary)
                self._next_boundary += self.config.period
        return True

    # -- readout ---------------------------------------------------------

    def _coverage_now(self) -> float:
        try:
            cov = self.filter.estimate()
        except SaturatedFilterError:
            if not self.saturated:
                log.error("filter saturated at %d execs; coverage frozen "
                          "at last estimate", self.execs)
            self.saturated = True
            return self._last_cov
        if self.filter.dense and not self._warned_dense:
            self._warned_dense = True
            log.warning("filter density %.1f%% passed the 90%% accuracy "
                        "threshold; consider a larger filter",
                        self.filter.density * 100)
        return cov

    def _emit_row(self, t: float) -> ReadoutRow:
        cov = self._coverage_now()
        execs = self.execs
        d_t = t - self._last_t
        d_cov = cov - self._last_cov
        d_execs = execs - self._last_execs
        row = ReadoutRow(
            t_sec=t,
            execs=execs,
            coverage=cov,
            new_per_sec_ins=d_cov / d_t if d_t > 0 else 0.0,
            new_per_sec_avg=cov / t if t > 0 else 0.0,
            new_per_exec_ins_pct=d_cov / d_execs * 100.0 if d_execs > 0 else 0.0,
            new_per_exec_avg_pct=cov / execs * 100.0 if execs > 0 else 0.0,
            saturated=self.saturated,
        )
        self.rows.append(row)
        self._last_t = t
        self._last_cov = cov
        self._last_execs = execs
        return row

    def readout(self, now: Optional[float] = None) -> ReadoutRow:
        """Emit one row at campaign time `now` (defaults to the clock)."""
        t = self.now() if now is None else now
        row = self._emit_row(t)
        if self._pace_kind == "exec":
            while self._next_boundary <= t:
                self._next_boundary += self.config.period
        return row

    def maybe_readout(self) -> Optional[ReadoutRow]:
        """Wall pacing driver: emit a row if a full period has elapsed."""
        if self._pace_kind != "wall":
            return None
        t = self.now()
        if t - self._last_t >= self.config.period:
            return self._emit_row(t)
        return None

    def flush_final(self) -> None:
        """Emit a closing row unless the series already ends at now().

        Guarantees at least one row even for an empty campaign.
        """
        t = self.now()
        if not self.rows or t > self._last_t:
            self._emit_row(t)

    # -- reports ---------------------------------------------------------

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            d = row.as_report_dict()
            writer.writerow([d[col] for col in CSV_COLUMNS])
        return buf.getvalue()

    def render_json(self) -> str:
        return json.dumps([r.as_report_dict() for r in self.rows],
                          indent=2) + "\n"

    def emit_report(self, path, fmt: Optional[str] = None) -> None:
        fmt = fmt or self.config.report_format()
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown report format {fmt!r}")
        text = self.render_csv() if fmt == "csv" else self.render_json()
        with open(path, "w", newline="") as fh:
            fh.write(text)

    # -- snapshots -------------------------------------------------------

    def snapshot(self, path) -> None:
        """Atomically write the filter snapshot; IO failure is logged
        and swallowed so a full disk cannot stop the measurement.
        """
        tmp = f"{path}.tmp"
        try:
            self.filter.to_file(tmp)
            os.replace(tmp, path)
        except OSError as exc:
            log.error("snapshot to %s failed: %s; continuing", path, exc)

    def _maybe_snapshot(self) -> None:
        cfg = self.config
        if not cfg.snapshot or not cfg.snapshot_period:
            return
        if time.monotonic() - self._last_snapshot >= cfg.snapshot_period:
            self.snapshot(cfg.snapshot)
            self._last_snapshot = time.monotonic()

    # -- status ----------------------------------------------------------

    def status(self) -> dict:
        """Point-in-time view for the service and CLI."""
        try:
            coverage = self.filter.estimate()
        except SaturatedFilterError:
            coverage = self._last_cov
        return {
            "execs": self.execs,
            "malformed": self.malformed,
            "abnormal": self.abnormal,
            "overflowed": self.overflowed,
            "coverage": coverage,
            "exact_distinct": self.oracle.count if self.oracle else None,
            "density": self.filter.density,
            "saturated": self.saturated or self.filter.saturated,
            "n_bits": self.filter.n_bits,
            "n_hashes": self.filter.n_hashes,
            "t_sec": self.now(),
            "rows": len(self.rows),
        }

    # -- drivers ----------------------------------------------------------

    def finalize(self) -> None:
        """Final row, final snapshot, report file if configured."""
        self.flush_final()
        if self.config.snapshot:
            self.snapshot(self.config.snapshot)
        if self.config.out:
            self.emit_report(self.config.out)

    def run_replay(self, path: Optional[str] = None) -> None:
        """Feed a recorded trace through ingest and finalize."""
        trace = path or self.config.replay
        if not trace:
            raise ValueError("no trace file to replay")
        for chunk in iter_trace_chunks(trace):
            self.ingest(chunk)
        self.finalize()

    def run(self, stop_event=None) -> None:
        """Live ingest loop; returns after stop_event (or duration) and
        finalization. Binds the endpoint, so startup fails fast when the
        address is taken.
        """
        endpoint = self.config.endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(
                f"no endpoint configured and {ENDPOINT_ENV} is not set")
        sock = bind_ingest_socket(endpoint)
        sock.setblocking(False)
        kind, addr = parse_endpoint(endpoint)
        log.info("collecting on %s (n_bits=%d, n_hashes=%d, period=%gs)",
                 endpoint, self.filter.n_bits, self.filter.n_hashes,
                 self.config.period)
        self.ready.set()
        deadline = (time.monotonic() + self.config.duration
                    if self.config.duration else None)
        try:
            while True:
                if stop_event is not None and stop_event.is_set():
                    break
                if deadline is not None and time.monotonic() >= deadline:
                    break
                ready, _, _ = select.select([sock], [], [], 0.05)
                if ready:
                    # drain everything queued before the next select
                    while True:
                        try:
                            raw = sock.recv(64)
                        except BlockingIOError:
                            break
                        self.ingest(raw)
                self.maybe_readout()
                self._maybe_snapshot()
        finally:
            sock.close()
            if kind == "unix":
                try:
                    os.unlink(addr)
                except OSError:
                    pass
            self.finalize()
