import json
import math
import os
import random
import socket
import threading
import time

import pytest

from lscov.bloom import CoverageFilter, FilterParams
from lscov.collector import (
    CSV_COLUMNS,
    ENDPOINT_ENV,
    CampaignConfig,
    CollectorEngine,
    EndpointBusyError,
    FrameSender,
    bind_ingest_socket,
    parse_endpoint,
)
from lscov.frames import encode_frame


def distinct_frames(n, seed=0, flags=0):
    rng = random.Random(seed)
    return [encode_frame(rng.getrandbits(128), flags) for _ in range(n)]


def exec_paced_engine(rate=100.0, period=10.0, **kw):
    kw.setdefault("n_bits", 1 << 16)
    kw.setdefault("n_hashes", 4)
    return CollectorEngine(
        CampaignConfig(pace=f"exec:{rate}", period=period, **kw))


class TestParseEndpoint:
    def test_unix_scheme(self):
        assert parse_endpoint("unix:/tmp/x.sock") == ("unix", "/tmp/x.sock")

    def test_bare_path_is_unix(self):
        assert parse_endpoint("./x.sock") == ("unix", "./x.sock")

    def test_udp_scheme(self):
        assert parse_endpoint("udp:127.0.0.1:9000") == \
            ("udp", ("127.0.0.1", 9000))

    @pytest.mark.parametrize("bad", ["unix:", "udp:9000", "udp:host",
                                     "whatisthis", "tcp:1:2"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            parse_endpoint(bad)


class TestCampaignConfig:
    def test_explicit_geometry_wins(self):
        config = CampaignConfig(n_bits=4096, n_hashes=3, n_e=10, epsilon=0.5)
        assert config.filter_params() == FilterParams(4096, 3)

    def test_derivation_pair(self):
        config = CampaignConfig(n_e=10_000, epsilon=0.01)
        assert config.filter_params() == FilterParams(95_851, 7)

    def test_epsilon_alone_uses_default_population(self):
        params = CampaignConfig(epsilon=0.05).filter_params()
        assert params == CampaignConfig(n_e=86_400_000).filter_params()

    def test_default_profile(self):
        params = CampaignConfig().filter_params()
        assert params == FilterParams(n_bits=1 << 29, n_hashes=4)

    def test_half_given_geometry_rejected(self):
        with pytest.raises(ValueError):
            CampaignConfig(n_bits=4096).filter_params()

    def test_period_floor(self):
        with pytest.raises(ValueError):
            CampaignConfig(period=0.5)

    def test_pace_resolution(self):
        assert CampaignConfig().resolved_pace() == ("wall", None)
        assert CampaignConfig(replay="x").resolved_pace() == ("exec", 1000.0)
        assert CampaignConfig(pace="exec:250").resolved_pace() == \
            ("exec", 250.0)
        assert CampaignConfig(replay="x", pace="wall").resolved_pace() == \
            ("wall", None)
        with pytest.raises(ValueError):
            CampaignConfig(pace="exec:0").resolved_pace()
        with pytest.raises(ValueError):
            CampaignConfig(pace="warp").resolved_pace()

    def test_report_format_by_suffix(self):
        assert CampaignConfig(out="r.csv").report_format() == "csv"
        assert CampaignConfig(out="r.json").report_format() == "json"
        assert CampaignConfig(out="r.json",
                              out_format="csv").report_format() == "csv"


class TestIngest:
    def test_valid_frame_accepted(self):
        engine = exec_paced_engine()
        assert engine.ingest(encode_frame(123)) is True
        assert engine.execs == 1
        assert engine.filter.adds == 1

    def test_duplicate_frames_count_execs_not_coverage(self):
        engine = exec_paced_engine()
        frame = encode_frame(99)
        engine.ingest(frame)
        ones_after_first = engine.filter.ones
        engine.ingest(frame)
        assert engine.execs == 2
        assert engine.filter.ones == ones_after_first

    def test_truncated_frame_counted_malformed(self):
        engine = exec_paced_engine()
        assert engine.ingest(encode_frame(1)[:20]) is False
        assert engine.malformed == 1
        assert engine.execs == 0

    def test_garbage_never_raises(self):
        engine = exec_paced_engine()
        for junk in (b"", b"\x00" * 21, b"LSC\x02" + b"\x00" * 17, b"x" * 40):
            engine.ingest(junk)
        assert engine.malformed == 4

    def test_abnormal_flag_counted(self):
        engine = exec_paced_engine()
        engine.ingest(encode_frame(1, flags=0x01))
        engine.ingest(encode_frame(2, flags=0x02))
        engine.ingest(encode_frame(3, flags=0x03))
        assert engine.abnormal == 2
        assert engine.overflowed == 2


class TestReadout:
    def test_no_rows_before_first_boundary(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(999):
            engine.ingest(frame)
        assert engine.rows == []

    def test_boundary_row_lands_on_the_grid(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1000):
            engine.ingest(frame)
        assert len(engine.rows) == 1
        row = engine.rows[0]
        assert row.t_sec == 10.0
        assert row.execs == 1000

    def test_first_window_rates(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1000):
            engine.ingest(frame)
        row = engine.rows[0]
        assert row.coverage == pytest.approx(engine.filter.estimate())
        assert row.new_per_sec_ins == row.coverage / 10.0
        assert row.new_per_sec_avg == row.coverage / 10.0
        assert row.new_per_exec_ins_pct == row.coverage / 1000 * 100.0
        assert row.new_per_exec_avg_pct == row.coverage / 1000 * 100.0

    def test_idle_window_has_zero_instantaneous_rates(self):
        engine = exec_paced_engine(rate=100, period=10)
        frames = distinct_frames(1000)
        for frame in frames:
            engine.ingest(frame)
        # second window repeats the same digests: no new coverage
        for frame in frames:
            engine.ingest(frame)
        assert len(engine.rows) == 2
        first, second = engine.rows
        assert second.coverage == first.coverage
        assert second.new_per_sec_ins == 0.0
        assert second.new_per_exec_ins_pct == 0.0
        assert second.execs == 2000

    def test_coverage_monotone_and_avg_consistent(self):
        engine = exec_paced_engine(rate=50, period=10)
        for frame in distinct_frames(2600, seed=5):
            engine.ingest(frame)
        engine.flush_final()
        assert len(engine.rows) >= 5
        last = 0.0
        for row in engine.rows:
            assert row.coverage >= last
            last = row.coverage
            if row.t_sec > 0:
                assert math.isclose(row.new_per_sec_avg * row.t_sec,
                                    row.coverage, rel_tol=1e-9)
            if row.execs > 0:
                assert math.isclose(row.new_per_exec_avg_pct * row.execs,
                                    row.coverage * 100.0, rel_tol=1e-9)

    def test_wall_pace_readout(self):
        engine = CollectorEngine(
            CampaignConfig(n_bits=1 << 16, n_hashes=4, period=10))
        for frame in distinct_frames(50):
            engine.ingest(frame)
        assert engine.maybe_readout() is None
        engine._t0 -= 11.0           # pretend 11 seconds have passed
        row = engine.maybe_readout()
        assert row is not None
        assert row.t_sec >= 10.0
        assert row.execs == 50

    def test_empty_campaign_flushes_one_zero_row(self):
        engine = exec_paced_engine(rate=100, period=10)
        engine.flush_final()
        assert len(engine.rows) == 1
        row = engine.rows[0]
        assert row.execs == 0
        assert row.coverage == 0.0
        assert row.new_per_sec_ins == 0.0
        assert row.new_per_sec_avg == 0.0
        assert row.new_per_exec_ins_pct == 0.0
        assert row.new_per_exec_avg_pct == 0.0

    def test_final_flush_is_idempotent_on_boundary(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1000):
            engine.ingest(frame)
        engine.flush_final()
        assert len(engine.rows) == 1     # t=10.0 row already covers the end


class TestSaturation:
    def test_saturated_rows_flagged_and_campaign_continues(self):
        engine = CollectorEngine(CampaignConfig(
            n_bits=64, n_hashes=16, pace="exec:10", period=1))
        # four crafted digests fill all 64 bits
        for start in (0, 16, 32, 48):
            engine.ingest(encode_frame((1 << 64) | start))
        for frame in distinct_frames(26):
            engine.ingest(frame)
        assert engine.filter.saturated
        assert engine.execs == 30
        assert engine.rows, "rows must keep flowing after saturation"
        assert engine.rows[-1].saturated is True
        # frozen coverage stays monotone rather than jumping to infinity
        coverages = [row.coverage for row in engine.rows]
        assert coverages == sorted(coverages)
        assert all(math.isfinite(c) for c in coverages)


class TestReports:
    def test_csv_header_and_shape(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1500):
            engine.ingest(frame)
        engine.flush_final()
        text = engine.render_csv()
        lines = text.strip().split("\n")
        assert lines[0] == ("t_sec,execs,coverage,new_per_sec_ins,"
                            "new_per_sec_avg,new_per_exec_ins_pct,"
                            "new_per_exec_avg_pct")
        assert len(lines) == 1 + len(engine.rows)
        for line in lines[1:]:
            assert len(line.split(",")) == 7

    def test_json_variant_same_fields(self):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1000):
            engine.ingest(frame)
        rows = json.loads(engine.render_json())
        assert isinstance(rows, list) and rows
        for row in rows:
            assert list(row.keys()) == list(CSV_COLUMNS)

    def test_emit_report_files(self, tmp_path):
        engine = exec_paced_engine(rate=100, period=10)
        for frame in distinct_frames(1000):
            engine.ingest(frame)
        csv_path = tmp_path / "out.csv"
        json_path = tmp_path / "out.json"
        engine.emit_report(csv_path, "csv")
        engine.emit_report(json_path, "json")
        assert csv_path.read_text() == engine.render_csv()
        assert json.loads(json_path.read_text()) == \
            json.loads(engine.render_json())
        with pytest.raises(ValueError):
            engine.emit_report(tmp_path / "x", "yaml")


class TestReplay:
    @staticmethod
    def write_trace(path, frames):
        with open(path, "wb") as fh:
            for frame in frames:
                fh.write(frame)

    def test_replay_is_deterministic(self, tmp_path):
        trace = tmp_path / "trace.bin"
        self.write_trace(trace, distinct_frames(5000, seed=2))

        def run():
            engine = CollectorEngine(CampaignConfig(
                n_bits=1 << 16, n_hashes=4, replay=str(trace)))
            engine.run_replay()
            return engine

        one, two = run(), run()
        assert one.render_csv() == two.render_csv()
        assert one.render_json() == two.render_json()
        assert one.filter == two.filter

    def test_replay_default_pace_grids_rows(self, tmp_path):
        trace = tmp_path / "trace.bin"
        self.write_trace(trace, distinct_frames(25_000, seed=3))
        engine = CollectorEngine(CampaignConfig(
            n_bits=1 << 20, n_hashes=4, replay=str(trace)))
        engine.run_replay()
        # 25,000 execs at the default 1,000/s pace: rows at 10 and 20,
        # then the fractional final flush at 25
        assert [row.t_sec for row in engine.rows] == [10.0, 20.0, 25.0]
        assert engine.rows[-1].execs == 25_000

    def test_replay_writes_configured_outputs(self, tmp_path):
        trace = tmp_path / "trace.bin"
        self.write_trace(trace, distinct_frames(2000, seed=4))
        out = tmp_path / "report.csv"
        snap = tmp_path / "filter.lscf"
        engine = CollectorEngine(CampaignConfig(
            n_bits=1 << 16, n_hashes=4, replay=str(trace),
            out=str(out), snapshot=str(snap)))
        engine.run_replay()
        assert out.read_text() == engine.render_csv()
        assert CoverageFilter.from_file(snap) == engine.filter

    def test_malformed_trace_tail_counted(self, tmp_path):
        trace = tmp_path / "trace.bin"
        with open(trace, "wb") as fh:
            for frame in distinct_frames(10):
                fh.write(frame)
            fh.write(b"\x01\x02")
        engine = CollectorEngine(CampaignConfig(
            n_bits=1 << 16, n_hashes=4, replay=str(trace)))
        engine.run_replay()
        assert engine.execs == 10
        assert engine.malformed == 1

    def test_snapshot_resume_matches_uninterrupted_run(self, tmp_path):
        frames = distinct_frames(4000, seed=6)
        straight = exec_paced_engine(rate=1000)
        for frame in frames:
            straight.ingest(frame)

        first = exec_paced_engine(rate=1000)
        for frame in frames[:2000]:
            first.ingest(frame)
        snap = tmp_path / "mid.lscf"
        first.snapshot(snap)

        resumed = CollectorEngine(CampaignConfig(
            pace="exec:1000", resume_from=str(snap)))
        for frame in frames[2000:]:
            resumed.ingest(frame)

        assert resumed.filter == straight.filter
        assert resumed.filter.estimate() == straight.filter.estimate()
        assert resumed.execs == straight.execs == 4000


class TestSockets:
    def test_bind_and_busy_detection(self, tmp_path):
        endpoint = f"unix:{tmp_path}/a.sock"
        sock = bind_ingest_socket(endpoint)
        try:
            with pytest.raises(EndpointBusyError):
                bind_ingest_socket(endpoint)
        finally:
            sock.close()

    def test_stale_socket_file_swept(self, tmp_path):
        endpoint = f"unix:{tmp_path}/b.sock"
        first = bind_ingest_socket(endpoint)
        first.close()     # path left behind, no listener
        assert os.path.exists(f"{tmp_path}/b.sock")
        second = bind_ingest_socket(endpoint)
        second.close()

    def test_udp_busy_detection(self):
        sock = bind_ingest_socket("udp:127.0.0.1:0")
        port = sock.getsockname()[1]
        try:
            with pytest.raises(EndpointBusyError):
                bind_ingest_socket(f"udp:127.0.0.1:{port}")
        finally:
            sock.close()

    def test_sender_requires_some_endpoint(self, monkeypatch):
        monkeypatch.delenv(ENDPOINT_ENV, raising=False)
        with pytest.raises(ValueError):
            FrameSender()

    def test_sender_honors_environment(self, tmp_path, monkeypatch):
        endpoint = f"unix:{tmp_path}/env.sock"
        sock = bind_ingest_socket(endpoint)
        monkeypatch.setenv(ENDPOINT_ENV, endpoint)
        try:
            with FrameSender() as sender:
                sender.send_frame(encode_frame(42))
            raw = sock.recv(64)
            assert raw == encode_frame(42)
        finally:
            sock.close()


class TestLiveRun:
    def run_live(self, config, frames):
        engine = CollectorEngine(config)
        stop = threading.Event()
        thread = threading.Thread(target=engine.run, args=(stop,))
        thread.start()
        try:
            assert engine.ready.wait(timeout=5), "collector never bound"
            with FrameSender(config.endpoint) as sender:
                for frame in frames:
                    sender.send_frame(frame)
            deadline = time.monotonic() + 10
            while engine.execs < len(frames) and time.monotonic() < deadline:
                time.sleep(0.01)
        finally:
            stop.set()
            thread.join(timeout=5)
        assert not thread.is_alive()
        return engine

    def test_unix_ingest_is_lossless(self, tmp_path):
        frames = distinct_frames(5000, seed=8)
        engine = self.run_live(
            CampaignConfig(n_bits=1 << 16, n_hashes=4,
                           endpoint=f"unix:{tmp_path}/live.sock",
                           pace="exec:1000"),
            frames)
        assert engine.execs == 5000
        assert engine.rows, "exec pacing must have emitted rows"
        assert not os.path.exists(f"{tmp_path}/live.sock"), \
            "socket path must be cleaned up"

    def test_udp_ingest(self):
        sock = bind_ingest_socket("udp:127.0.0.1:0")
        port = sock.getsockname()[1]
        sock.close()
        frames = distinct_frames(200, seed=9)
        engine = self.run_live(
            CampaignConfig(n_bits=1 << 16, n_hashes=4,
                           endpoint=f"udp:127.0.0.1:{port}"),
            frames)
        # UDP is best-effort, but loopback at this volume should hold
        assert engine.execs == 200

    def test_duration_stops_the_loop(self, tmp_path):
        engine = CollectorEngine(CampaignConfig(
            n_bits=1 << 16, n_hashes=4,
            endpoint=f"unix:{tmp_path}/dur.sock", duration=0.3))
        start = time.monotonic()
        engine.run()
        assert time.monotonic() - start < 3
        assert engine.rows, "final flush must leave a row"

    def test_endpoint_env_fallback(self, tmp_path, monkeypatch):
        endpoint = f"unix:{tmp_path}/envrun.sock"
        monkeypatch.setenv(ENDPOINT_ENV, endpoint)
        engine = CollectorEngine(CampaignConfig(
            n_bits=1 << 16, n_hashes=4, duration=0.2))
        engine.run()

    def test_missing_endpoint_is_an_error(self, monkeypatch):
        monkeypatch.delenv(ENDPOINT_ENV, raising=False)
        engine = CollectorEngine(CampaignConfig(n_bits=1 << 16, n_hashes=4))
        with pytest.raises(ValueError):
            engine.run()


class TestStatus:
    def test_status_shape(self):
        engine = exec_paced_engine(exact_oracle=True)
        for frame in distinct_frames(10):
            engine.ingest(frame)
        stat = engine.status()
        assert stat["execs"] == 10
        assert stat["exact_distinct"] == 10
        assert stat["n_bits"] == 1 << 16
        assert stat["n_hashes"] == 4
        assert stat["malformed"] == 0
        assert 0 < stat["coverage"] < 20
        assert not stat["saturated"]
