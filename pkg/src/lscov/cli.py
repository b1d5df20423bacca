"""Command line front end.

Local measurement subcommands (`collect`, `params`, `digest`, `synth`)
run in-process; `serve` starts the HTTP control plane and `campaign`
is a thin client against it.
"""

import argparse
import json
import logging
import signal
import sys
import threading

from . import __version__
from .bloom import derive_params
from .collector import (
    ENDPOINT_ENV,
    CampaignConfig,
    CollectorEngine,
    EndpointBusyError,
)
from .logic_state import digest_block_sequence
from .synth import (
    build_fig2_cfg,
    build_fig3_cfg,
    fig2_distinct_states,
    fig3_check,
    random_cfg,
    run_campaign,
)

log = logging.getLogger("lscov.cli")

DEFAULT_SERVER = "http://127.0.0.1:8600"


def _add_filter_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-e", type=int, default=None,
                        help="expected distinct logic states (derives filter size)")
    parser.add_argument("--epsilon", type=float, default=None,
                        help="false-positive rate for derivation (default 0.05)")
    parser.add_argument("--n-bits", type=int, default=None,
                        help="explicit filter size in bits (with --n-hashes)")
    parser.add_argument("--n-hashes", type=int, default=None,
                        help="explicit hash count (with --n-bits)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lscov",
        description="Distinct logic-state coverage measurement for "
                    "fuzzing campaigns")
    parser.add_argument("--version", action="version",
                        version=f"lscov {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the campaign service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8600)

    collect = sub.add_parser(
        "collect", help="run a collector in the foreground")
    collect.add_argument("--endpoint", default=None,
                         help=f"unix:<path> or udp:<host>:<port> "
                              f"(default ${ENDPOINT_ENV})")
    _add_filter_args(collect)
    collect.add_argument("--period", type=float, default=10.0,
                         help="readout period in seconds (default 10)")
    collect.add_argument("--out", default=None,
                         help="report file written on shutdown")
    collect.add_argument("--format", dest="out_format",
                         choices=("csv", "json"), default=None,
                         help="report format (default: by --out suffix)")
    collect.add_argument("--snapshot", default=None,
                         help="filter snapshot file written on shutdown")
    collect.add_argument("--snapshot-period", type=float, default=None,
                         help="also snapshot every N seconds")
    collect.add_argument("--replay", metavar="FILE", default=None,
                         help="replay a recorded trace instead of listening")
    collect.add_argument("--exact-oracle", action="store_true",
                         help="keep an exact distinct set alongside the "
                              "filter (desk scale only)")
    collect.add_argument("--pace", default=None,
                         help="wall or exec[:rate] (replay default exec:1000)")
    collect.add_argument("--resume-from", metavar="SNAPSHOT", default=None,
                         help="start from a saved filter snapshot")
    collect.add_argument("--duration", type=float, default=None,
                         help="stop after N seconds")

    params = sub.add_parser("params", help="derive filter parameters")
    params.add_argument("--n-e", type=int, required=True)
    params.add_argument("--epsilon", type=float, required=True)
    params.add_argument("--json", action="store_true")

    digest = sub.add_parser(
        "digest",
        help="digest block-id sequences (recording semantics, prev=0)")
    digest.add_argument("--input", default="-",
                        help="JSON file of block-id sequences, - for stdin")

    synth = sub.add_parser("synth", help="synthetic model tools")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)

    fig2 = synth_sub.add_parser(
        "fig2-check", help="hit-count collapse check on the loop model")
    fig2.add_argument("--grid-max", type=int, default=3)

    fig3 = synth_sub.add_parser(
        "fig3-check", help="normal/abnormal separation check")
    fig3.add_argument("--behaviors", type=int, default=10_000)
    fig3.add_argument("--seed", type=int, default=0)

    camp = synth_sub.add_parser(
        "campaign", help="generate a synthetic campaign")
    camp.add_argument("--seed", type=int, default=0)
    camp.add_argument("--execs", type=int, required=True)
    camp.add_argument("--cfg-size", type=int, default=30,
                      help="blocks in the random model (default 30)")
    camp.add_argument("--model", choices=("random", "fig2", "fig3"),
                      default="random")
    camp.add_argument("--sink", required=True,
                      help="trace file path, or unix:/udp: endpoint")
    camp.add_argument("--exceptions", type=int, default=0,
                      help="exception points in the random model")
    camp.add_argument("--exception-prob", type=float, default=0.5)
    camp.add_argument("--back-edge-prob", type=float, default=0.25)
    camp.add_argument("--max-steps", type=int, default=10_000)

    client = sub.add_parser(
        "campaign", help="manage campaigns on a running service")
    client.add_argument("--server", default=DEFAULT_SERVER)
    client_sub = client.add_subparsers(dest="campaign_command", required=True)

    start = client_sub.add_parser("start")
    start.add_argument("--name", default=None)
    _add_filter_args(start)
    start.add_argument("--period", type=float, default=10.0)
    start.add_argument("--endpoint", default=None)
    start.add_argument("--replay", default=None)
    start.add_argument("--pace", default=None)
    start.add_argument("--exact-oracle", action="store_true")
    start.add_argument("--duration", type=float, default=None)

    client_sub.add_parser("list")
    for name in ("status", "stop", "delete"):
        p = client_sub.add_parser(name)
        p.add_argument("id")
    rows = client_sub.add_parser("rows")
    rows.add_argument("id")
    report = client_sub.add_parser("report")
    report.add_argument("id")
    report.add_argument("--format", choices=("csv", "json"), default="csv")
    report.add_argument("--out", default=None)
    snap = client_sub.add_parser("snapshot")
    snap.add_argument("id")
    snap.add_argument("--path", required=True)

    return parser


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="debug" if args.verbose else "info")
    return 0


def _cmd_collect(args) -> int:
    config = CampaignConfig(
        n_e=args.n_e, epsilon=args.epsilon,
        n_bits=args.n_bits, n_hashes=args.n_hashes,
        period=args.period, endpoint=args.endpoint,
        out=args.out, out_format=args.out_format,
        snapshot=args.snapshot, snapshot_period=args.snapshot_period,
        replay=args.replay, exact_oracle=args.exact_oracle,
        pace=args.pace, resume_from=args.resume_from,
        duration=args.duration,
    )
    engine = CollectorEngine(config)
    if config.replay:
        engine.run_replay()
    else:
        stop = threading.Event()
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
        try:
            engine.run(stop)
        except EndpointBusyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    stat = engine.status()
    line = (f"execs={stat['execs']} malformed={stat['malformed']} "
            f"abnormal={stat['abnormal']} coverage={stat['coverage']:.3f} "
            f"density={stat['density']:.6f}")
    if stat["exact_distinct"] is not None:
        line += f" exact={stat['exact_distinct']}"
    if stat["saturated"]:
        line += " saturated=1"
    print(line)
    if config.out:
        print(f"report written to {config.out}")
    if config.snapshot:
        print(f"snapshot written to {config.snapshot}")
    return 0


def _cmd_params(args) -> int:
    params = derive_params(args.n_e, args.epsilon)
    n_bytes = (params.n_bits + 7) // 8
    if args.json:
        print(json.dumps({"n_bits": params.n_bits,
                          "n_hashes": params.n_hashes,
                          "n_bytes": n_bytes}))
    else:
        print(f"n_bits={params.n_bits} n_hashes={params.n_hashes} "
              f"({n_bytes / (1 << 20):.1f} MiB)")
    return 0


def _cmd_digest(args) -> int:
    if args.input == "-":
        sequences = json.load(sys.stdin)
    else:
        with open(args.input) as fh:
            sequences = json.load(fh)
    if not isinstance(sequences, list):
        print("error: input must be a JSON list of block-id lists",
              file=sys.stderr)
        return 2
    for seq in sequences:
        print(f"{digest_block_sequence(seq):032x}")
    return 0


def _cmd_synth(args) -> int:
    if args.synth_command == "fig2-check":
        distinct, vectors = fig2_distinct_states(args.grid_max)
        ok = distinct == 8
        print(f"grid_max={args.grid_max} hit_vectors={vectors} "
              f"distinct_states={distinct} expected=8 "
              f"{'OK' if ok else 'MISMATCH'}")
        return 0 if ok else 1
    if args.synth_command == "fig3-check":
        result = fig3_check(args.behaviors, args.seed)
        print(f"behaviors={result['behaviors']} normal={result['normal']} "
              f"abnormal={result['abnormal']} "
              f"normal_with_exit_edge={result['normal_with_exit_edge']} "
              f"abnormal_without_exit_edge={result['abnormal_without_exit_edge']} "
              f"shared_digests={result['shared_digests']} "
              f"{'OK' if result['separated'] else 'MISMATCH'}")
        return 0 if result["separated"] else 1
    if args.synth_command == "campaign":
        if args.model == "fig2":
            cfg = build_fig2_cfg()
        elif args.model == "fig3":
            cfg = build_fig3_cfg()
        else:
            cfg = random_cfg(
                seed=args.seed, n_blocks=args.cfg_size,
                back_edge_prob=args.back_edge_prob,
                n_exceptions=args.exceptions,
                exception_prob=args.exception_prob)
        result = run_campaign(cfg, args.execs, args.sink, seed=args.seed,
                              max_steps=args.max_steps)
        print(f"emitted={result.emitted} distinct={result.distinct_exact} "
              f"abnormal={result.abnormal} discarded={result.discarded}")
        return 0
    raise AssertionError(f"unhandled synth command {args.synth_command}")


def _cmd_campaign(args) -> int:
    import httpx

    base = args.server.rstrip("/")
    try:
        return _run_campaign_command(args, httpx.Client(base_url=base,
                                                        timeout=30.0))
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {base}: {exc}", file=sys.stderr)
        return 2


def _run_campaign_command(args, client) -> int:
    with client:
        cmd = args.campaign_command
        if cmd == "start":
            body = {
                "name": args.name, "n_e": args.n_e, "epsilon": args.epsilon,
                "n_bits": args.n_bits, "n_hashes": args.n_hashes,
                "period": args.period, "endpoint": args.endpoint,
                "replay": args.replay, "pace": args.pace,
                "exact_oracle": args.exact_oracle,
                "duration": args.duration,
            }
            resp = client.post(
                "/campaigns",
                json={k: v for k, v in body.items() if v is not None})
        elif cmd == "list":
            resp = client.get("/campaigns")
        elif cmd == "status":
            resp = client.get(f"/campaigns/{args.id}")
        elif cmd == "rows":
            resp = client.get(f"/campaigns/{args.id}/rows")
        elif cmd == "report":
            resp = client.get(f"/campaigns/{args.id}/report",
                              params={"format": args.format})
            if resp.status_code == 200:
                if args.out:
                    with open(args.out, "w", newline="") as fh:
                        fh.write(resp.text)
                    print(f"report written to {args.out}")
                else:
                    sys.stdout.write(resp.text)
                return 0
        elif cmd == "stop":
            resp = client.post(f"/campaigns/{args.id}/stop")
        elif cmd == "snapshot":
            resp = client.post(f"/campaigns/{args.id}/snapshot",
                               json={"path": args.path})
        elif cmd == "delete":
            resp = client.delete(f"/campaigns/{args.id}")
            if resp.status_code == 204:
                print(f"deleted {args.id}")
                return 0
        else:
            raise AssertionError(f"unhandled campaign command {cmd}")
    if resp.status_code >= 400:
        print(f"error {resp.status_code}: {resp.text}", file=sys.stderr)
        return 2
    print(json.dumps(resp.json(), indent=2))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "collect":
            return _cmd_collect(args)
        if args.command == "params":
            return _cmd_params(args)
        if args.command == "digest":
            return _cmd_digest(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "campaign":
            return _cmd_campaign(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
