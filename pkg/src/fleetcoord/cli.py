"""Command-line entry point: `fleetcoord run ...`."""

from __future__ import annotations

import argparse
import json
import sys

from .executor import Executor, TraceInvalid
from .model import ScenarioError, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetcoord",
        description="Deterministic multi-robot fleet coordination engine")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--trace", help="operator request trace (JSONL)")
    run.add_argument("--seed", type=int, help="RNG seed override")
    run.add_argument("--until", type=float, default=600.0,
                     help="simulation horizon in seconds")
    run.add_argument("--dt", type=float, help="tick length override (s)")
    run.add_argument("--out", help="directory for events/metrics/summary")
    run.add_argument("--serve", metavar="ADDR",
                     help="host:port — serve the operator protocol and "
                          "pace the run to wall clock")
    return parser


def _run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        ex = Executor(scenario, trace=args.trace, seed=args.seed,
                      dt=args.dt)
    except (ScenarioError, TraceInvalid, OSError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    if args.serve:
        import uvicorn
        from .service import Session, create_app
        host, _, port = args.serve.rpartition(":")
        session = Session(ex, until=args.until)
        session.play(realtime=True)
        try:
            uvicorn.run(create_app(session), host=host or "127.0.0.1",
                        port=int(port))
        finally:
            session.stop()
            if args.out:
                ex.write_outputs(args.out)
        return 0

    result = ex.run(until=args.until)
    if args.out:
        ex.write_outputs(args.out)
    print(json.dumps(result["summary"], indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
