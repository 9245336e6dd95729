"""Command-line front end.

    memlearn run CONFIG [--out DIR] [--format table|structured|plotdata]
                 [--seed N] [--no-figures]
    memlearn gen-trace SPEC PATH
    memlearn compare REPORT... --baseline NAME [--out FILE]

The MEMLEARN_LOG environment variable (debug|info|warning|error) controls
log verbosity; nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness import (ConfigError, MetricsReport, compare, emit,
                      run_experiment)
from .trace import (TraceSpec, generate_trace, write_trace)

log = logging.getLogger("memlearn")


def _setup_logging():
    level = os.environ.get("MEMLEARN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_json_arg(arg: str) -> dict:
    """Accept a JSON file path or an inline JSON object string."""
    if arg.lstrip().startswith("{"):
        return json.loads(arg)
    with open(arg) as f:
        return json.load(f)


def cmd_run(args) -> int:
    config = _load_json_arg(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    report = run_experiment(config)
    figures = None if not args.no_figures else False
    paths = emit(report, args.format, args.out, render_figures=figures)
    for p in paths:
        print(p)
    return 0


def cmd_gen_trace(args) -> int:
    spec_doc = _load_json_arg(args.spec)
    allowed = {"generator", "length", "seed", "params"}
    unknown = sorted(set(spec_doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in trace spec")
    spec = TraceSpec(generator=spec_doc["generator"],
                     length=int(spec_doc["length"]),
                     seed=int(spec_doc.get("seed", 0)),
                     params=dict(spec_doc.get("params", {})))
    events = generate_trace(spec)
    write_trace(events, args.path)
    log.info("wrote %d events to %s", len(events), args.path)
    print(args.path)
    return 0


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        with open(path) as f:
            reports.append(MetricsReport.from_structured(f.read()))
    text = compare(reports, args.baseline)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memlearn",
                                description="learned memory-system policy "
                                            "experiment driver")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config", help="JSON config file or inline JSON")
    runp.add_argument("--out", default="out", help="output directory")
    runp.add_argument("--format", default="table",
                      choices=["table", "structured", "plotdata"])
    runp.add_argument("--seed", type=int, default=None,
                      help="override the config seed")
    runp.add_argument("--no-figures", action="store_true",
                      help="skip PNG rendering for plotdata output")
    runp.set_defaults(func=cmd_run)

    genp = sub.add_parser("gen-trace", help="generate a synthetic trace file")
    genp.add_argument("spec", help="JSON trace spec file or inline JSON")
    genp.add_argument("path", help="output trace file")
    genp.set_defaults(func=cmd_gen_trace)

    cmpp = sub.add_parser("compare", help="ratio table against a baseline")
    cmpp.add_argument("reports", nargs="+",
                      help="structured report files (report.json)")
    cmpp.add_argument("--baseline", required=True)
    cmpp.add_argument("--out", default=None)
    cmpp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
