"""Command line entry point: ``qnsch simulate|verify|resume|plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .config import RunConfig, defaults, load_config
from .errors import CheckpointError, ConfigError, QnschError
from .verify import SUITES

log = logging.getLogger("qnsch")


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with configuration errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(runner.EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qnsch", description=__doc__)
    common = _Parser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="only report errors")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="run from initial data")
    sim.add_argument("--config", type=Path, help="key = value configuration file")

    ver = sub.add_parser("verify", parents=[common], help="run self-check suites")
    ver.add_argument("suite", nargs="*", help=f"any of {', '.join(SUITES)} (default: all)")

    res = sub.add_parser("resume", parents=[common], help="continue from a checkpoint")
    res.add_argument("checkpoint", type=Path)
    res.add_argument("--config", type=Path, help="optional configuration merged over the stored one")

    plot = sub.add_parser("plot", parents=[common], help="emit gnuplot scripts for a diagnostics CSV")
    plot.add_argument("csv", type=Path)
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig(defaults())
    return cfg.with_overrides(args.override)


def _simulate(args) -> int:
    out = args.out or Path("qnsch_run")
    result = runner.simulate(_config(args), out, quiet=args.quiet)
    if not args.quiet:
        print(f"{result.message}: {result.summary['steps_completed']} steps, outputs in {out}")
    return result.status


def _verify(args) -> int:
    names = args.suite or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite {unknown[0]!r}; expected one of {', '.join(SUITES)}")
    report, ok = {}, True
    for name in names:
        checks = SUITES[name]()
        report[name] = [c.as_dict() for c in checks]
        for c in checks:
            ok &= c.passed
            if not args.quiet or not c.passed:
                print(f"[{name}] {c.line()}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return runner.EXIT_OK if ok else runner.EXIT_USAGE


def _resume(args) -> int:
    base = load_config(args.config) if args.config else None
    out = args.out or args.checkpoint.parent
    result = runner.resume(args.checkpoint, out, overrides=args.override, base=base, quiet=args.quiet)
    if not args.quiet:
        print(f"{result.message}: reached step {result.summary['steps_completed']}, outputs in {out}")
    return result.status


def _plot(args) -> int:
    for path in runner.write_plot_scripts(args.csv, args.out):
        if not args.quiet:
            print(path)
    return runner.EXIT_OK


COMMANDS = {"simulate": _simulate, "verify": _verify, "resume": _resume, "plot": _plot}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CheckpointError as exc:
        print(f"qnsch: checkpoint error: {exc}", file=sys.stderr)
        return runner.EXIT_CHECKPOINT
    except ConfigError as exc:
        print(f"qnsch: configuration error: {exc}", file=sys.stderr)
        return runner.EXIT_USAGE
    except QnschError as exc:
        print(f"qnsch: {exc}", file=sys.stderr)
        return runner.EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
