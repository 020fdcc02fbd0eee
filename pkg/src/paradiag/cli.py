"""Command-line entry point: ``paradiag <experiment> [--config F] [--set k=v] ...``."""

from __future__ import annotations

import argparse
import sys

from paradiag.harness import (REGISTRY, ConfigError, describe, make_config, parse_config_text,
                              run_experiment, run_experiments)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paradiag", description="Run ParaDiag experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one key (repeatable)")
    common.add_argument("--threads", help="threads for the independent shifted solves")
    common.add_argument("--out", help="output directory for CSV and SVG files")
    common.add_argument("--seed", help="random seed")
    for name, exp in REGISTRY.items():
        sub.add_parser(name, parents=[common], help=exp.doc)
    run = sub.add_parser("run", parents=[common], help="run a comma-separated list of experiments")
    run.add_argument("experiments", nargs="?", default="", help="e.g. wave-gmres,optctrl (may be empty)")
    sub.add_parser("describe", help="print every experiment with its default keys")
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                out.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"config: {exc}") from None
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("threads", "out", "seed"):
        if getattr(args, key) is not None:
            out[key] = getattr(args, key)
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "describe":
        print(describe())
        return EXIT_OK
    try:
        overrides = _overrides(args)
        if args.command == "run":
            names = [n.strip() for n in args.experiments.split(",") if n.strip()]
            cfgs = [make_config(n, overrides) for n in names]
        else:
            cfgs = [make_config(args.command, overrides)]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        table, ok = run_experiments(cfgs)
    else:
        table, ok = run_experiment(cfgs[0])
    print(table)
    for k, v in table.meta.items():
        print(f"# {k} = {v}")
    if not ok:
        print("a required solve did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
