"""Command-line entry point: ``thermomon <experiment> [--seed N] [--out DIR] [--config PATH] [--check]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import ConfigError, check_bundle, load_scenario, run, spec_from_dict
from .experiments.config import KINDS, ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
    p.add_argument("--out", default="out", help="directory for metrics, series and alert files")
    p.add_argument("--check", action="store_true", help="exit 3 if an acceptance threshold fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermomon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="JSON config overriding the defaults")
        _common(p)
    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("config_path", metavar="config")
    _common(p)
    return parser


def _load(kind: str | None, path: str | None):
    if path is None:
        return spec_from_dict({"kind": kind})
    if kind is None:
        return load_scenario(path)
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    if data.setdefault("kind", kind) != kind:
        raise ConfigError(f"kind: config says {data['kind']!r} but the {kind!r} subcommand was used")
    return spec_from_dict(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = _load(None, args.config_path)
        else:
            spec = _load(args.command, args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: expected an unsigned 64-bit integer")
            spec = replace(spec, seed=args.seed)
        bundle = run(spec)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    paths = bundle.write(args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    if args.check:
        failed = False
        for label, ok, detail in check_bundle(bundle):
            print(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
            failed |= not ok
        if failed:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
