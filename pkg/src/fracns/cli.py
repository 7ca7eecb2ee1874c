"""Command line entry point: ``fracns <kind> --config run.cfg [overrides]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import KINDS, SCHEMA, parse_config, read_pairs
from .errors import ConfigError, FracNSError
from .experiments import dumps, run_experiment, write_error

EXIT_DOC = "exit codes: 0 ok, 2 config, 3 range, 4 blow-up, 5 I/O"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracns", description="Random fractional Navier-Stokes laboratory.",
                                     epilog=EXIT_DOC)
    sub = parser.add_subparsers(dest="kind", required=True, metavar="kind")
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment", epilog=EXIT_DOC)
        sp.add_argument("--config", type=Path, help="configuration file (key = value)")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
        overrides = sp.add_argument_group("overrides", "each mirrors the config key of the same name")
        for key, spec in SCHEMA.items():
            if key == "kind":
                continue
            overrides.add_argument(f"--{key.replace('_', '-')}", dest=f"set_{key}", metavar="VALUE", help=spec.doc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text, base = "", Path(".")
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as err:
            print(f"fracns: cannot read config: {err}", file=sys.stderr)
            return ConfigError("unreadable config").exit_code
        base = args.config.parent
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_") and v is not None}
    file_kind = read_pairs(text)[0].get("kind")
    if file_kind is not None and file_kind != args.kind:
        print(f"fracns: config: subcommand {args.kind!r} conflicts with kind = {file_kind!r} in the config",
              file=sys.stderr)
        return ConfigError("kind conflict").exit_code
    overrides["kind"] = args.kind
    try:
        cfg = parse_config(text, overrides, base_dir=base)
    except FracNSError as err:
        for v in getattr(err, "violations", [str(err)]):
            print(f"fracns: {err.kind}: {v}", file=sys.stderr)
        if "out" in overrides:
            write_error(Path(overrides["out"]), err)
        return err.exit_code
    if args.dry_run:
        sys.stdout.write(dumps({"kind": cfg.kind, "seeds": list(cfg.seeds), "config": cfg.replayable(),
                                "out": str(cfg.out_dir)}))
        return 0
    code = run_experiment(cfg)
    if code:
        print(f"fracns: {cfg.kind} failed with exit code {code}; see {cfg.out_dir / 'error.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
