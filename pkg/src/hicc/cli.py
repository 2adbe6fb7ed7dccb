from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import ConfigError, HiccError
from .loaders import default_config_path, load_config, with_workdir
from .logs import setup_logging
from .pipeline import STAGES, run_pipeline

COMMANDS = (*STAGES, "pipeline")


def parse_overrides(extra: Sequence[str]) -> Dict[str, str]:
    """`--section.key value` / `--key=value` pairs left over by argparse."""
    out: Dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra) or extra[i + 1].startswith("--"):
                raise ConfigError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML pipeline config (default: config/small.yaml)")
    common.add_argument("--workdir", default=None, help="Override paths.workdir")
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--workers", type=int, default=None, help="Parallel workers for generation, featurization and scoring")
    common.add_argument("--log-level", default="INFO")
    common.add_argument("--log-json", action="store_true", help="JSON log lines on stderr")

    p = argparse.ArgumentParser(
        prog="hicc",
        description="High-cost claimant prediction: synthetic claims, features, GBDT, evaluation, economics, audit",
        epilog="Any config value can be overridden as --section.key VALUE (or --key VALUE when unambiguous).",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "pipeline" else "run every stage")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    setup_logging(args.log_level, args.log_json)
    try:
        overrides = parse_overrides(extra)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if args.workers is not None:
            overrides["workers"] = str(args.workers)
        cfg = load_config(args.config or default_config_path(), overrides)
        if args.workdir:
            cfg = with_workdir(cfg, Path(args.workdir).resolve())
        if args.command == "pipeline":
            written = run_pipeline(cfg)
        else:
            written = STAGES[args.command](cfg)
    except HiccError as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"[ERROR] {msg}", file=sys.stderr)
        return 2
    print(f"[OK] {args.command}: {len(written)} artifacts under {cfg.paths.workdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
