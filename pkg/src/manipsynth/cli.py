"""Command line entry point.

Exit codes: 0 success, 2 configuration/parse error, 3 missing upstream
artifact, 4 numeric failure. Verbosity via MANIPSYNTH_LOG (debug/info/
warning); no other behavior is environment-dependent.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, DependencyError, ManipSynthError, NumericError
from .pipeline import STAGES, run_pipeline

log = logging.getLogger("manipsynth")

_COMMANDS = {
    "train": ["train"],
    "gen-object": ["gen-object"],
    "gen-ee": ["gen-ee"],
    "recover": ["recover"],
    "optimize": ["optimize"],
    "evaluate": ["evaluate"],
    "plot": ["plot"],
    "run-all": list(STAGES),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manipsynth",
        description="Desk-scale whole-body manipulation synthesis pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, stages in _COMMANDS.items():
        p = sub.add_parser(name, help=f"run stage(s): {', '.join(stages)}")
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", default=None, help="pipeline config JSON")
        if name == "run-all":
            p.add_argument(
                "--stages",
                default=None,
                help=f"comma-separated subset of: {','.join(STAGES)}",
            )
        if name in ("optimize", "run-all"):
            p.add_argument(
                "--targets",
                default=None,
                help="external end-effector trajectory JSONL to optimize against",
            )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("MANIPSYNTH_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    stages = _COMMANDS[args.command]
    if getattr(args, "stages", None):
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    try:
        manifest = run_pipeline(
            args.scenario,
            stages,
            args.seed,
            args.out,
            config_path=args.config,
            targets_path=getattr(args, "targets", None),
        )
    except NumericError as e:
        log.error("numeric failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return 4
    except DependencyError as e:
        log.error("dependency error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ManipSynthError) as e:
        log.error("configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    for stage, entry in manifest["stages"].items():
        arts = ", ".join(sorted(a["path"] for a in entry["artifacts"].values()))
        print(f"{stage}: {arts} ({entry['seconds']:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
