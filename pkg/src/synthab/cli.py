"""Command-line entry point: ``synthab <stage>`` plus ``run`` and ``synth``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import StaleManifest, SynthABError, ValidationError
from .pipeline import STAGES, Pipeline

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthab", description="Offline storefront A/B tests with simulated shoppers.")
    parser.add_argument("--config", type=Path, default=Path("config.yaml"), help="run config (YAML or JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override seeds.run_seed")
    parser.add_argument("--workers", type=int, default=None, help="simulation worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--force", action="store_true", help="ignore the manifest and rebuild")
        if stage == "simulate":
            p.add_argument("--repeat", type=int, default=None, help="independent simulation runs")
    run = sub.add_parser("run", help="run every stage in order")
    run.add_argument("--force", action="store_true")
    run.add_argument("--repeat", type=int, default=None)
    synth = sub.add_parser("synth", help="write a synthetic fixture set and config")
    synth.add_argument("outdir", type=Path)
    synth.add_argument("--shops", type=int, default=5)
    synth.add_argument("--buyers", type=int, default=60)
    synth.add_argument("--agents", type=int, default=100)
    synth.add_argument("--repeat", type=int, default=2)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            from .synthetic import write_fixture

            path = write_fixture(args.outdir, args.shops, args.buyers, args.agents, args.seed or 0, args.repeat)
            print(f"wrote {path}")
            return EXIT_OK
        config = load_config(args.config).with_overrides(args.seed, args.workers, getattr(args, "repeat", None))
        pipeline = Pipeline(config, force=args.force)
        stages = STAGES if args.command == "run" else (args.command,)
        results = pipeline.run_all(stages) if args.command == "run" else [pipeline.run_stage(args.command)]
        for r in results:
            print(f"{r.stage}: {r.status}")
        if any(r.stage == "report" for r in results):
            print((config.output_dir / "report" / "summary.md").read_text(encoding="utf-8"), end="")
        return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StaleManifest as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SynthABError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
