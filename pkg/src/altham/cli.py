"""Command-line entry point.

    altham run CONFIG.yaml [--seed N] [--out-dir DIR] [--workers W]
    altham preset NAME --emit-config
    altham preset NAME --run [--seed N] [--out-dir DIR] [--workers W] [--full]

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 dimension cap exceeded.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from .experiments import (
    PRESETS,
    RUN_KEY_MARK,
    ExperimentConfig,
    dump_yaml,
    manifest,
    preset,
    run_repetition,
    write_artifacts,
)
from .qop import DimensionCapError

EXIT_CONFIG, EXIT_NUMERIC, EXIT_DIMCAP = 1, 2, 3


class ConfigError(Exception):
    pass


def _describe(err: ValidationError) -> str:
    first = err.errors()[0]
    key = ".".join(str(p) for p in first["loc"]) or "<root>"
    msg = first["msg"].removeprefix("Value error, ")
    if RUN_KEY_MARK in msg:
        _, key, msg = msg.split(RUN_KEY_MARK)
        msg = msg.strip()
    return f"invalid config key '{key}': {msg}"


def load_config(path: str, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    return _apply_overrides(cfg, seed, out_dir)


def _apply_overrides(cfg: ExperimentConfig, seed, out_dir) -> ExperimentConfig:
    upd = {}
    if seed is not None:
        upd["seed"] = seed
    if out_dir is not None:
        upd["output_dir"] = out_dir
    return cfg.model_copy(update=upd) if upd else cfg


def _run_one(args):
    cfg, rep = args
    return run_repetition(cfg, rep)


def execute(cfg: ExperimentConfig, workers: int = 1, out=None) -> Path:
    """Run every repetition, write artifacts and the manifest, print summary lines."""
    jobs = [(cfg, rep) for rep in range(cfg.repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    out_dir = Path(cfg.output_dir)
    names = write_artifacts(cfg, results, out_dir)
    (out_dir / "manifest.yaml").write_text(dump_yaml(manifest(cfg, results, names)))
    out = sys.stdout if out is None else out
    for r in results:
        for line in r.summary:
            print(line, file=out)
    return out_dir


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="altham", description="Altered-Hamiltonian experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--out-dir", default=None, help="override the output directory")
        sp.add_argument("--workers", type=int, default=1, help="processes used across repetitions")

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    common(r)

    pr = sub.add_parser("preset", help="emit or run a named figure preset")
    pr.add_argument("name", choices=sorted(PRESETS))
    g = pr.add_mutually_exclusive_group(required=True)
    g.add_argument("--emit-config", action="store_true", help="print the preset as YAML")
    g.add_argument("--run", action="store_true", help="run the preset")
    pr.add_argument("--full", action="store_true", help="use the full-size variant where one exists")
    common(pr)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.seed, args.out_dir)
        else:
            cfg = _apply_overrides(preset(args.name, full=args.full), args.seed, args.out_dir)
            if args.emit_config:
                sys.stdout.write(dump_yaml(cfg.model_dump(mode="json")))
                return 0
        execute(cfg, workers=max(1, args.workers))
    except ConfigError as exc:
        print(f"altham: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionCapError as exc:
        print(f"altham: error: dimension cap exceeded: {exc}", file=sys.stderr)
        return EXIT_DIMCAP
    except np.linalg.LinAlgError as exc:
        print(f"altham: error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # model/run combinations the schema cannot rule out on its own
        print(f"altham: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
