"""Command-line entry point: ``fairbandit {run,sweep,replicate,dataset,validate}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .core import ConfigError, SyntheticConfig
from .data import DataError, load_dataset, load_schema, run_dataset_trial
from .experiments import (DEFAULT_POLICIES, PRESETS, ExperimentConfig, SweepResult,
                          build_instance, figure_preset, grid_from, run_trial, summarize, sweep,
                          trajectory_metrics, write_outputs, write_rounds, write_summary)
from .numerics import SingularSystemError, normal_cdf, normal_quantile, ols_fit, rng_stream
from .policies import PolicyConfig, make_policy

log = logging.getLogger("fairbandit")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "FAIRBANDIT_OUT"

DEFAULTS = {
    **{f.name: f.default for f in fields(SyntheticConfig)},
    "T": 1000,
    "policies": list(DEFAULT_POLICIES),
    **{f.name: f.default for f in fields(PolicyConfig) if f.name != "T"},
    "seeds": 20,
    "seed": 0,
    "jobs": None,
    "out": None,
    "preset": None,
    "sweep_param": None,
    "sweep_values": None,
    "dataset_path": None,
    "schema_path": None,
}
PATH_KEYS = ("dataset_path", "schema_path")


def parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in --set {text!r}: {exc}") from exc


def load_config(path: str | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc, Path(path).resolve().parent


def effective_config(args) -> dict:
    """defaults < config file < flags (--set included)."""
    doc, base_dir = load_config(args.config)
    cfg = dict(DEFAULTS)
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(doc)
    if base_dir is not None:
        for key in PATH_KEYS:
            if cfg.get(key) and not Path(cfg[key]).is_absolute():
                cfg[key] = str(base_dir / cfg[key])
    for flag in ("out", "seeds", "jobs", "preset"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    for item in args.set or ():
        key, value = parse_override(item)
        if key not in DEFAULTS:
            raise ConfigError(f"--set refers to unknown key {key!r}")
        cfg[key] = value
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV, "results")
    return cfg


def seeds_of(cfg: dict) -> tuple[int, ...]:
    seeds = cfg["seeds"]
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("seeds must be positive")
        return tuple(range(seeds))
    if isinstance(seeds, (list, tuple)) and seeds and all(isinstance(s, int) for s in seeds):
        return tuple(seeds)
    raise ConfigError(f"seeds must be a count or a nonempty list of integers, got {seeds!r}")


def experiment_from(cfg: dict) -> ExperimentConfig:
    try:
        synthetic = SyntheticConfig(**{f.name: cfg[f.name] for f in fields(SyntheticConfig)})
        pcfg = PolicyConfig(T=max(int(cfg["T"]), 1),
                            **{f.name: cfg[f.name] for f in fields(PolicyConfig) if f.name != "T"})
        policies = cfg["policies"]
        if isinstance(policies, str):
            policies = [p.strip() for p in policies.split(",")]
        exp = ExperimentConfig(synthetic=synthetic, T=int(cfg["T"]), policies=tuple(policies),
                               policy_config=pcfg, seeds=seeds_of(cfg))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    exp.validate()
    return exp


def archive_config(cfg: dict, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def cmd_run(cfg: dict) -> int:
    exp = experiment_from(cfg)
    out = Path(cfg["out"])
    archive_config(cfg, out)
    seed = int(cfg["seed"])
    instance = build_instance(exp.synthetic, seed)
    (out / "instance.json").write_text(instance.dumps() + "\n", encoding="utf-8")
    rows, summary = [], []
    for name in exp.policies:
        policy = make_policy(name, instance.n, instance.d, instance.partition,
                             exp.policy_config)
        tr = run_trial(instance, policy, exp.T, seed)
        rows.append((f"run/{name}/{seed}", tr))
        if tr.T:
            for metric, (mean, std, k) in summarize([trajectory_metrics(tr, instance.partition)]).items():
                summary.append({"preset": "run", "swept_param": "", "swept_value": "",
                                "policy": name, "metric": metric, "mean": mean, "std": std,
                                "n_seeds": k})
    write_rounds(out / "rounds.csv", rows)
    write_summary(out / "summary.csv", summary)
    print(f"wrote {out / 'rounds.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def _finish_sweep(result: SweepResult, cfg: dict) -> int:
    paths = write_outputs(result, Path(cfg["out"]))
    print(f"wrote {paths['summary']} ({len(result.summary)} rows) and {paths['rounds']}")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    if not cfg["sweep_param"] or not cfg["sweep_values"]:
        raise ConfigError("sweep needs sweep_param and a nonempty sweep_values list")
    exp = experiment_from(cfg)
    grid = grid_from(exp, cfg["sweep_param"], list(cfg["sweep_values"]), preset="sweep")
    archive_config(cfg, Path(cfg["out"]))
    return _finish_sweep(sweep(grid, jobs=cfg["jobs"]), cfg)


def cmd_replicate(cfg: dict) -> int:
    name = cfg["preset"]
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    policies = cfg["policies"]
    if isinstance(policies, str):
        policies = [p.strip() for p in policies.split(",")]
    grid = figure_preset(name, seeds=seeds_of(cfg), policies=tuple(policies))
    for g in grid:
        g.validate()
    archive_config(cfg, Path(cfg["out"]))
    return _finish_sweep(sweep(grid, jobs=cfg["jobs"]), cfg)


def cmd_dataset(cfg: dict) -> int:
    if not cfg["dataset_path"] or not cfg["schema_path"]:
        raise ConfigError("dataset runs need dataset_path and schema_path")
    if not Path(cfg["dataset_path"]).is_file():
        raise DataError(f"dataset file not found: {cfg['dataset_path']}")
    env = load_dataset(cfg["dataset_path"], load_schema(cfg["schema_path"]))
    exp = experiment_from(cfg)
    out = Path(cfg["out"])
    archive_config(cfg, out)
    rows, summary = [], []
    for name in exp.policies:
        per_seed = []
        for seed in exp.seeds:
            policy = make_policy(name, env.n, env.d, env.partition, exp.policy_config)
            tr = run_dataset_trial(env, policy, exp.T, seed)
            rows.append((f"dataset/{name}/{seed}", tr))
            per_seed.append(trajectory_metrics(tr, env.partition))
        if exp.T:
            for metric, (mean, std, k) in summarize(per_seed).items():
                summary.append({"preset": "dataset", "swept_param": "", "swept_value": "",
                                "policy": name, "metric": metric, "mean": mean, "std": std,
                                "n_seeds": k})
    write_rounds(out / "rounds.csv", rows)
    write_summary(out / "summary.csv", summary)
    print(f"{env.n} arms, d={env.d}; wrote {out / 'rounds.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def self_test() -> list[str]:
    """Quick numeric checks; returns a list of failure messages."""
    failures = []
    beta = ols_fit([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0])
    if abs(beta[0] - 2.0) > 1e-12:
        failures.append(f"ols_fit returned {beta}")
    for p in (1e-6, 0.0025, 0.3, 0.5, 0.975, 1 - 1e-6):
        if abs(normal_cdf(normal_quantile(p)) - p) > 1e-8 * max(1.0, p):
            failures.append(f"normal_quantile({p}) is inaccurate")
    a = rng_stream(7, "check").random(5)
    b = rng_stream(7, "check").random(5)
    if not np.array_equal(a, b):
        failures.append("rng_stream is not reproducible")
    return failures


def cmd_validate(cfg: dict) -> int:
    exp = experiment_from(cfg)
    build_instance(exp.synthetic, exp.seeds[0])
    if cfg["preset"] is not None and cfg["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    if cfg["dataset_path"] or cfg["schema_path"]:
        schema = load_schema(cfg["schema_path"])
        if not Path(cfg["dataset_path"]).is_file():
            raise DataError(f"dataset file not found: {cfg['dataset_path']}")
        env = load_dataset(cfg["dataset_path"], schema)
        print(f"dataset ok: {env.n} arms, d={env.d}")
    failures = self_test()
    if failures:
        for f in failures:
            print(f"numerics: {f}", file=sys.stderr)
        return EXIT_NUMERIC
    print("config ok; numerics self-test passed")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "replicate": cmd_replicate,
            "dataset": cmd_dataset, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--seeds", type=int, help="number of seeds (0..k-1)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key; repeatable")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("--preset", help="named preset")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fairbandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one trial per policy at a single seed")
    sub.add_parser("sweep", parents=[common], help="sweep one parameter from the config")
    rep = sub.add_parser("replicate", parents=[common], help="run a named preset")
    rep.add_argument("preset_name", nargs="?", choices=sorted(PRESETS), metavar="PRESET")
    sub.add_parser("dataset", parents=[common], help="run policies on a CSV dataset")
    sub.add_parser("validate", parents=[common], help="check config and numerics, then exit")
    return parser


def dispatch(args) -> int:
    try:
        if getattr(args, "preset_name", None):
            args.preset = args.preset_name
        cfg = effective_config(args)
        if args.command == "replicate" and cfg["preset"] is None:
            raise ConfigError("replicate needs a preset name")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"fairbandit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"fairbandit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularSystemError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"fairbandit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        # failed sweep cell; the message names the cell
        print(f"fairbandit: numeric failure in experiment: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
