"""Trial runner, seed sweeps, fairness/regret metrics and named presets."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (BanditInstance, ConfigError, GroupPartition, SyntheticConfig,
                   generate_instance, observed_reward, sample_slate)
from .numerics import InvalidInputError, rng_stream
from .policies import POLICIES, Policy, PolicyConfig, make_policy

log = logging.getLogger(__name__)

DEFAULT_POLICIES = ("top_interval", "interval_chaining", "group_fair")
DEFAULT_SEEDS = 20

ROUND_COLUMNS = ("run_id", "policy", "seed", "t", "arm", "group", "explored", "reward",
                 "true_regret_cum", "biased_regret_cum")
SUMMARY_COLUMNS = ("preset", "swept_param", "swept_value", "policy", "metric", "mean", "std",
                   "n_seeds")


@dataclass
class Trajectory:
    policy: str
    seed: int
    arms: np.ndarray
    groups: np.ndarray
    explored: np.ndarray
    rewards: np.ndarray
    # None in dataset mode, where no bias-free oracle exists
    true_regret: np.ndarray | None
    biased_regret: np.ndarray
    slate_digests: list[str] | None = None

    @property
    def T(self) -> int:
        return len(self.arms)

    @property
    def dataset_mode(self) -> bool:
        return self.true_regret is None


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: SyntheticConfig = SyntheticConfig()
    T: int = 1000
    policies: tuple[str, ...] = DEFAULT_POLICIES
    policy_config: PolicyConfig = PolicyConfig()
    seeds: tuple[int, ...] = tuple(range(DEFAULT_SEEDS))
    preset: str = "custom"
    swept_param: str = ""
    swept_value: object = ""

    def validate(self):
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        if self.T < 0:
            raise ConfigError("T must be nonnegative")
        for name in self.policies:
            if name not in POLICIES:
                raise ConfigError(f"unknown policy {name!r}")
        self.synthetic.validate()
        self.policy_config.validate()


def _digest(contexts: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(contexts).tobytes()).hexdigest()[:16]


def run_trial(instance: BanditInstance, policy: Policy, T: int, seed: int,
              record_slates: bool = False) -> Trajectory:
    """Play ``policy`` against ``instance`` for T rounds.

    Slates, reward noise and policy coin flips come from three separate
    streams keyed by ``seed``, so every policy run at the same seed sees the
    same slate (and the same noise draw) at every round.
    """
    slate_rng = rng_stream(seed, "slate")
    noise_rng = rng_stream(seed, "noise")
    policy_rng = rng_stream(seed, "policy")
    groups_of = instance.partition.groups
    arms = np.zeros(T, dtype=int)
    explored = np.zeros(T, dtype=bool)
    rewards = np.zeros(T)
    true_reg = np.zeros(T)
    biased_reg = np.zeros(T)
    digests = [] if record_slates else None
    for t in range(1, T + 1):
        slate = sample_slate(instance, t, slate_rng)
        x = slate.contexts
        if digests is not None:
            digests.append(_digest(x))
        decision = policy.select(slate, t, policy_rng)
        a = decision.arm
        r = observed_reward(instance, a, x[a], noise_rng)
        policy.update(a, x[a], r)
        f = instance.true_rewards(x)
        g = instance.expected_rewards(x)
        i = t - 1
        arms[i] = a
        explored[i] = decision.explored
        rewards[i] = r
        true_reg[i] = f.max() - f[a]
        biased_reg[i] = g.max() - g[a]
    return Trajectory(policy.name, seed, arms, groups_of[arms], explored, rewards,
                      true_reg, biased_reg, digests)


def sensitive_pull_fraction(trajectory: Trajectory, partition: GroupPartition,
                            window: tuple[int, int] | None = None) -> float:
    """Share of pulls in ``window`` (1-based, inclusive) that hit sensitive arms."""
    T = trajectory.T
    lo, hi = window if window is not None else (1, T)
    lo, hi = max(lo, 1), min(hi, T)
    if hi < lo:
        raise InvalidInputError(f"empty window {window} for a trajectory of length {T}")
    mask = partition.sensitive_mask()[trajectory.arms[lo - 1:hi]]
    return float(mask.mean())


def trailing_window(T: int) -> tuple[int, int]:
    return (math.ceil(T / 2), T)


def cumulative_regret(trajectory: Trajectory, kind: str = "true") -> np.ndarray:
    if kind == "true":
        if trajectory.true_regret is None:
            raise InvalidInputError("true regret is unavailable in dataset mode")
        return np.cumsum(trajectory.true_regret)
    if kind == "biased":
        return np.cumsum(trajectory.biased_regret)
    raise InvalidInputError(f"regret kind must be 'true' or 'biased', got {kind!r}")


def trajectory_metrics(traj: Trajectory, partition: GroupPartition, n_checkpoints: int = 10) -> dict:
    T = traj.T
    out = {}
    if T == 0:
        return out
    out["sensitive_fraction"] = sensitive_pull_fraction(traj, partition)
    out["sensitive_fraction_trailing"] = sensitive_pull_fraction(traj, partition, trailing_window(T))
    late = slice(T - max(1, T // 10), T)
    kinds = ("biased",) if traj.dataset_mode else ("true", "biased")
    for kind in kinds:
        cum = cumulative_regret(traj, kind)
        per_round = traj.biased_regret if kind == "biased" else traj.true_regret
        out[f"{kind}_regret_cum"] = float(cum[-1])
        out[f"{kind}_regret_late_mean"] = float(per_round[late].mean())
        for k in range(1, n_checkpoints + 1):
            t = max(1, round(T * k / n_checkpoints))
            out[f"{kind}_regret_cum@{t}"] = float(cum[t - 1])
    return out


def build_instance(synthetic: SyntheticConfig, seed: int) -> BanditInstance:
    return generate_instance(synthetic, rng_stream(seed, "instance"))


def run_cell(config: ExperimentConfig, policy_name: str, seed: int) -> Trajectory:
    instance = build_instance(config.synthetic, seed)
    pcfg = config.policy_config.with_horizon(max(config.T, 1))
    policy = make_policy(policy_name, instance.n, instance.d, instance.partition, pcfg)
    return run_trial(instance, policy, config.T, seed)


def _run_cell_star(args):
    config, policy_name, seed = args
    try:
        return run_cell(config, policy_name, seed)
    except Exception as exc:
        raise RuntimeError(
            f"cell failed: preset={config.preset} {config.swept_param}={config.swept_value} "
            f"policy={policy_name} seed={seed}: {exc!r}") from exc


@dataclass
class SweepResult:
    configs: list[ExperimentConfig]
    # (config index, trajectory) in deterministic cell order
    trajectories: list[tuple[int, Trajectory]] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)


def summarize(metrics_by_seed: list[dict]) -> dict[str, tuple[float, float, int]]:
    out = {}
    for key in metrics_by_seed[0]:
        vals = np.array([m[key] for m in metrics_by_seed], dtype=float)
        out[key] = (float(vals.mean()), float(vals.std()), len(vals))
    return out


def sweep(grid: list[ExperimentConfig], jobs: int | None = 1) -> SweepResult:
    """Run every (config, policy, seed) cell and aggregate across seeds.

    Cell results are gathered in a fixed order, so ``jobs`` never changes
    the output.
    """
    if not grid:
        raise ConfigError("sweep grid is empty")
    for cfg in grid:
        cfg.validate()
    cells = [(ci, cfg, name, seed)
             for ci, cfg in enumerate(grid) for name in cfg.policies for seed in cfg.seeds]
    args = [(cfg, name, seed) for _, cfg, name, seed in cells]
    jobs = jobs or os.cpu_count() or 1
    log.info("running %d cells with %d worker(s)", len(cells), jobs)
    if jobs == 1:
        trajs = [_run_cell_star(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trajs = list(pool.map(_run_cell_star, args, chunksize=max(1, len(args) // (4 * jobs))))
    result = SweepResult(list(grid))
    result.trajectories = [(ci, tr) for (ci, *_), tr in zip(cells, trajs)]
    for ci, cfg in enumerate(grid):
        partition = GroupPartition.two_groups(cfg.synthetic.n, cfg.synthetic.n_sensitive)
        for name in cfg.policies:
            per_seed = [trajectory_metrics(tr, partition)
                        for (cj, tr) in result.trajectories if cj == ci and tr.policy == name]
            if not per_seed or not per_seed[0]:
                continue
            for metric, (mean, std, k) in summarize(per_seed).items():
                result.summary.append({
                    "preset": cfg.preset, "swept_param": cfg.swept_param,
                    "swept_value": cfg.swept_value, "policy": name, "metric": metric,
                    "mean": mean, "std": std, "n_seeds": k,
                })
    return result


def lookup(summary: list[dict], policy: str, metric: str, swept_value=None) -> dict:
    for row in summary:
        if row["policy"] == policy and row["metric"] == metric and (
                swept_value is None or row["swept_value"] == swept_value):
            return row
    raise KeyError((policy, metric, swept_value))


# -- presets -----------------------------------------------------------------

# swept values are our own choice; the fixed values are the standard setup
PRESET_GRIDS = {
    "T": ("T", (250, 500, 1000, 2000, 4000)),
    "arms": ("n", (6, 8, 10, 15, 20)),
    "error": ("mu", (0.0, 5.0, 10.0, 20.0, 40.0)),
    "ratio": ("n_sensitive", (1, 2, 3, 4, 5, 6, 7, 8, 9)),
    "c": ("c", (1.0, 5.0, 10.0, 20.0, 50.0)),
    "dim": ("d", (1, 2, 3, 5, 10)),
    "delta": ("delta", (0.01, 0.05, 0.1, 0.2, 0.4)),
}

PRESETS = {
    "pulls_T": "T", "regret_T": "T",
    "pulls_arms": "arms", "regret_arms": "arms",
    "pulls_error": "error", "regret_error": "error",
    "pulls_ratio": "ratio", "regret_ratio": "ratio",
    "appx_c": "c", "appx_dim": "dim", "appx_delta": "delta",
}


def apply_param(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    """Return ``cfg`` with one named parameter replaced."""
    if param == "T":
        return replace(cfg, T=int(value))
    if param in SyntheticConfig.__dataclass_fields__:
        typ = type(getattr(cfg.synthetic, param))
        return replace(cfg, synthetic=replace(cfg.synthetic, **{param: typ(value)}))
    if param in PolicyConfig.__dataclass_fields__:
        return replace(cfg, policy_config=replace(cfg.policy_config, **{param: value}))
    raise ConfigError(f"unknown sweep parameter {param!r}")


def grid_from(base: ExperimentConfig, param: str, values, preset: str = "custom") -> list[ExperimentConfig]:
    return [replace(apply_param(base, param, v), preset=preset, swept_param=param, swept_value=v)
            for v in values]


def figure_preset(name: str, seeds: int | tuple[int, ...] = DEFAULT_SEEDS,
                  policies: tuple[str, ...] = DEFAULT_POLICIES) -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    seed_tuple = tuple(range(seeds)) if isinstance(seeds, int) else tuple(seeds)
    # n=10, T=1000, mu=10, five sensitive arms, d=2 (d=5 when sweeping mu)
    d = 5 if PRESETS[name] == "error" else 2
    base = ExperimentConfig(
        synthetic=SyntheticConfig(n=10, d=d, n_sensitive=5, c=10.0, mu=10.0),
        T=1000, policies=tuple(policies), seeds=seed_tuple)
    param, values = PRESET_GRIDS[PRESETS[name]]
    return grid_from(base, param, values, preset=name)


# -- output ------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def run_id(cfg: ExperimentConfig, policy: str, seed: int) -> str:
    tag = f"{cfg.swept_param}={fmt(cfg.swept_value)}" if cfg.swept_param else "base"
    return f"{cfg.preset}/{tag}/{policy}/{seed}"


def write_rounds(path: Path, rows) -> None:
    """Long-format per-round table; dataset-mode runs omit the true-regret column."""
    rows = list(rows)
    dataset = bool(rows) and all(tr.dataset_mode for _, tr in rows)
    columns = [c for c in ROUND_COLUMNS if not (dataset and c == "true_regret_cum")]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for rid, tr in rows:
            biased_cum = cumulative_regret(tr, "biased")
            true_cum = None if dataset else cumulative_regret(tr, "true")
            for i in range(tr.T):
                fields = [rid, tr.policy, str(tr.seed), str(i + 1), str(tr.arms[i]),
                          str(tr.groups[i]), "1" if tr.explored[i] else "0", fmt(tr.rewards[i])]
                if true_cum is not None:
                    fields.append(fmt(true_cum[i]))
                fields.append(fmt(biased_cum[i]))
                fh.write(",".join(fields) + "\n")


def write_summary(path: Path, summary: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in summary:
            fh.write(",".join(fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["policies"] = list(cfg.policies)
    doc["seeds"] = list(cfg.seeds)
    return doc


def write_outputs(result: SweepResult, out_dir: Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"rounds": out_dir / "rounds.csv", "summary": out_dir / "summary.csv",
             "grid": out_dir / "grid.json"}
    write_rounds(paths["rounds"],
                 ((run_id(result.configs[ci], tr.policy, tr.seed), tr)
                  for ci, tr in result.trajectories))
    write_summary(paths["summary"], result.summary)
    with open(paths["grid"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump([config_to_dict(c) for c in result.configs], fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
