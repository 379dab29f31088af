"""CSV dataset adapter.

Arms are the cross product of a sensitive attribute and a bucketed
attribute. The remaining columns become the context, one column is the
reward, and every round draws one row per arm uniformly with replacement.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .core import GroupPartition, Slate
from .experiments import Trajectory
from .numerics import rng_stream
from .policies import Policy

log = logging.getLogger(__name__)

ANY_OTHER = "*"


class DataError(Exception):
    pass


class SchemaError(DataError):
    pass


@dataclass(frozen=True)
class DatasetSchema:
    sensitive_column: str
    # first entry is the sensitive group; "*" collects every other value
    sensitive_values: tuple
    bucket_column: str
    reward_column: str
    # half-open (lo, hi] numeric buckets, or categorical bucket labels
    buckets: tuple[tuple[float, float], ...] = ()
    bucket_values: tuple = ()
    nominal_columns: tuple[str, ...] = ()
    exclude: tuple[str, ...] = ()
    normalize_reward: bool = True
    # "higher" means a larger reward value is a better pull
    reward_orientation: str = "higher"

    def __post_init__(self):
        if len(self.sensitive_values) < 2:
            raise SchemaError("need at least two sensitive values")
        if bool(self.buckets) == bool(self.bucket_values):
            raise SchemaError("give exactly one of 'buckets' or 'bucket_values'")
        prev_hi = -math.inf
        for lo, hi in self.buckets:
            if not lo < hi or lo < prev_hi:
                raise SchemaError(f"buckets must be ordered and disjoint, got {self.buckets}")
            prev_hi = hi
        if self.reward_orientation not in ("higher", "lower"):
            raise SchemaError("reward_orientation must be 'higher' or 'lower'")
        if self.reward_column in (self.sensitive_column, self.bucket_column):
            raise SchemaError("reward column cannot define arms")

    @property
    def n_buckets(self) -> int:
        return len(self.buckets) or len(self.bucket_values)

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        for key in ("sensitive_column", "sensitive_values", "bucket_column", "reward_column"):
            if key not in doc:
                raise SchemaError(f"schema is missing {key!r}")
        kw = dict(doc)
        kw["sensitive_values"] = tuple(doc["sensitive_values"])
        kw["buckets"] = tuple((float(lo), float(hi)) for lo, hi in doc.get("buckets") or ())
        kw["bucket_values"] = tuple(doc.get("bucket_values") or ())
        kw["nominal_columns"] = tuple(doc.get("nominal_columns") or ())
        kw["exclude"] = tuple(doc.get("exclude") or ())
        return cls(**kw)


def load_schema(path) -> DatasetSchema:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"schema {path} is not a mapping")
    return DatasetSchema.from_dict(doc)


@dataclass
class LoadReport:
    rows_read: int
    dropped_missing: int
    dropped_unmatched: int
    pool_sizes: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetEnvironment:
    contexts: np.ndarray
    rewards: np.ndarray
    pools: tuple[np.ndarray, ...]
    arm_labels: tuple[str, ...]
    partition: GroupPartition
    context_columns: tuple[str, ...]
    codes: dict
    report: LoadReport

    @property
    def n(self) -> int:
        return len(self.pools)

    @property
    def d(self) -> int:
        return self.contexts.shape[1]


def _bucket_index(values: pd.Series, schema: DatasetSchema) -> np.ndarray:
    out = np.full(len(values), -1, dtype=int)
    if schema.buckets:
        v = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
        for k, (lo, hi) in enumerate(schema.buckets):
            out[(v > lo) & (v <= hi)] = k
    else:
        labels = values.astype(str).to_numpy()
        for k, label in enumerate(schema.bucket_values):
            out[labels == str(label)] = k
    return out


def _sensitive_index(values: pd.Series, schema: DatasetSchema) -> np.ndarray:
    labels = values.astype(str).to_numpy()
    out = np.full(len(values), -1, dtype=int)
    other = None
    for k, v in enumerate(schema.sensitive_values):
        if str(v) == ANY_OTHER:
            other = k
        else:
            out[labels == str(v)] = k
    if other is not None:
        out[out == -1] = other
    return out


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    if hi > lo:
        return (col - lo) / (hi - lo)
    return np.zeros_like(col)


def load_dataset(path, schema: DatasetSchema) -> DatasetEnvironment:
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    arm_cols = [schema.sensitive_column, schema.bucket_column, schema.reward_column]
    missing = [c for c in arm_cols + list(schema.nominal_columns) + list(schema.exclude)
               if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    context_cols = [c for c in df.columns if c not in arm_cols and c not in schema.exclude]
    if not context_cols:
        raise SchemaError("no context columns left after exclusions")
    rows_read = len(df)
    df = df.dropna(subset=arm_cols + context_cols)
    dropped_missing = rows_read - len(df)

    s_idx = _sensitive_index(df[schema.sensitive_column], schema)
    b_idx = _bucket_index(df[schema.bucket_column], schema)
    reward = pd.to_numeric(df[schema.reward_column], errors="coerce").to_numpy(dtype=float)
    keep = (s_idx >= 0) & (b_idx >= 0) & np.isfinite(reward)
    dropped_unmatched = int((~keep).sum())
    df = df[keep].reset_index(drop=True)
    s_idx, b_idx, reward = s_idx[keep], b_idx[keep], reward[keep]

    codes = {}
    columns = []
    for c in context_cols:
        col = df[c]
        if c in schema.nominal_columns or not pd.api.types.is_numeric_dtype(col):
            # integer codes in order of first appearance
            labels, uniques = pd.factorize(col.astype(str), sort=False)
            codes[c] = {str(u): i for i, u in enumerate(uniques)}
            columns.append(labels.astype(float))
        else:
            columns.append(col.to_numpy(dtype=float))
    d = len(columns)
    X = np.column_stack([_minmax(c) for c in columns]) / math.sqrt(d)

    if schema.reward_orientation == "lower":
        reward = -reward
    if schema.normalize_reward:
        reward = _minmax(reward)

    nb = schema.n_buckets
    arm_of_row = s_idx * nb + b_idx
    n_arms = len(schema.sensitive_values) * nb
    bucket_names = ([f"({lo:g},{hi:g}]" for lo, hi in schema.buckets] if schema.buckets
                    else [str(v) for v in schema.bucket_values])
    labels = tuple(f"{s}|{b}" for s in schema.sensitive_values for b in bucket_names)
    pools = tuple(np.flatnonzero(arm_of_row == a) for a in range(n_arms))
    for a, pool in enumerate(pools):
        if pool.size == 0:
            raise DataError(f"arm {a} ({labels[a]}) has no rows")
    partition = GroupPartition(tuple(a // nb for a in range(n_arms)),
                               len(schema.sensitive_values), 0)
    report = LoadReport(rows_read, dropped_missing, dropped_unmatched,
                        {labels[a]: int(p.size) for a, p in enumerate(pools)})
    log.info("loaded %s: %d rows kept, %d dropped (missing), %d dropped (unmatched)",
             path, len(df), dropped_missing, dropped_unmatched)
    X.setflags(write=False)
    reward.setflags(write=False)
    return DatasetEnvironment(X, reward, pools, labels, partition, tuple(context_cols), codes, report)


def sample_rows(env: DatasetEnvironment, rng: np.random.Generator) -> np.ndarray:
    sizes = np.array([p.size for p in env.pools])
    picks = rng.integers(0, sizes)
    return np.array([pool[k] for pool, k in zip(env.pools, picks)])


def dataset_round(env: DatasetEnvironment, t: int, rng: np.random.Generator):
    """One slate of sampled rows plus the reward each arm would return."""
    rows = sample_rows(env, rng)
    return Slate(t, env.contexts[rows]), env.rewards[rows]


def run_dataset_trial(env: DatasetEnvironment, policy: Policy, T: int, seed: int) -> Trajectory:
    """Dataset-mode trial; only biased regret (best sampled reward minus chosen) is recorded."""
    data_rng = rng_stream(seed, "dataset")
    policy_rng = rng_stream(seed, "policy")
    arms = np.zeros(T, dtype=int)
    explored = np.zeros(T, dtype=bool)
    rewards = np.zeros(T)
    regret = np.zeros(T)
    for t in range(1, T + 1):
        slate, lookup = dataset_round(env, t, data_rng)
        decision = policy.select(slate, t, policy_rng)
        a = decision.arm
        policy.update(a, slate.contexts[a], lookup[a])
        arms[t - 1] = a
        explored[t - 1] = decision.explored
        rewards[t - 1] = lookup[a]
        regret[t - 1] = lookup.max() - lookup[a]
    return Trajectory(policy.name, seed, arms, env.partition.groups[arms], explored, rewards,
                      None, regret)


def synthetic_family_income(n_rows: int = 600, seed: int = 0) -> pd.DataFrame:
    """Household-survey-shaped table used as a test and demo fixture."""
    rng = np.random.default_rng(seed)
    sex = rng.choice(["Male", "Female"], size=n_rows, p=[0.7, 0.3])
    age = rng.integers(15, 100, size=n_rows)
    region = rng.choice(["NCR", "CAR", "Region I", "Region II", "ARMM"], size=n_rows)
    members = rng.integers(1, 10, size=n_rows)
    marital = rng.choice(["Married", "Single", "Widowed"], size=n_rows)
    food = np.round(rng.gamma(4.0, 20000.0, size=n_rows), 0)
    income = np.round(food * rng.uniform(2.0, 4.0, size=n_rows)
                      + np.where(sex == "Female", 40000.0, 0.0), 0)
    df = pd.DataFrame({
        "Total Household Income": income,
        "Region": region,
        "Total Food Expenditure": food,
        "Household Head Sex": sex,
        "Household Head Age": age,
        "Household Head Marital Status": marital,
        "Total Number of Family members": members,
    })
    # a few holes so the loader's drop path is exercised
    df.loc[rng.choice(n_rows, size=5, replace=False), "Total Food Expenditure"] = np.nan
    return df


def synthetic_compas(n_rows: int = 400, seed: int = 1) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    race = rng.choice(["African-American", "Caucasian", "Hispanic", "Other"], size=n_rows,
                      p=[0.5, 0.3, 0.1, 0.1])
    age_cat = rng.choice(["Less than 25", "25 - 45", "Greater than 45"], size=n_rows)
    return pd.DataFrame({
        "sex": rng.choice(["Male", "Female"], size=n_rows),
        "age_cat": age_cat,
        "race": race,
        "juv_fel_count": rng.poisson(0.1, size=n_rows),
        "priors_count": rng.poisson(3.0, size=n_rows),
        "c_charge_degree": rng.choice(["F", "M"], size=n_rows),
        "v_decile_score": rng.integers(1, 11, size=n_rows),
    })


def write_fixture(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path
