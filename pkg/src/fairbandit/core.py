"""Ground-truth bandit instances, slates, biased rewards and regrets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import InvalidInputError


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GroupPartition:
    assignment: tuple[int, ...]
    m: int
    sensitive_group: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("need at least one group")
        counts = np.bincount(np.asarray(self.assignment, dtype=int), minlength=self.m)
        if len(counts) != self.m or np.any(counts == 0):
            raise ConfigError(f"every group must be nonempty, got sizes {counts.tolist()}")
        if not 0 <= self.sensitive_group < self.m:
            raise ConfigError("sensitive group index out of range")

    @classmethod
    def two_groups(cls, n: int, n_sensitive: int) -> "GroupPartition":
        """Arms 0..n_sensitive-1 form the sensitive group 0, the rest group 1."""
        if not 0 < n_sensitive < n:
            raise ConfigError(f"need 0 < n_sensitive < n, got {n_sensitive} of {n}")
        return cls(tuple([0] * n_sensitive + [1] * (n - n_sensitive)), 2, 0)

    @classmethod
    def single(cls, n: int) -> "GroupPartition":
        return cls(tuple([0] * n), 1, 0)

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def groups(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=int)

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.groups == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.m)

    def sensitive_mask(self) -> np.ndarray:
        return self.groups == self.sensitive_group

    def is_sensitive(self, arm: int) -> bool:
        return self.assignment[arm] == self.sensitive_group


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 10
    d: int = 2
    n_sensitive: int = 5
    c: float = 10.0
    mu: float = 10.0
    bias_sign: int = -1
    noise: bool = True
    # "uniform" or "dominated" (non-sensitive betas dominate sensitive ones)
    construction: str = "uniform"
    recenter: bool = False

    def validate(self):
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if not 0 < self.n_sensitive < self.n:
            raise ConfigError(
                f"group sizes must sum to n: n_sensitive={self.n_sensitive}, n={self.n}")
        if self.c <= 0:
            raise ConfigError("coefficient range c must be positive")
        if self.mu < 0:
            raise ConfigError("bias mean mu must be nonnegative")
        if self.bias_sign not in (-1, 1):
            raise ConfigError("bias_sign must be +1 or -1")
        if self.construction not in ("uniform", "dominated"):
            raise ConfigError(f"unknown construction {self.construction!r}")


@dataclass(frozen=True)
class BanditInstance:
    betas: np.ndarray
    psis: np.ndarray
    partition: GroupPartition
    bias_sign: int = -1
    noise_enabled: bool = True

    def __post_init__(self):
        betas = np.array(self.betas, dtype=float)
        psis = np.array(self.psis, dtype=float)
        if betas.ndim != 2 or psis.ndim != 2 or betas.shape[1] != psis.shape[1]:
            raise ConfigError("betas and psis must be 2-D with equal dimension")
        if betas.shape[0] != self.partition.n:
            raise ConfigError("partition size does not match the number of arms")
        if psis.shape[0] != self.partition.m:
            raise ConfigError("need one bias vector per group")
        betas.setflags(write=False)
        psis.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "psis", psis)

    @property
    def n(self) -> int:
        return self.betas.shape[0]

    @property
    def d(self) -> int:
        return self.betas.shape[1]

    def bias_vectors(self) -> np.ndarray:
        """Per-arm signed bias vectors, shape (n, d)."""
        return self.bias_sign * self.psis[self.partition.groups]

    def true_rewards(self, contexts) -> np.ndarray:
        return np.einsum("nd,nd->n", self.betas, contexts)

    def expected_rewards(self, contexts) -> np.ndarray:
        """Noise-free biased rewards for every arm of a slate."""
        return np.einsum("nd,nd->n", self.betas + self.bias_vectors(), contexts)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "betas": self.betas.tolist(),
            "psis": self.psis.tolist(),
            "partition": {
                "assignment": list(self.partition.assignment),
                "m": self.partition.m,
                "sensitive_group": self.partition.sensitive_group,
            },
            "bias_sign": self.bias_sign,
            "noise_enabled": self.noise_enabled,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BanditInstance":
        p = doc["partition"]
        inst = cls(
            betas=np.asarray(doc["betas"], dtype=float),
            psis=np.asarray(doc["psis"], dtype=float),
            partition=GroupPartition(tuple(p["assignment"]), p["m"], p.get("sensitive_group", 0)),
            bias_sign=int(doc.get("bias_sign", -1)),
            noise_enabled=bool(doc.get("noise_enabled", True)),
        )
        if inst.n != doc["n"] or inst.d != doc["d"]:
            raise ConfigError("declared n/d do not match the stored vectors")
        return inst

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "BanditInstance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Slate:
    round: int
    contexts: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RoundOutcome:
    arm: int
    reward: float
    true_regret: float
    biased_regret: float
    explored: bool


def generate_instance(config: SyntheticConfig, rng: np.random.Generator) -> BanditInstance:
    config.validate()
    n, d, k = config.n, config.d, config.n_sensitive
    partition = GroupPartition.two_groups(n, k)
    if config.construction == "dominated":
        # every non-sensitive coefficient exceeds every sensitive one
        half = config.c / 2.0
        betas = np.empty((n, d))
        betas[:k] = rng.uniform(0.0, half, size=(k, d))
        betas[k:] = rng.uniform(half, config.c, size=(n - k, d))
    else:
        betas = rng.uniform(0.0, config.c, size=(n, d))
    psis = np.zeros((2, d))
    psis[partition.sensitive_group] = rng.uniform(0.0, 2.0 * config.mu, size=d)
    inst = BanditInstance(betas, psis, partition, config.bias_sign, config.noise)
    if config.recenter:
        inst = recenter_groups(inst)
    return inst


def recenter_groups(instance: BanditInstance) -> BanditInstance:
    """Shift each group's betas so every group mean equals the overall mean."""
    betas = np.array(instance.betas)
    overall = betas.mean(axis=0)
    for j in range(instance.partition.m):
        idx = instance.partition.members(j)
        betas[idx] += overall - betas[idx].mean(axis=0)
    return BanditInstance(betas, instance.psis, instance.partition,
                          instance.bias_sign, instance.noise_enabled)


def sample_slate(instance: BanditInstance, t: int, rng: np.random.Generator) -> Slate:
    """Uniform(0,1)^d contexts scaled by 1/sqrt(d), so every norm is <= 1."""
    if t < 1:
        raise InvalidInputError("rounds are numbered from 1")
    contexts = rng.random((instance.n, instance.d)) / np.sqrt(instance.d)
    contexts.setflags(write=False)
    return Slate(t, contexts)


def true_reward(instance: BanditInstance, arm: int, x) -> float:
    return float(np.dot(instance.betas[arm], x))


def observed_reward(instance: BanditInstance, arm: int, x, rng: np.random.Generator) -> float:
    x = np.asarray(x, dtype=float)
    r = float(np.dot(instance.betas[arm], x))
    # non-sensitive groups carry a zero bias vector in the two-group model
    psi = instance.psis[instance.partition.assignment[arm]]
    r += instance.bias_sign * float(np.dot(psi, x))
    if instance.noise_enabled:
        r += float(rng.standard_normal())
    return r


def round_regrets(instance: BanditInstance, slate: Slate, chosen: int) -> tuple[float, float]:
    """(true regret, biased regret) of pulling ``chosen`` on this slate."""
    if not 0 <= chosen < instance.n:
        raise InvalidInputError(f"arm {chosen} out of range")
    f = instance.true_rewards(slate.contexts)
    g = instance.expected_rewards(slate.contexts)
    return float(f.max() - f[chosen]), float(g.max() - g[chosen])
