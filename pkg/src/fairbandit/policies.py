"""Arm-selection policies.

All five policies share :class:`PolicyState` (per-arm and per-group
observation logs plus running Gram sums) and expose ``select``/``update``.
The ``*_select`` functions are the stateless decision rules; the policy
classes bind a state to one of them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import ConfigError, GroupPartition, Slate
from .numerics import DEFAULT_RIDGE, InvalidInputError, batch_fit, interval_halfwidth

__all__ = [
    "PolicyConfig",
    "Decision",
    "PolicyState",
    "exploration_probability",
    "interval_chain",
    "sensitive_upper_bound",
    "multi_group_upper_bound",
    "top_interval_select",
    "interval_chaining_select",
    "naive_group_fair_select",
    "group_fair_select",
    "group_fair_multi_select",
    "update",
    "Policy",
    "POLICIES",
    "make_policy",
]


@dataclass(frozen=True)
class PolicyConfig:
    delta: float = 0.05
    T: int = 1000
    exploration_exponent: float = 1.0 / 3.0
    ridge: float = DEFAULT_RIDGE
    literal_upper_bounds: bool = False
    # None means: use the running mean of all observed rewards
    rho: float | None = None
    chain: str = "transitive"

    def validate(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.T < 1:
            raise ConfigError("horizon T must be at least 1")
        if self.exploration_exponent <= 0:
            raise ConfigError("exploration exponent must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        if self.chain not in ("transitive", "direct"):
            raise ConfigError(f"unknown chain mode {self.chain!r}")

    def with_horizon(self, T: int) -> "PolicyConfig":
        return replace(self, T=T)


@dataclass
class Decision:
    arm: int
    explored: bool
    upper_bounds: np.ndarray | None = None
    # centre and radius of each arm's confidence interval on beta_hat . x
    estimates: np.ndarray | None = None
    widths: np.ndarray | None = None
    chain: tuple[int, ...] | None = None
    details: dict = field(default_factory=dict)


class PolicyState:
    """Observation logs for every arm and group.

    Raw rows are kept so fits can be recomputed from scratch; the running
    Gram matrices and X^T y vectors are what the selectors actually use.
    """

    def __init__(self, n: int, d: int, partition: GroupPartition, config: PolicyConfig):
        if partition.n != n:
            raise ConfigError(f"partition covers {partition.n} arms, policy has {n}")
        config.validate()
        self.n, self.d = n, d
        self.partition = partition
        self.config = config
        m = partition.m
        self.arm_X: list[list[np.ndarray]] = [[] for _ in range(n)]
        self.arm_Y: list[list[float]] = [[] for _ in range(n)]
        self.group_X: list[list[np.ndarray]] = [[] for _ in range(m)]
        self.group_Y: list[list[float]] = [[] for _ in range(m)]
        self.arm_gram = np.zeros((n, d, d))
        self.arm_xty = np.zeros((n, d))
        self.arm_count = np.zeros(n, dtype=int)
        self.group_gram = np.zeros((m, d, d))
        self.group_xty = np.zeros((m, d))
        self.group_count = np.zeros(m, dtype=int)
        self.reward_sum = 0.0
        self.total = 0

    def arm_design(self, i: int):
        return np.array(self.arm_X[i]).reshape(-1, self.d), np.array(self.arm_Y[i])

    def group_design(self, j: int):
        return np.array(self.group_X[j]).reshape(-1, self.d), np.array(self.group_Y[j])


def update(state: PolicyState, arm: int, x, r: float) -> PolicyState:
    if not 0 <= arm < state.n:
        raise InvalidInputError(f"arm {arm} out of range")
    x = np.array(x, dtype=float).reshape(state.d)
    r = float(r)
    j = state.partition.assignment[arm]
    outer = np.outer(x, x)
    state.arm_X[arm].append(x)
    state.arm_Y[arm].append(r)
    state.arm_gram[arm] += outer
    state.arm_xty[arm] += r * x
    state.arm_count[arm] += 1
    state.group_X[j].append(x)
    state.group_Y[j].append(r)
    state.group_gram[j] += outer
    state.group_xty[j] += r * x
    state.group_count[j] += 1
    state.reward_sum += r
    state.total += 1
    return state


def exploration_probability(t: int, exponent: float = 1.0 / 3.0) -> float:
    if t < 1:
        raise InvalidInputError("rounds are numbered from 1")
    if exponent <= 0:
        raise InvalidInputError("exponent must be positive")
    return min(1.0, float(t) ** (-exponent))


@lru_cache(maxsize=4096)
def _z(tail: float) -> float:
    # radius of a unit-variance interval with the given one-sided tail
    return interval_halfwidth(1.0, tail)


def _maybe_explore(state: PolicyState, t: int, rng, arms=None) -> Decision | None:
    if rng.random() < exploration_probability(t, state.config.exploration_exponent):
        if arms is None:
            return Decision(int(rng.integers(state.n)), True)
        return Decision(int(arms[rng.integers(len(arms))]), True)
    return None


def _arm_intervals(state: PolicyState, contexts: np.ndarray, t: int):
    """beta_hat . x and the width w for every arm; unpulled arms get an infinite width."""
    n = state.n
    est = np.zeros(n)
    w = np.full(n, np.inf)
    pulled = np.flatnonzero(state.arm_count > 0)
    if pulled.size:
        coef, quad = batch_fit(state.arm_gram[pulled], state.arm_xty[pulled],
                               contexts[pulled], state.config.ridge)
        est[pulled] = np.einsum("kd,kd->k", coef, contexts[pulled])
        w[pulled] = np.sqrt(quad) * _z(state.config.delta / (2.0 * n * t))
    return est, w


def _group_terms(state: PolicyState, j: int, contexts: np.ndarray):
    """psi_hat_j . x and the group width b_j for every arm's context.

    A group with no observations contributes zero to both.
    """
    n = state.n
    if state.group_count[j] == 0:
        return np.zeros(n), np.zeros(n)
    d = state.d
    A = state.group_gram[j] + state.config.ridge * np.eye(d)
    sol = np.linalg.solve(A, np.column_stack([state.group_xty[j], contexts.T]))
    psi_x = contexts @ sol[:, 0]
    quad = np.maximum(np.einsum("nd,dn->n", contexts, sol[:, 1:]), 0.0)
    size = int(state.partition.sizes()[j])
    tail = state.config.delta / (2.0 * (n / size) * state.config.T)
    return psi_x, np.sqrt(quad) * _z(tail)


def sensitive_upper_bound(beta_x, w, psi_sens_x, b_sens, psi_other_x, b_other):
    """Optimistic bias-corrected estimate of a sensitive arm (two-group form)."""
    return beta_x + w - psi_sens_x + b_sens + psi_other_x + b_other


def multi_group_upper_bound(beta_x, w, rho, psi_x, b):
    """Optimistic estimate of an arm corrected by its own group's fit (m-group form)."""
    return beta_x + w + rho - psi_x + b


def _argmax(values: np.ndarray, arms=None) -> int:
    # np.argmax returns the first maximiser, i.e. the lowest index on ties
    if arms is None:
        return int(np.argmax(values))
    arms = np.asarray(arms)
    return int(arms[np.argmax(values[arms])])


def top_interval_select(state: PolicyState, slate: Slate, t: int, rng, arms=None) -> Decision:
    """Optimistic pull of argmax beta_hat . x + w, with decaying random exploration.

    ``arms`` optionally restricts both exploration and the argmax.
    """
    explore = _maybe_explore(state, t, rng, arms)
    if explore is not None:
        return explore
    est, w = _arm_intervals(state, slate.contexts, t)
    upper = est + w
    return Decision(_argmax(upper, arms), False, upper, est, w)


def interval_chain(lower, upper, top: int, direct: bool = False) -> list[int]:
    """Arms whose closed intervals connect to ``top`` through pairwise overlaps.

    With ``direct`` only arms overlapping ``top`` itself are kept.
    """
    if direct:
        return [i for i in range(len(upper)) if lower[i] <= upper[top] and upper[i] >= lower[top]]
    lo, hi = lower[top], upper[top]
    members = {top}
    grew = True
    while grew:
        grew = False
        for i in range(len(upper)):
            if i not in members and lower[i] <= hi and upper[i] >= lo:
                members.add(i)
                lo, hi = min(lo, lower[i]), max(hi, upper[i])
                grew = True
    return sorted(members)


def interval_chaining_select(state: PolicyState, slate: Slate, t: int, rng) -> Decision:
    explore = _maybe_explore(state, t, rng)
    if explore is not None:
        return explore
    est, w = _arm_intervals(state, slate.contexts, t)
    upper, lower = est + w, est - w
    top = _argmax(upper)
    chain = interval_chain(lower, upper, top, state.config.chain == "direct")
    arm = chain[int(rng.integers(len(chain)))] if len(chain) > 1 else chain[0]
    return Decision(arm, False, upper, est, w, tuple(chain))


def naive_group_fair_select(state: PolicyState, slate: Slate, t: int, rng) -> Decision:
    """Draw a group uniformly, then run TopInterval inside it."""
    m = state.partition.m
    j = int(rng.integers(m)) if m > 1 else 0
    arms = state.partition.members(j)
    if arms.size == 0:
        raise ConfigError(f"group {j} has no arms")
    decision = top_interval_select(state, slate, t, rng, arms)
    decision.details["group"] = j
    return decision


def group_fair_select(state: PolicyState, slate: Slate, t: int, rng) -> Decision:
    """Two-group bias-corrected TopInterval."""
    part = state.partition
    if part.m != 2:
        raise ConfigError("group_fair needs exactly two groups; use group_fair_multi")
    explore = _maybe_explore(state, t, rng)
    if explore is not None:
        return explore
    x = slate.contexts
    est, w = _arm_intervals(state, x, t)
    s = part.sensitive_group
    o = 1 - s
    psi_s, b_s = _group_terms(state, s, x)
    psi_o, b_o = _group_terms(state, o, x)
    sensitive = part.sensitive_mask()
    if state.config.literal_upper_bounds:
        upper = est.copy()
    else:
        upper = est + w
    upper[sensitive] = sensitive_upper_bound(est, w, psi_s, b_s, psi_o, b_o)[sensitive]
    upper[state.arm_count == 0] = np.inf
    details = {"psi_x": np.vstack([psi_s, psi_o]), "b": np.vstack([b_s, b_o])}
    return Decision(_argmax(upper), False, upper, est, w, details=details)


def group_fair_multi_select(state: PolicyState, slate: Slate, t: int, rng) -> Decision:
    """m-group variant: every arm is corrected by its own group's fit and shifted by rho."""
    part = state.partition
    explore = _maybe_explore(state, t, rng)
    if explore is not None:
        return explore
    x = slate.contexts
    est, w = _arm_intervals(state, x, t)
    rho = state.config.rho
    if rho is None:
        rho = state.reward_sum / state.total if state.total else 0.0
    groups = part.groups
    psi_x = np.zeros((part.m, state.n))
    b = np.zeros((part.m, state.n))
    for j in range(part.m):
        psi_x[j], b[j] = _group_terms(state, j, x)
    idx = np.arange(state.n)
    upper = multi_group_upper_bound(est, w, rho, psi_x[groups, idx], b[groups, idx])
    upper[state.arm_count == 0] = np.inf
    details = {"psi_x": psi_x, "b": b, "rho": rho}
    return Decision(_argmax(upper), False, upper, est, w, details=details)


class Policy:
    name = ""
    _select = staticmethod(top_interval_select)

    def __init__(self, n: int, d: int, partition: GroupPartition, config: PolicyConfig | None = None):
        self.state = PolicyState(n, d, partition, config or PolicyConfig())

    @property
    def config(self) -> PolicyConfig:
        return self.state.config

    def select(self, slate: Slate, t: int, rng) -> Decision:
        return type(self)._select(self.state, slate, t, rng)

    def update(self, arm: int, x, r: float):
        update(self.state, arm, x, r)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.state.n}, d={self.state.d})"


class TopInterval(Policy):
    name = "top_interval"
    _select = staticmethod(top_interval_select)


class IntervalChaining(Policy):
    name = "interval_chaining"
    _select = staticmethod(interval_chaining_select)


class NaiveGroupFair(Policy):
    name = "naive_group_fair"
    _select = staticmethod(naive_group_fair_select)


class GroupFairTopInterval(Policy):
    name = "group_fair"
    _select = staticmethod(group_fair_select)


class GroupFairMulti(Policy):
    name = "group_fair_multi"
    _select = staticmethod(group_fair_multi_select)


POLICIES = {cls.name: cls for cls in
            (TopInterval, IntervalChaining, NaiveGroupFair, GroupFairTopInterval, GroupFairMulti)}


def make_policy(name: str, n: int, d: int, partition: GroupPartition,
                config: PolicyConfig | None = None) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(n, d, partition, config)
