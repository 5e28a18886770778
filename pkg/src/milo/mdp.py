"""Exact finite-MDP machinery.

Occupancies, values, transition operators and Monte-Carlo rollouts for
small tabular MDPs.  Everything is dense numpy; state spaces are assumed to
be at most a few hundred states, so linear systems are solved directly.

Conventions
-----------
``transition[s, a, s']`` is the probability of moving to ``s'``.
``policy.probs[s, a]`` is the probability of ``a`` in ``s``.
``transition_operator`` returns the column-stochastic matrix ``P[s', s]`` so
that a state distribution ``d`` is pushed forward as ``P @ d``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_ATOL = 1e-12
OCC_ATOL = 1e-9


class DimensionError(ValueError):
    """Array shapes of MDP, policy or distribution disagree."""


def _as_float_array(x, ndim, name):
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_simplex_rows(arr, name, atol=ROW_ATOL):
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has negative or non-finite entries")
    err = np.max(np.abs(arr.sum(axis=-1) - 1.0))
    if err > atol:
        raise ValueError(f"{name} rows do not sum to 1 (max error {err:.3g})")


@dataclass(frozen=True, eq=False)
class MdpSpec:
    """Finite discounted MDP ``(S, A, T, r, d0, gamma)``."""

    transition: np.ndarray
    reward: np.ndarray
    init_dist: np.ndarray
    gamma: float
    r_max: float | None = None

    def __post_init__(self):
        T = _as_float_array(self.transition, 3, "transition")
        r = _as_float_array(self.reward, 2, "reward")
        d0 = _as_float_array(self.init_dist, 1, "init_dist")
        S, A, S2 = T.shape
        if S != S2 or S < 1 or A < 1:
            raise DimensionError(f"transition must have shape (S, A, S), got {T.shape}")
        if r.shape != (S, A):
            raise DimensionError(f"reward must have shape {(S, A)}, got {r.shape}")
        if d0.shape != (S,):
            raise DimensionError(f"init_dist must have shape {(S,)}, got {d0.shape}")
        _check_simplex_rows(T, "transition")
        _check_simplex_rows(d0, "init_dist")
        if not 0.0 < float(self.gamma) < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        r_max = float(np.max(r)) if self.r_max is None else float(self.r_max)
        if np.any(r < 0) or np.any(r > r_max + 1e-12):
            raise ValueError("reward entries must lie in [0, r_max]")
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "init_dist", d0)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", r_max)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.transition.shape[:2]

    @property
    def horizon(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    def replace(self, **changes) -> "MdpSpec":
        kw = dict(transition=self.transition, reward=self.reward,
                  init_dist=self.init_dist, gamma=self.gamma, r_max=self.r_max)
        if "reward" in changes and "r_max" not in changes:
            kw["r_max"] = None
        kw.update(changes)
        return MdpSpec(**kw)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "r_max": self.r_max,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "init_dist": self.init_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MdpSpec":
        mdp = cls(transition=doc["transition"], reward=doc["reward"],
                  init_dist=doc["init_dist"], gamma=doc["gamma"], r_max=doc.get("r_max"))
        if mdp.n_states != doc["n_states"] or mdp.n_actions != doc["n_actions"]:
            raise DimensionError("n_states/n_actions disagree with array shapes")
        return mdp

    def to_json(self) -> str:
        # repr-exact floats: json uses float.__repr__, which round-trips
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MdpSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        p = _as_float_array(self.probs, 2, "policy")
        _check_simplex_rows(p, "policy")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def from_unnormalized(cls, weights: np.ndarray) -> "TabularPolicy":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(axis=1, keepdims=True))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


@dataclass(frozen=True, eq=False)
class Occupancy:
    """Normalised discounted visitation over states or state-action pairs.

    ``values`` is 1-D for ``kind="state"`` and ``(S, A)`` for
    ``kind="state_action"``.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("state", "state_action"):
            raise ValueError(f"unknown occupancy kind {self.kind!r}")
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != (1 if self.kind == "state" else 2):
            raise DimensionError(f"{self.kind} occupancy has wrong rank {v.ndim}")
        if np.any(v < -OCC_ATOL) or abs(v.sum() - 1.0) > OCC_ATOL:
            raise ValueError("occupancy must be a probability distribution")
        v = np.clip(v, 0.0, None)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def state_marginal(self) -> "Occupancy":
        if self.kind == "state":
            return self
        return Occupancy("state", self.values.sum(axis=1))


@dataclass(frozen=True)
class Trajectory:
    start_state: int
    steps: tuple[tuple[int, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for (s0, _, s1), (t0, _, _) in zip(self.steps, self.steps[1:]):
            if s1 != t0:
                raise ValueError("trajectory steps do not chain")
        if self.steps and self.steps[0][0] != self.start_state:
            raise ValueError("first step does not begin at start_state")

    @property
    def states(self) -> list[int]:
        return [s for s, _, _ in self.steps]

    def __len__(self):
        return len(self.steps)


def _probs(policy) -> np.ndarray:
    return policy.probs if isinstance(policy, TabularPolicy) else np.asarray(policy, dtype=np.float64)


def _check_policy(policy, mdp: MdpSpec) -> np.ndarray:
    pi = _probs(policy)
    if pi.shape != mdp.shape:
        raise DimensionError(f"policy shape {pi.shape} does not match MDP {mdp.shape}")
    return pi


def _check_dist(start, n_states) -> np.ndarray:
    d = np.asarray(start, dtype=np.float64)
    if d.shape != (n_states,):
        raise DimensionError(f"start distribution must have shape ({n_states},), got {d.shape}")
    if abs(d.sum() - 1.0) > 1e-9 or np.any(d < 0):
        raise ValueError("start must be a probability distribution")
    return d


def state_transition_matrix(policy, mdp: MdpSpec) -> np.ndarray:
    """Row-stochastic ``M[s, s'] = sum_a pi(a|s) T(s'|s, a)``."""
    pi = _check_policy(policy, mdp)
    return np.einsum("sa,sat->st", pi, mdp.transition)


def transition_operator(policy, mdp: MdpSpec) -> np.ndarray:
    """Column-stochastic push-forward ``P[s', s]``."""
    return state_transition_matrix(policy, mdp).T


def _resolvent_solve(policy, mdp, rhs):
    M = state_transition_matrix(policy, mdp)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * M.T, rhs)


def occupancy(policy, mdp: MdpSpec, start=None, kind: str = "state") -> Occupancy:
    """Discounted occupancy ``(1-gamma) (I - gamma P)^{-1} start``."""
    start = mdp.init_dist if start is None else _check_dist(start, mdp.n_states)
    d = (1.0 - mdp.gamma) * _resolvent_solve(policy, mdp, start)
    d = np.clip(d, 0.0, None)
    d /= d.sum()
    if kind == "state":
        return Occupancy("state", d)
    if kind == "state_action":
        return Occupancy("state_action", d[:, None] * _check_policy(policy, mdp))
    raise ValueError(f"unknown occupancy kind {kind!r}")


def truncated_occupancy(policy, mdp: MdpSpec, start, horizon: int, kind: str = "state") -> Occupancy:
    """Discounted visitation over the first ``horizon`` steps, renormalised."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    P = transition_operator(policy, mdp)
    d_t = _check_dist(start, mdp.n_states).copy()
    acc = np.zeros(mdp.n_states)
    w = 1.0
    for _ in range(horizon):
        acc += w * d_t
        d_t = P @ d_t
        w *= mdp.gamma
    acc /= acc.sum()
    if kind == "state":
        return Occupancy("state", acc)
    return Occupancy("state_action", acc[:, None] * _probs(policy))


def default_horizon(gamma: float, tail: float = 0.1) -> int:
    """Smallest ``H`` with ``gamma**H <= tail``."""
    return max(1, math.ceil(math.log(tail) / math.log(gamma) - 1e-12))


def state_values(policy, mdp: MdpSpec, reward=None) -> np.ndarray:
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    pi = _check_policy(policy, mdp)
    if r.shape != mdp.shape:
        raise DimensionError(f"reward shape {r.shape} does not match MDP {mdp.shape}")
    M = state_transition_matrix(pi, mdp)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * M, (pi * r).sum(axis=1))


def q_values(policy, mdp: MdpSpec, reward=None) -> np.ndarray:
    """Exact discounted action values ``Q[s, a]`` of ``reward`` under ``policy``."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    V = state_values(policy, mdp, r)
    return r + mdp.gamma * mdp.transition @ V


def value(policy, mdp: MdpSpec, reward=None, start=None) -> float:
    """``V = 1/(1-gamma) * sum p(s,a) r(s,a)`` from ``start`` (default ``d0``)."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    if r.shape != mdp.shape:
        raise DimensionError(f"reward shape {r.shape} does not match MDP {mdp.shape}")
    p = occupancy(policy, mdp, start, kind="state_action").values
    return float((p * r).sum() / (1.0 - mdp.gamma))


def bellman_value(policy, mdp: MdpSpec, reward=None, tol: float = 1e-13, max_iter: int = 200_000) -> float:
    """Policy value by fixed-point iteration; independent of the linear solve."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    pi = _check_policy(policy, mdp)
    r_pi = (pi * r).sum(axis=1)
    M = state_transition_matrix(pi, mdp)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        V_new = r_pi + mdp.gamma * M @ V
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    return float(mdp.init_dist @ V)


def l1_distance(x, y) -> float:
    """L1 distance between two occupancies (or raw distributions)."""
    if isinstance(x, Occupancy) and isinstance(y, Occupancy) and x.kind != y.kind:
        raise ValueError(f"occupancy kinds differ: {x.kind} vs {y.kind}")
    xv = x.values if isinstance(x, Occupancy) else np.asarray(x, dtype=np.float64)
    yv = y.values if isinstance(y, Occupancy) else np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape:
        raise DimensionError(f"shapes differ: {xv.shape} vs {yv.shape}")
    return float(np.abs(xv - yv).sum())


def _sample_rows(cdf_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(cdf_rows.shape[0])
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a (n, k) probability matrix."""
    return _sample_rows(np.cumsum(probs, axis=1), rng)


def rollout(policy, mdp: MdpSpec, start, horizon: int, rng: np.random.Generator) -> Trajectory:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pi = _check_policy(policy, mdp)
    start = _check_dist(start, mdp.n_states)
    s = int(rng.choice(mdp.n_states, p=start))
    s0 = s
    steps = []
    for _ in range(horizon):
        a = int(rng.choice(mdp.n_actions, p=pi[s]))
        s_next = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        steps.append((s, a, s_next))
        s = s_next
    return Trajectory(start_state=s0, steps=tuple(steps))


def monte_carlo_occupancy(policy, mdp: MdpSpec, start, n_rollouts: int,
                          rng: np.random.Generator, tail: float = 1e-10) -> np.ndarray:
    """Discount-weighted state frequencies over ``n_rollouts`` parallel rollouts.

    Rollouts are truncated once ``gamma**t <= tail``; the truncated weights
    are renormalised so the estimate is a distribution.
    """
    pi = _check_policy(policy, mdp)
    start = _check_dist(start, mdp.n_states)
    horizon = default_horizon(mdp.gamma, tail)
    pi_cdf = np.cumsum(pi, axis=1)
    T_cdf = np.cumsum(mdp.transition, axis=2)
    s = _sample_rows(np.broadcast_to(np.cumsum(start), (n_rollouts, mdp.n_states)), rng)
    acc = np.zeros(mdp.n_states)
    w = 1.0
    for _ in range(horizon):
        acc += w * np.bincount(s, minlength=mdp.n_states)
        a = _sample_rows(pi_cdf[s], rng)
        s = _sample_rows(T_cdf[s, a], rng)
        w *= mdp.gamma
    return acc / acc.sum()


def dirichlet_rows(rng: np.random.Generator, shape: tuple[int, ...], n_out: int,
                   branching: int | None = None) -> np.ndarray:
    out = np.zeros(shape + (n_out,))
    flat = out.reshape(-1, n_out)
    for row in flat:
        k = n_out if branching is None else min(branching, n_out)
        support = rng.choice(n_out, size=k, replace=False)
        row[support] = rng.dirichlet(np.ones(k))
    return out


def random_mdp(n_states: int, n_actions: int, gamma: float, rng: np.random.Generator,
               branching: int | None = None, r_max: float = 1.0) -> MdpSpec:
    """Random MDP with Dirichlet(1) rows and uniform rewards.

    ``branching`` restricts each row to that many randomly chosen successors
    (Garnet-style); ``None`` keeps full support.
    """
    T = dirichlet_rows(rng, (n_states, n_actions), n_states, branching)
    r = rng.uniform(0.0, r_max, size=(n_states, n_actions))
    d0 = rng.dirichlet(np.ones(n_states))
    return MdpSpec(T, r, d0, gamma, r_max=r_max)


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))
