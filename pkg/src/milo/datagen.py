"""Expert and behavior policies, and finite offline datasets sampled from them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import (MdpSpec, TabularPolicy, occupancy, q_values, sample_categorical,
                  value)

GENERATOR_TAGS = ("expert", "behavior_wide", "behavior_narrow", "custom")


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    """Multiset of ``(s, a, s', r)`` samples plus generator metadata."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    n_states: int
    n_actions: int
    rewards: np.ndarray | None = None
    generator_tag: str = "custom"
    source_policy_id: str = ""
    seed: int | None = None
    member_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        s2 = np.asarray(self.next_states, dtype=np.int64)
        if not (s.shape == a.shape == s2.shape) or s.ndim != 1:
            raise ValueError("states, actions and next_states must be equal-length vectors")
        if s.size and (s.min() < 0 or s.max() >= self.n_states or s2.min() < 0
                       or s2.max() >= self.n_states or a.min() < 0 or a.max() >= self.n_actions):
            raise ValueError("dataset indices out of range")
        if self.generator_tag not in GENERATOR_TAGS:
            raise ValueError(f"unknown generator_tag {self.generator_tag!r}")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "next_states", s2)
        if self.rewards is not None:
            r = np.asarray(self.rewards, dtype=np.float64)
            if r.shape != s.shape:
                raise ValueError("rewards must match samples")
            object.__setattr__(self, "rewards", r)

    def __len__(self):
        return int(self.states.size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_states, self.n_actions

    def state_action_counts(self) -> np.ndarray:
        idx = self.states * self.n_actions + self.actions
        counts = np.bincount(idx, minlength=self.n_states * self.n_actions)
        return counts.reshape(self.n_states, self.n_actions).astype(np.float64)

    def transition_counts(self) -> np.ndarray:
        S, A = self.shape
        idx = (self.states * A + self.actions) * S + self.next_states
        return np.bincount(idx, minlength=S * A * S).reshape(S, A, S).astype(np.float64)

    def state_histogram(self) -> np.ndarray:
        if not len(self):
            raise ValueError("empty dataset has no histogram")
        return np.bincount(self.states, minlength=self.n_states) / len(self)

    def state_action_histogram(self) -> np.ndarray:
        if not len(self):
            raise ValueError("empty dataset has no histogram")
        return self.state_action_counts() / len(self)

    def concat(self, other: "TransitionDataset", tag: str = "custom") -> "TransitionDataset":
        if self.shape != other.shape:
            raise ValueError("cannot concatenate datasets of different shape")
        rewards = None
        if self.rewards is not None and other.rewards is not None:
            rewards = np.concatenate([self.rewards, other.rewards])
        return TransitionDataset(
            np.concatenate([self.states, other.states]),
            np.concatenate([self.actions, other.actions]),
            np.concatenate([self.next_states, other.next_states]),
            self.n_states, self.n_actions, rewards, tag,
            f"{self.source_policy_id}+{other.source_policy_id}")

    def subset(self, idx) -> "TransitionDataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.int64)
        return TransitionDataset(
            self.states[idx], self.actions[idx], self.next_states[idx],
            self.n_states, self.n_actions,
            None if self.rewards is None else self.rewards[idx],
            self.generator_tag, self.source_policy_id, self.seed)

    # JSON-lines: one header record, then one record per sample.
    def to_jsonl(self) -> str:
        header = {
            "header": True,
            "generator_tag": self.generator_tag,
            "seed": self.seed,
            "source_policy_id": self.source_policy_id,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_samples": len(self),
            "member_counts": None if self.member_counts is None else list(self.member_counts),
        }
        lines = [json.dumps(header)]
        for i in range(len(self)):
            rec = {"s": int(self.states[i]), "a": int(self.actions[i]),
                   "s_next": int(self.next_states[i]),
                   "r": None if self.rewards is None else float(self.rewards[i])}
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TransitionDataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty dataset file")
        header = json.loads(lines[0])
        if not header.get("header"):
            raise ValueError("first record must be the dataset header")
        recs = [json.loads(ln) for ln in lines[1:]]
        if len(recs) != header["n_samples"]:
            raise ValueError("sample count disagrees with header")
        has_r = bool(recs) and all(r.get("r") is not None for r in recs)
        mc = header.get("member_counts")
        return cls(
            np.array([r["s"] for r in recs], dtype=np.int64),
            np.array([r["a"] for r in recs], dtype=np.int64),
            np.array([r["s_next"] for r in recs], dtype=np.int64),
            header["n_states"], header["n_actions"],
            np.array([r["r"] for r in recs]) if has_r else None,
            header["generator_tag"], header.get("source_policy_id", ""),
            header.get("seed"), None if mc is None else tuple(mc))


@dataclass(frozen=True, eq=False)
class PolicyMixture:
    """Behavior policy given as a weighted collection of tabular policies."""

    policies: tuple[TabularPolicy, ...]
    weights: np.ndarray
    temperatures: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.policies),) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("mixture weights must be a distribution over members")
        object.__setattr__(self, "weights", w)

    def occupancy(self, mdp: MdpSpec, start=None) -> np.ndarray:
        """State-action occupancy of the mixture (weighted member occupancies)."""
        return sum(w * occupancy(p, mdp, start, "state_action").values
                   for w, p in zip(self.weights, self.policies))

    def value(self, mdp: MdpSpec) -> float:
        return float(sum(w * value(p, mdp) for w, p in zip(self.weights, self.policies)))

    def as_policy(self, mdp: MdpSpec) -> TabularPolicy:
        """Single stationary policy with the mixture's state-action occupancy."""
        p = self.occupancy(mdp)
        d = p.sum(axis=1, keepdims=True)
        fallback = sum(w * pol.probs for w, pol in zip(self.weights, self.policies))
        probs = np.where(d > 0, p / np.where(d > 0, d, 1.0), fallback)
        return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))


def optimal_q(mdp: MdpSpec, reward=None, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Value iteration until the Bellman residual is at most ``tol``."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = r + mdp.gamma * mdp.transition @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) <= tol:
            return r + mdp.gamma * mdp.transition @ V_new
        V = V_new
    raise RuntimeError("value iteration did not converge")


def solve_expert(mdp: MdpSpec, reward=None) -> TabularPolicy:
    """Deterministic optimal policy, refined by exact policy evaluation."""
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    Q = optimal_q(mdp, r)
    actions = Q.argmax(axis=1)
    # policy iteration polish: value iteration can leave near-ties unresolved
    for _ in range(100):
        pol = TabularPolicy.deterministic(actions, mdp.n_actions)
        Qp = q_values(pol, mdp, r)
        best = Qp.argmax(axis=1)
        keep = Qp[np.arange(mdp.n_states), actions] >= Qp.max(axis=1) - 1e-12
        new_actions = np.where(keep, actions, best)
        if np.array_equal(new_actions, actions):
            break
        actions = new_actions
    return TabularPolicy.deterministic(actions, mdp.n_actions)


def softmax_policy(q: np.ndarray, temperature: float) -> TabularPolicy:
    z = temperature * (q - q.max(axis=1, keepdims=True))
    w = np.exp(z)
    return TabularPolicy(w / w.sum(axis=1, keepdims=True))


def normalized_value(v: float, v_expert: float, v_random: float) -> float:
    if math.isclose(v_expert, v_random, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("expert and random policies have the same value; score undefined")
    return (v - v_random) / (v_expert - v_random)


def make_behavior_policy(mdp: MdpSpec, profile: str, rng: np.random.Generator | None = None, *,
                         n_members: int = 5, decay: float = 0.6,
                         band: tuple[float, float] = (0.45, 0.55)) -> PolicyMixture:
    """Behavior policy for the ``narrow`` or ``wide`` data profile.

    ``narrow`` is the uniform-random policy.  ``wide`` is a pyramidal mixture
    of ``softmax(tau_k * Q*)`` members, ``tau_k`` evenly spaced from 0 to
    ``tau_max``, with weights ``decay**k`` so better members are rarer.
    ``tau_max`` is found by bisection so the mixture's normalised score falls
    inside ``band``.  ``rng`` is accepted for interface symmetry; the
    construction itself is deterministic.
    """
    S, A = mdp.shape
    uniform = TabularPolicy.uniform(S, A)
    if profile == "narrow":
        return PolicyMixture((uniform,), np.ones(1), (0.0,))
    if profile != "wide":
        raise ValueError(f"unknown behavior profile {profile!r}")

    q_star = optimal_q(mdp)
    # dimensionless temperature: Q* scaled to per-step reward units
    q_unit = q_star * (1.0 - mdp.gamma) / max(mdp.r_max, 1e-12)
    v_star = value(solve_expert(mdp), mdp)
    v_rand = value(uniform, mdp)
    weights = decay ** np.arange(n_members)
    weights /= weights.sum()

    def build(tau_max):
        taus = tuple(float(t) for t in np.linspace(0.0, tau_max, n_members))
        return PolicyMixture(tuple(softmax_policy(q_unit, t) for t in taus), weights, taus)

    def score(mix):
        return normalized_value(mix.value(mdp), v_star, v_rand)

    target = 0.5 * (band[0] + band[1])
    lo, hi = 0.0, 1.0
    while score(build(hi)) < target and hi < 1e6:
        lo, hi = hi, hi * 2.0
    best = build(hi)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        mix = build(mid)
        sc = score(mix)
        best = mix
        if band[0] <= sc <= band[1] and abs(sc - target) < 0.01:
            break
        if sc < target:
            lo = mid
        else:
            hi = mid
    return best


def _sample_pairs(p_sa: np.ndarray, mdp: MdpSpec, n: int, rng: np.random.Generator):
    S, A = mdp.shape
    flat = p_sa.ravel()
    flat = np.clip(flat, 0.0, None)
    flat = flat / flat.sum()
    idx = rng.choice(S * A, size=n, p=flat)
    s, a = np.divmod(idx, A)
    s_next = sample_categorical(mdp.transition[s, a], rng)
    return s, a, s_next


def sample_dataset(policy, mdp: MdpSpec, n: int, rng: np.random.Generator, *,
                   tag: str = "custom", policy_id: str = "", seed: int | None = None,
                   start=None) -> TransitionDataset:
    """``n`` i.i.d. samples from the exact state-action occupancy of ``policy``.

    ``policy`` may be a ``TabularPolicy`` or a ``PolicyMixture``; for a
    mixture, member sample counts are drawn multinomially from its weights.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(policy, PolicyMixture):
        counts = rng.multinomial(n, policy.weights)
        parts = [_sample_pairs(occupancy(p, mdp, start, "state_action").values, mdp, int(c), rng)
                 for p, c in zip(policy.policies, counts) if c > 0]
        s, a, s2 = (np.concatenate(x) for x in zip(*parts))
        member_counts = tuple(int(c) for c in counts)
    else:
        s, a, s2 = _sample_pairs(occupancy(policy, mdp, start, "state_action").values, mdp, n, rng)
        member_counts = None
    return TransitionDataset(s, a, s2, mdp.n_states, mdp.n_actions, mdp.reward[s, a],
                             tag, policy_id, seed, member_counts)


def trajectory_length(gamma: float) -> int:
    """Steps in one "expert trajectory": the effective horizon ``ceil(1/(1-gamma))``."""
    return math.ceil(1.0 / (1.0 - gamma) - 1e-9)


def sample_trajectories(policy: TabularPolicy, mdp: MdpSpec, n_traj: int, rng: np.random.Generator, *,
                        length: int | None = None, tag: str = "custom", policy_id: str = "",
                        seed: int | None = None) -> TransitionDataset:
    """Contiguous rollouts from ``d0``, each ``length`` steps long."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    L = trajectory_length(mdp.gamma) if length is None else length
    pi = policy.probs
    s = sample_categorical(np.broadcast_to(mdp.init_dist, (n_traj, mdp.n_states)), rng)
    S_, A_, S2_ = [], [], []
    for _ in range(L):
        a = sample_categorical(pi[s], rng)
        s2 = sample_categorical(mdp.transition[s, a], rng)
        S_.append(s)
        A_.append(a)
        S2_.append(s2)
        s = s2
    # trajectory-major order keeps each rollout contiguous
    st, ac, nx = (np.stack(x, axis=1).ravel() for x in (S_, A_, S2_))
    return TransitionDataset(st, ac, nx, mdp.n_states, mdp.n_actions, mdp.reward[st, ac],
                             tag, policy_id, seed)
