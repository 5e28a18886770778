"""Learned tabular dynamics, bootstrap ensembles and coverage quantities."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .datagen import TransitionDataset
from .mdp import DimensionError, MdpSpec, Occupancy, TabularPolicy, occupancy

UNCERTAINTY_STRATEGIES = ("max_pairwise", "max_to_mean")
ENSEMBLE_PRIORS = ("uniform", "randomized")


class ModelError(RuntimeError):
    """A learned model cannot be used as requested (e.g. undefined rows)."""


@dataclass(frozen=True, eq=False)
class LearnedModel:
    transition: np.ndarray
    pseudocount: float
    visit_counts: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=np.float64)
        n = np.asarray(self.visit_counts, dtype=np.float64)
        if T.ndim != 3 or T.shape[0] != T.shape[2] or n.shape != T.shape[:2]:
            raise DimensionError("transition must be (S, A, S) and visit_counts (S, A)")
        if self.pseudocount < 0:
            raise ValueError("pseudocount must be >= 0")
        T.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "visit_counts", n)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transition.shape[:2]

    @property
    def flagged(self) -> np.ndarray:
        """Rows with no data and no smoothing; their contents are placeholders."""
        return (self.visit_counts == 0) & (self.pseudocount == 0)

    def as_mdp(self, like: MdpSpec, reward=None) -> MdpSpec:
        """MDP with these dynamics and the reward/d0/gamma of ``like``."""
        if self.flagged.any():
            bad = [tuple(int(i) for i in x) for x in np.argwhere(self.flagged)[:5]]
            raise ModelError(f"model has undefined rows (unvisited, pseudocount 0), e.g. {bad}")
        if self.shape != like.shape:
            raise DimensionError("model and template MDP shapes differ")
        r = like.reward if reward is None else reward
        return MdpSpec(self.transition, r, like.init_dist, like.gamma,
                       r_max=like.r_max if reward is None else None)

    def to_dict(self, like: MdpSpec | None = None) -> dict:
        doc = {}
        if like is not None:
            doc.update(like.to_dict())
        S, A = self.shape
        doc.update({"n_states": S, "n_actions": A,
                    "transition": self.transition.tolist(),
                    "pseudocount": self.pseudocount,
                    "visit_counts": self.visit_counts.tolist()})
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnedModel":
        return cls(np.array(doc["transition"]), float(doc["pseudocount"]),
                   np.array(doc["visit_counts"]))


@dataclass(frozen=True, eq=False)
class ModelEnsemble:
    members: tuple[LearnedModel, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least two members")
        if len({m.shape for m in self.members}) != 1:
            raise DimensionError("ensemble members differ in shape")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def shape(self) -> tuple[int, int]:
        return self.members[0].shape

    def stacked(self) -> np.ndarray:
        return np.stack([m.transition for m in self.members])

    def mean_model(self) -> LearnedModel:
        counts = np.mean([m.visit_counts for m in self.members], axis=0)
        T = self.stacked().mean(axis=0)
        T = T / T.sum(axis=2, keepdims=True)
        return LearnedModel(T, self.members[0].pseudocount, counts)

    def to_dict(self) -> dict:
        return {"k": self.k, "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelEnsemble":
        return cls(tuple(LearnedModel.from_dict(m) for m in doc["members"]))


def _fit_from_counts(counts: np.ndarray, pseudocount: float, prior: np.ndarray | None = None) -> LearnedModel:
    S = counts.shape[2]
    n = counts.sum(axis=2)
    if prior is None:
        num = counts + pseudocount
    else:
        num = counts + pseudocount * S * prior
    den = n + pseudocount * S
    with np.errstate(invalid="ignore", divide="ignore"):
        T = num / den[..., None]
    empty = den == 0
    T[empty] = 1.0 / S
    return LearnedModel(T, float(pseudocount), n)


def fit_model(data: TransitionDataset, shape: tuple[int, int] | None = None,
              pseudocount: float = 0.1) -> LearnedModel:
    """``T(s'|s,a) = (count + c) / (n(s,a) + c*S)``; maximum likelihood for ``c = 0``."""
    if pseudocount < 0:
        raise ValueError("pseudocount must be >= 0")
    if shape is not None and tuple(shape) != data.shape:
        raise DimensionError(f"dataset shape {data.shape} does not match {tuple(shape)}")
    return _fit_from_counts(data.transition_counts(), pseudocount)


def fit_ensemble(data: TransitionDataset, shape: tuple[int, int] | None, k: int,
                 pseudocount: float, rng: np.random.Generator, prior: str = "uniform") -> ModelEnsemble:
    """``k`` models fit on bootstrap resamples of ``data``.

    ``prior="uniform"`` smooths every member toward the uniform row, so
    unvisited pairs are identical across members.  ``prior="randomized"``
    smooths member ``i`` toward its own Dirichlet(1) row; members then
    disagree wherever data is scarce and agree where it is plentiful.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if prior not in ENSEMBLE_PRIORS:
        raise ValueError(f"unknown prior {prior!r}")
    if shape is not None and tuple(shape) != data.shape:
        raise DimensionError(f"dataset shape {data.shape} does not match {tuple(shape)}")
    S, A = data.shape
    n = len(data)
    members = []
    for _ in range(k):
        idx = rng.integers(0, n, size=n)
        counts = data.subset(idx).transition_counts()
        row_prior = rng.dirichlet(np.ones(S), size=(S, A)) if prior == "randomized" else None
        members.append(_fit_from_counts(counts, pseudocount, row_prior))
    return ModelEnsemble(tuple(members))


def row_errors(tl, tt: MdpSpec) -> np.ndarray:
    """Per-pair ``||T_t(.|s,a) - T_l(.|s,a)||_1``."""
    Tl = tl.transition
    if Tl.shape != tt.transition.shape:
        raise DimensionError("model shapes differ")
    return np.abs(tt.transition - Tl).sum(axis=2)


def _weights(weight) -> np.ndarray:
    return weight.values if isinstance(weight, Occupancy) else np.asarray(weight, dtype=np.float64)


def model_error(tl, tt: MdpSpec, weight) -> float:
    """``eps_T = E_{(s,a)~weight} ||T_t - T_l||_1``."""
    w = _weights(weight)
    err = row_errors(tl, tt)
    if w.shape != err.shape:
        raise DimensionError("weight must be a state-action distribution")
    return float((w * err).sum())


def uncertainty_table(ens: ModelEnsemble, strategy: str = "max_pairwise") -> np.ndarray:
    """Ensemble disagreement ``U_hat(s, a)`` for every pair."""
    T = ens.stacked()
    if strategy == "max_pairwise":
        out = np.zeros(ens.shape)
        for i, j in itertools.combinations(range(ens.k), 2):
            np.maximum(out, np.abs(T[i] - T[j]).sum(axis=2), out=out)
        return out
    if strategy == "max_to_mean":
        return np.abs(T - T.mean(axis=0)).sum(axis=3).max(axis=0)
    raise ValueError(f"unknown uncertainty strategy {strategy!r}")


def uncertainty_hat(ens: ModelEnsemble, s: int, a: int, strategy: str = "max_pairwise") -> float:
    S, A = ens.shape
    if not (0 <= s < S and 0 <= a < A):
        raise IndexError(f"pair ({s}, {a}) out of range")
    T = ens.stacked()[:, s, a, :]
    if strategy == "max_pairwise":
        return float(max(np.abs(T[i] - T[j]).sum() for i, j in itertools.combinations(range(ens.k), 2)))
    if strategy == "max_to_mean":
        return float(np.abs(T - T.mean(axis=0)).sum(axis=1).max())
    raise ValueError(f"unknown uncertainty strategy {strategy!r}")


def policy_uncertainty(policy, tl: MdpSpec, tt: MdpSpec, behavior_weight, start=None) -> float:
    """``U(pi) = |E_{p^pi_{T_l}} err - E_{behavior} err|`` with ``err = ||T_t - T_l||_1``."""
    p_model = occupancy(policy, tl, start, "state_action")
    return abs(model_error(tl, tt, p_model) - model_error(tl, tt, behavior_weight))


def _ratio_max(p: np.ndarray, behavior: np.ndarray, atol: float = 1e-14) -> float:
    structural = (behavior <= 0) & (p > atol)
    if structural.any():
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(behavior > 0, p / np.where(behavior > 0, behavior, 1.0), 0.0)
    return float(ratio.max())


def concentrability(policy_set, tl: MdpSpec, behavior_p, start=None) -> float:
    """``max_{pi in set, (s,a)} p^pi_{T_l}(s,a) / behavior(s,a)``; ``inf`` on structural zeros."""
    b = _weights(behavior_p)
    best = 0.0
    for pol in policy_set:
        best = max(best, _ratio_max(occupancy(pol, tl, start, "state_action").values, b))
        if math.isinf(best):
            break
    return best


def max_occupancy_table(mdp: MdpSpec, start=None, tol: float = 1e-12) -> np.ndarray:
    """``max_pi p^pi(s,a)`` for every pair, over all (stochastic) policies.

    Each entry is a planning problem with reward ``1{(s,a)}``; all ``S*A``
    are solved together by value iteration and then evaluated exactly with
    the greedy deterministic policies, which attain the maximum.
    """
    S, A = mdp.shape
    d0 = mdp.init_dist if start is None else np.asarray(start, dtype=np.float64)
    K = S * A
    R = np.eye(K).reshape(S, A, K)
    T = mdp.transition
    V = np.zeros((S, K))
    for _ in range(1_000_000):
        Q = R + mdp.gamma * np.einsum("sat,tk->sak", T, V)
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) <= tol:
            V = V_new
            break
        V = V_new
    Q = R + mdp.gamma * np.einsum("sat,tk->sak", T, V)
    greedy = Q.argmax(axis=1)  # (S, K)
    out = np.empty(K)
    eye = np.eye(A)
    for k in range(K):
        pol = eye[greedy[:, k]]
        out[k] = occupancy(pol, mdp, d0, "state_action").values.ravel()[k]
    return out.reshape(S, A)


def max_concentrability(tl: MdpSpec, behavior_p, start=None) -> float:
    """Exact ``C`` over the whole policy class (see ``max_occupancy_table``)."""
    return _ratio_max(max_occupancy_table(tl, start), _weights(behavior_p))


def deterministic_policies(n_states: int, n_actions: int):
    eye = np.eye(n_actions)
    for actions in itertools.product(range(n_actions), repeat=n_states):
        yield TabularPolicy(eye[list(actions)])


def save_model_json(model: LearnedModel, like: MdpSpec | None = None) -> str:
    return json.dumps(model.to_dict(like))
