"""Imitation learners: BC, adversarial IL in the true model, and the two
model-based offline learners (state-action witness; state witness with BC
loss and uncertainty penalty).

All adversarial learners share one loop.  Each iteration computes the
learner's occupancy, takes the best-response witness against the expert's
empirical histogram (closed form: the sign of the difference), and makes a
mirror-descent step on the policy against the exact action values of that
witness.  The returned policy is the occupancy-weighted average of the
iterates from the second half of training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import TransitionDataset
from .mdp import (DimensionError, MdpSpec, Occupancy, TabularPolicy, default_horizon,
                  occupancy, q_values, truncated_occupancy, value)
from .models import ModelEnsemble, uncertainty_table

START_OPTIONS = ("init", "expert_states", "behavior_states", "arbitrary")
PENALTY_MODES = ("state", "state_action")
UPDATE_WEIGHTINGS = ("uniform", "budget")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Witness:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("state", "state_action"):
            raise ValueError(f"unknown witness kind {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if np.any(np.abs(v) > 1.0 + 1e-12):
            raise ValueError("witness must satisfy ||f||_inf <= 1")
        object.__setattr__(self, "values", v)

    def expectation(self, dist) -> float:
        d = dist.values if isinstance(dist, Occupancy) else np.asarray(dist, dtype=np.float64)
        return float((self.values * d).sum())


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 300
    learner_lr: float = 1.0
    lambda_u: float = 0.0
    bc_weight: float = 1.0
    start_dist: str = "behavior_states"
    horizon_h: int | str = "auto"
    delta: float = 0.1
    seed: int = 0
    penalty_mode: str = "state"
    update_weighting: str = "uniform"
    average_from: float = 0.5
    rollout_budget: float = 100.0

    def __post_init__(self):
        if self.iters < 1:
            raise ConfigError("iters must be positive")
        if self.learner_lr <= 0:
            raise ConfigError("learner_lr must be > 0")
        if self.lambda_u < 0 or self.bc_weight < 0:
            raise ConfigError("lambda_u and bc_weight must be >= 0")
        if self.start_dist not in START_OPTIONS:
            raise ConfigError(f"start_dist must be one of {START_OPTIONS}")
        if not (self.horizon_h in ("auto", "inf") or (isinstance(self.horizon_h, int) and self.horizon_h >= 1)):
            raise ConfigError("horizon_h must be 'auto', 'inf' or a positive integer")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.penalty_mode not in PENALTY_MODES:
            raise ConfigError(f"penalty_mode must be one of {PENALTY_MODES}")
        if self.update_weighting not in UPDATE_WEIGHTINGS:
            raise ConfigError(f"update_weighting must be one of {UPDATE_WEIGHTINGS}")
        if self.rollout_budget <= 0:
            raise ConfigError("rollout_budget must be > 0")
        if not 0 <= self.average_from < 1:
            raise ConfigError("average_from must lie in [0, 1)")

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **kw})

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class LearnerOutput:
    policy: TabularPolicy
    final_witness: Witness
    training_curve: list = field(default_factory=list)
    final_ipm: float = float("nan")
    learner: str = ""

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "policy": self.policy.probs.tolist(),
            "witness": {"kind": self.final_witness.kind,
                        "values": self.final_witness.values.tolist()},
            "final_ipm": self.final_ipm,
            "training_curve": [{"iter": i, "ipm_value": ipm, "bc_loss": bc, "mean_uncertainty": u}
                               for i, ipm, bc, u in self.training_curve],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnerOutput":
        curve = [(r["iter"], r["ipm_value"], r["bc_loss"], r["mean_uncertainty"])
                 for r in doc["training_curve"]]
        return cls(TabularPolicy(np.array(doc["policy"])),
                   Witness(doc["witness"]["kind"], np.array(doc["witness"]["values"])),
                   curve, doc.get("final_ipm", float("nan")), doc.get("learner", ""))


# --- behavioral cloning -----------------------------------------------------

def bc_fit(expert_data: TransitionDataset, shape: tuple[int, int] | None = None,
           fallback: str = "uniform", prior_policy: TabularPolicy | None = None) -> TabularPolicy:
    """Empirical conditional action frequencies; ``fallback`` on unseen states.

    ``fallback="argmax_prior"`` uses the greedy action of ``prior_policy``
    (uniform when no prior is given).
    """
    if len(expert_data) == 0:
        raise ValueError("expert data is empty")
    if shape is not None and tuple(shape) != expert_data.shape:
        raise DimensionError("dataset shape mismatch")
    S, A = expert_data.shape
    counts = expert_data.state_action_counts()
    n_s = counts.sum(axis=1, keepdims=True)
    if fallback == "uniform" or prior_policy is None:
        fb = np.full((S, A), 1.0 / A)
    elif fallback == "argmax_prior":
        fb = np.eye(A)[prior_policy.greedy_actions()]
    else:
        raise ValueError(f"unknown fallback {fallback!r}")
    probs = np.where(n_s > 0, counts / np.where(n_s > 0, n_s, 1.0), fb)
    return TabularPolicy(probs)


def bc_loss(policy, expert_data: TransitionDataset) -> float:
    """``1/M sum_m ||delta_{a_m} - pi(.|s_m)||_1``."""
    pi = policy.probs if isinstance(policy, TabularPolicy) else policy
    return float(np.mean(2.0 * (1.0 - pi[expert_data.states, expert_data.actions])))


def bc_gradient(policy, expert_data: TransitionDataset) -> np.ndarray:
    """Negative gradient of ``bc_loss`` with respect to ``pi(a|s)``.

    For ``0 < pi(a|s) < 1`` this is ``(n_s / M) * (2 q_s(a) - 1)`` with
    ``q_s`` the expert's empirical action distribution at ``s`` and ``n_s``
    its sample count; zero on states absent from the data.
    """
    pi = policy.probs if isinstance(policy, TabularPolicy) else policy
    counts = expert_data.state_action_counts()
    if counts.shape != pi.shape:
        raise DimensionError("policy and dataset shapes differ")
    n_s = counts.sum(axis=1, keepdims=True)
    return (2.0 * counts - n_s) / len(expert_data)


# --- witness and policy step -----------------------------------------------

def best_witness(target, current) -> Witness:
    """Maximiser of ``E_target f - E_current f`` over ``||f||_inf <= 1``."""
    if isinstance(target, Occupancy) and isinstance(current, Occupancy) and target.kind != current.kind:
        raise ValueError(f"kind mismatch: {target.kind} vs {current.kind}")
    t = target.values if isinstance(target, Occupancy) else np.asarray(target, dtype=np.float64)
    c = current.values if isinstance(current, Occupancy) else np.asarray(current, dtype=np.float64)
    if t.shape != c.shape:
        raise DimensionError(f"shape mismatch: {t.shape} vs {c.shape}")
    kind = "state" if t.ndim == 1 else "state_action"
    return Witness(kind, np.sign(t - c))


def ipm_value(f: Witness, target, current) -> float:
    return f.expectation(target) - f.expectation(current)


def signal_reward(signal, shape: tuple[int, int]) -> np.ndarray:
    v = signal.values if isinstance(signal, Witness) else np.asarray(signal, dtype=np.float64)
    if v.shape == shape:
        return v
    if v.shape == shape[:1]:
        return np.repeat(v[:, None], shape[1], axis=1)
    raise DimensionError(f"signal shape {v.shape} incompatible with {shape}")


def inner_policy_step(current, signal, model: MdpSpec, bc_grad_weight: float = 0.0,
                      expert_data: TransitionDataset | None = None, lr: float = 1.0,
                      state_weight: np.ndarray | None = None) -> TabularPolicy:
    """One exponentiated-gradient step on every policy row.

    ``pi'(a|s) ∝ pi(a|s) exp(lr * (w(s) Q_f(s,a) + bc_grad_weight g_bc(s,a)))``
    with ``Q_f`` the action value of reward ``signal`` in ``model`` scaled by
    ``(1 - gamma)`` (so it lies in the witness range) and ``w`` an optional
    per-state weight (default 1).
    """
    pi = current.probs if isinstance(current, TabularPolicy) else np.asarray(current, dtype=np.float64)
    if pi.shape != model.shape:
        raise DimensionError("policy and model shapes differ")
    r = signal_reward(signal, model.shape)
    Q = (1.0 - model.gamma) * q_values(pi, model, r)
    if state_weight is not None:
        Q = Q * np.asarray(state_weight, dtype=np.float64)[:, None]
    step = Q
    if bc_grad_weight > 0:
        if expert_data is None:
            raise ValueError("bc_grad_weight > 0 requires expert_data")
        step = step + bc_grad_weight * bc_gradient(pi, expert_data)
    logits = np.log(np.clip(pi, 1e-300, None)) + lr * step
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w[pi <= 0] = 0.0
    return TabularPolicy(w / w.sum(axis=1, keepdims=True))


def normalized_score(policy, mdp_true: MdpSpec, expert_policy, random_policy=None) -> float:
    """Affine score: random policy 0, expert 1."""
    if random_policy is None:
        random_policy = TabularPolicy.uniform(*mdp_true.shape)
    v_e = value(expert_policy, mdp_true)
    v_r = value(random_policy, mdp_true)
    if abs(v_e - v_r) <= 1e-12:
        raise ValueError("expert and random policies have the same value; score undefined")
    return (value(policy, mdp_true) - v_r) / (v_e - v_r)


# --- shared adversarial loop ------------------------------------------------

def resolve_start(option: str, mdp: MdpSpec, expert_data: TransitionDataset | None,
                  behavior_data: TransitionDataset | None) -> np.ndarray:
    S = mdp.n_states
    if option == "init":
        return mdp.init_dist
    if option == "expert_states":
        if expert_data is None or not len(expert_data):
            raise ConfigError("start_dist 'expert_states' requires expert data")
        return expert_data.state_histogram()
    if option == "behavior_states":
        if behavior_data is None or not len(behavior_data):
            raise ConfigError("start_dist 'behavior_states' requires behavior data")
        return behavior_data.state_histogram()
    if option == "arbitrary":
        return np.full(S, 1.0 / S)
    raise ConfigError(f"unknown start_dist {option!r}")


def _learner_occupancy(pi, model, start, horizon, kind):
    if horizon is None:
        return occupancy(pi, model, start, kind)
    return truncated_occupancy(pi, model, start, horizon, kind)


class _Averager:
    """Occupancy-weighted policy average: the mixed strategy's stationary policy."""

    def __init__(self, shape):
        self.num = np.zeros(shape)
        self.den = np.zeros(shape[0])
        self.plain = np.zeros(shape)
        self.n = 0

    def add(self, pi, d_state):
        self.num += d_state[:, None] * pi
        self.den += d_state
        self.plain += pi
        self.n += 1

    def policy(self) -> TabularPolicy:
        plain = self.plain / self.n
        probs = np.where(self.den[:, None] > 1e-300,
                         self.num / np.where(self.den > 1e-300, self.den, 1.0)[:, None], plain)
        return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))


def _adversarial_loop(*, model: MdpSpec, target: np.ndarray, kind: str, cfg: TrainConfig,
                      start: np.ndarray, horizon: int | None, expert_data: TransitionDataset,
                      bc_weight: float, u_table: np.ndarray | None, lambda_u: float,
                      learner: str) -> LearnerOutput:
    S, A = model.shape
    pi = np.full((S, A), 1.0 / A)
    avg = _Averager((S, A))
    avg_start = int(np.floor(cfg.average_from * cfg.iters))
    curve = []
    f = None
    for it in range(cfg.iters):
        occ = _learner_occupancy(pi, model, start, horizon, kind)
        f = best_witness(target, occ.values)
        ipm = ipm_value(f, target, occ)
        d_state = occ.values if kind == "state" else occ.values.sum(axis=1)
        mean_u = 0.0
        signal = f.values
        if u_table is not None:
            u_s = (pi * u_table).sum(axis=1)
            mean_u = float(d_state @ u_s)
            if lambda_u > 0:
                if cfg.penalty_mode == "state":
                    signal = f.values - lambda_u * u_s
                else:
                    signal = signal_reward(f, (S, A)) - lambda_u * u_table
        curve.append((it, ipm, bc_loss(pi, expert_data), mean_u))
        if it >= avg_start:
            avg.add(pi, occupancy(pi, model, start).values)
        weight = None
        if cfg.update_weighting == "budget":
            # expected rollout visits per state, capped at one full update
            weight = np.minimum(1.0, cfg.rollout_budget * d_state)
        pi = inner_policy_step(pi, signal, model, bc_weight, expert_data, cfg.learner_lr,
                               state_weight=weight).probs
    out_policy = avg.policy()
    final_occ = _learner_occupancy(out_policy.probs, model, start, horizon, kind)
    final_f = best_witness(target, final_occ.values)
    return LearnerOutput(out_policy, final_f, curve, ipm_value(final_f, target, final_occ), learner)


def _check_expert(expert_data):
    if expert_data is None or len(expert_data) == 0:
        raise ValueError("expert data must contain at least one sample (M >= 1)")


def adversarial_il_true_model(expert_data: TransitionDataset, mdp_true: MdpSpec,
                              cfg: TrainConfig = TrainConfig()) -> LearnerOutput:
    """Min-max imitation with exact occupancies in the true dynamics."""
    _check_expert(expert_data)
    return _adversarial_loop(model=mdp_true, target=expert_data.state_action_histogram(),
                             kind="state_action", cfg=cfg, start=mdp_true.init_dist, horizon=None,
                             expert_data=expert_data, bc_weight=0.0, u_table=None, lambda_u=0.0,
                             learner="adv_il")


def algorithm1(expert_data: TransitionDataset, tl: MdpSpec,
               cfg: TrainConfig = TrainConfig()) -> LearnerOutput:
    """Same loop as ``adversarial_il_true_model`` with occupancies taken in ``tl``."""
    _check_expert(expert_data)
    return _adversarial_loop(model=tl, target=expert_data.state_action_histogram(),
                             kind="state_action", cfg=cfg, start=tl.init_dist, horizon=None,
                             expert_data=expert_data, bc_weight=0.0, u_table=None, lambda_u=0.0,
                             learner="alg1")


def resolve_horizon(cfg: TrainConfig, gamma: float) -> int | None:
    if cfg.horizon_h == "inf":
        return None
    if cfg.horizon_h == "auto":
        return default_horizon(gamma)
    return int(cfg.horizon_h)


def algorithm2(expert_data: TransitionDataset, tl: MdpSpec, ensemble: ModelEnsemble | None = None,
               cfg: TrainConfig = TrainConfig(), behavior_data: TransitionDataset | None = None,
               uncertainty_strategy: str = "max_pairwise") -> LearnerOutput:
    """State-witness learner in ``tl`` with BC loss and ensemble penalty.

    Per iteration: learner state occupancy in ``tl`` from ``cfg.start_dist``
    (H-step truncated unless ``horizon_h == "inf"``), sign witness against
    the expert state histogram, penalty ``lambda_u * U_hat``, then a policy
    step that also descends the BC loss with weight ``cfg.bc_weight``.
    """
    _check_expert(expert_data)
    start = resolve_start(cfg.start_dist, tl, expert_data, behavior_data)
    u_table = None if ensemble is None else uncertainty_table(ensemble, uncertainty_strategy)
    if u_table is not None and u_table.shape != tl.shape:
        raise DimensionError("ensemble and model shapes differ")
    return _adversarial_loop(model=tl, target=expert_data.state_histogram(), kind="state",
                             cfg=cfg, start=start, horizon=resolve_horizon(cfg, tl.gamma),
                             expert_data=expert_data, bc_weight=cfg.bc_weight, u_table=u_table,
                             lambda_u=cfg.lambda_u, learner="alg2")
