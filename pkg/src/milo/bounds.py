"""Numerical verification of the imitation and offline-RL error bounds.

Each ``check_*`` computes every term of one inequality exactly (occupancies
by linear solves, concentrability by exact planning) and returns a
``BoundReport``.  ``eps_s`` and ``eps_pi`` use the ``2 * sqrt(...)`` form
that the Hoeffding steps of the proofs produce; the single-``sqrt`` form of
the theorem statements is carried alongside as ``eps_s_statement``.
Rewards are rescaled per check (``r_max <= 1``, or ``<= 1/2`` for the policy
difference lemma) and the factor is reported as ``reward_scale``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import TransitionDataset, sample_dataset, solve_expert
from .imitation import (LearnerOutput, TrainConfig, adversarial_il_true_model, algorithm1,
                        algorithm2)
from .mdp import (DimensionError, MdpSpec, Occupancy, TabularPolicy, dirichlet_rows, occupancy,
                  random_mdp, random_policy, transition_operator, value)
from .models import (concentrability, fit_model, max_occupancy_table, model_error,
                     policy_uncertainty, row_errors, _ratio_max)
from .suite import two_room

THEOREM_IDS = ("lemma1", "thm2", "thm3", "thm4", "cor2", "lemma6", "prop1", "thm5", "cor4",
               "state_chain")
HOLD_ATOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    theorem_id: str
    terms: dict
    bound_value: float
    measured_value: float
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.theorem_id not in THEOREM_IDS:
            raise ValueError(f"unknown theorem id {self.theorem_id!r}")
        for k, v in self.terms.items():
            if isinstance(v, float) and math.isnan(v):
                raise ValueError(f"term {k} is NaN")

    @property
    def holds(self) -> bool:
        return self.measured_value <= self.bound_value + HOLD_ATOL

    @property
    def slack(self) -> float:
        return self.bound_value - self.measured_value

    @property
    def vacuous(self) -> bool:
        return math.isinf(self.bound_value)

    def to_dict(self) -> dict:
        enc = lambda v: "inf" if isinstance(v, float) and math.isinf(v) else v
        return {"theorem_id": self.theorem_id,
                "terms": {k: enc(v) for k, v in self.terms.items()},
                "bound_value": enc(self.bound_value),
                "measured_value": self.measured_value,
                "holds": self.holds,
                "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, doc: dict) -> "BoundReport":
        dec = lambda v: math.inf if v == "inf" else v
        return cls(doc["theorem_id"], {k: dec(v) for k, v in doc["terms"].items()},
                   dec(doc["bound_value"]), doc["measured_value"], tuple(doc.get("flags", ())))


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1)


# --- term helpers -------------------------------------------------------------

def log_policy_count(policy_set, shape) -> float:
    """``ln |policy_set|``; ``"all"`` means every deterministic policy (``A^S``)."""
    S, A = shape
    if isinstance(policy_set, str):
        if policy_set != "all":
            raise ValueError("policy_set must be a sequence of policies or 'all'")
        return S * math.log(A)
    return math.log(len(policy_set))


def log_f_size(policy_set, shape, n_transitions: int = 2) -> float:
    """``ln(|P| (|P| - 1) n_transitions)`` computed without overflow."""
    ln_p = log_policy_count(policy_set, shape)
    if ln_p == 0.0:
        raise ValueError("the witness set needs at least two policies")
    # ln(|P| - 1) = ln|P| + ln(1 - 1/|P|)
    return ln_p + ln_p + math.log1p(-math.exp(-ln_p)) + math.log(n_transitions)


def eps_s(log_f: float, delta: float, m: int, factor: float = 2.0) -> float:
    """``factor * sqrt(ln(|F| / delta) / M)``."""
    if m < 1:
        raise ValueError("M must be >= 1")
    return factor * math.sqrt(max(log_f - math.log(delta), 0.0) / m)


def eps_pi(delta: float, m: int, factor: float = 2.0) -> float:
    return factor * math.sqrt(math.log(1.0 / delta) / m)


def policy_distance(pi, pi_hat, mdp: MdpSpec, start=None) -> float:
    """``eps_{pi, pi_hat} = E_{s ~ d^pi} ||pi(.|s) - pi_hat(.|s)||_1``."""
    p = pi.probs if isinstance(pi, TabularPolicy) else np.asarray(pi)
    q = pi_hat.probs if isinstance(pi_hat, TabularPolicy) else np.asarray(pi_hat)
    d = occupancy(p, mdp, start).values
    return float(d @ np.abs(p - q).sum(axis=1))


def _scaled(mdp: MdpSpec, cap: float) -> tuple[MdpSpec, float]:
    scale = 1.0 if mdp.r_max <= cap else cap / mdp.r_max
    if scale == 1.0:
        return mdp, 1.0
    return MdpSpec(mdp.transition, mdp.reward * scale, mdp.init_dist, mdp.gamma,
                   r_max=mdp.r_max * scale), scale


def _behavior_values(behavior_p) -> np.ndarray:
    return behavior_p.values if isinstance(behavior_p, Occupancy) else np.asarray(behavior_p, dtype=np.float64)


def coverage(tl: MdpSpec, behavior_p, policy_set="all", extra=()) -> tuple[float, str]:
    """Concentrability in ``tl`` and its scope label.

    ``"all"`` gives the exact maximum over every policy.  A finite set is
    widened with ``extra`` (the learner and the expert) so the value covers
    every policy the proofs apply it to.
    """
    b = _behavior_values(behavior_p)
    if isinstance(policy_set, str):
        return _ratio_max(max_occupancy_table(tl), b), "all_policies"
    return concentrability(list(policy_set) + list(extra), tl, b), "policy_set+learner+expert"


# --- checks -------------------------------------------------------------------

def check_lemma1(pi, pi_hat, mdp: MdpSpec) -> BoundReport:
    """Policy-difference bound ``V^pi - V^pi_hat <= E_{d^pi}||pi - pi_hat||_1 / (1-gamma)^2``."""
    m, scale = _scaled(mdp, 0.5)
    g = m.gamma
    dist = policy_distance(pi, pi_hat, m)
    measured = value(pi, m) - value(pi_hat, m)
    bound = dist / (1.0 - g) ** 2
    return BoundReport("lemma1", {"eps_pi_pihat": dist, "gamma": g, "reward_scale": scale},
                       bound, measured)


def check_theorem2(expert_data: TransitionDataset, learner_out: LearnerOutput, mdp_true: MdpSpec,
                   delta: float, f_size=None, policy_set="all", expert_policy=None) -> BoundReport:
    """``V* - V^pi_hat <= 2 eps_s / (1 - gamma)`` for the true-model adversarial learner.

    ``f_size`` overrides ``|F|``; otherwise it is derived from ``policy_set``.
    """
    m, scale = _scaled(mdp_true, 1.0)
    M = len(expert_data)
    ln_f = math.log(f_size) if f_size is not None else log_f_size(policy_set, m.shape)
    es = eps_s(ln_f, delta, M)
    expert = solve_expert(m) if expert_policy is None else expert_policy
    measured = value(expert, m) - value(learner_out.policy, m)
    bound = 2.0 * es / (1.0 - m.gamma)
    return BoundReport("thm2", {"eps_s": es, "eps_s_statement": es / 2, "F_size_log": ln_f,
                                "M": M, "delta": delta, "gamma": m.gamma, "reward_scale": scale},
                       bound, measured, ("eps_s=2sqrt",))


def holds_frequency(reports) -> float:
    reports = list(reports)
    return sum(r.holds for r in reports) / len(reports)


def _model_terms(tl: MdpSpec, mdp_true: MdpSpec, behavior_p, policy_set, learner, expert):
    if tl.shape != mdp_true.shape:
        raise DimensionError("learned and true MDP shapes differ")
    b = _behavior_values(behavior_p)
    eT = model_error(tl, mdp_true, b)
    C, scope = coverage(tl, b, policy_set, (learner, expert))
    return eT, C, scope


def _assemble(theorem_id, terms, bound, measured, scope):
    flags = ["eps_s=2sqrt", f"C_scope={scope}"]
    if math.isinf(bound):
        flags.append("vacuous")
    return BoundReport(theorem_id, terms, bound, measured, tuple(flags))


def check_theorem3(expert_data, learner_out, tl: MdpSpec, mdp_true: MdpSpec, behavior_p,
                   policy_set="all", delta: float = 0.1, f_size=None, expert_policy=None) -> BoundReport:
    """``V* - V^pi_hat <= (2 eps_s + 2 C eps_T / (1-gamma)) / (1-gamma)``."""
    m, scale = _scaled(mdp_true, 1.0)
    g, M = m.gamma, len(expert_data)
    expert = solve_expert(m) if expert_policy is None else expert_policy
    ln_f = math.log(f_size) if f_size is not None else log_f_size(policy_set, m.shape)
    es = eps_s(ln_f, delta, M)
    eT, C, scope = _model_terms(tl, m, behavior_p, policy_set, learner_out.policy, expert)
    model_term = 0.0 if eT == 0.0 else 2.0 * C * eT / (1.0 - g)
    bound = (2.0 * es + model_term) / (1.0 - g)
    measured = value(expert, m) - value(learner_out.policy, m)
    terms = {"eps_s": es, "eps_s_statement": es / 2, "eps_T": eT, "C": C, "F_size_log": ln_f,
             "M": M, "delta": delta, "gamma": g, "reward_scale": scale}
    return _assemble("thm3", terms, bound, measured, scope)


def check_theorem4(expert_data, learner_out, tl: MdpSpec, mdp_true: MdpSpec, behavior_p,
                   policy_set="all", delta: float = 0.1, f_size=None, expert_policy=None) -> BoundReport:
    """Theorem 3's bound plus ``eps_pi`` inside the parentheses."""
    rep = check_theorem3(expert_data, learner_out, tl, mdp_true, behavior_p, policy_set, delta,
                         f_size, expert_policy)
    t = dict(rep.terms)
    ep = eps_pi(delta, t["M"])
    t["eps_pi"] = ep
    t["eps_pi_statement"] = ep / 2
    bound = rep.bound_value + ep / (1.0 - t["gamma"])
    return _assemble("thm4", t, bound, rep.measured_value,
                     next(f for f in rep.flags if f.startswith("C_scope")).split("=", 1)[1])


def check_corollary2(expert_data, learner_out, tl: MdpSpec, mdp_true: MdpSpec, behavior_p,
                     policy_set="all", delta: float = 0.1, f_size=None, expert_policy=None) -> BoundReport:
    """``2 eps_s/(1-g) + (2 eps_T + U(pi_hat) + U(pi*))/(1-g)^2 + eps_{pi*,pi_hat}/(1-g)``; no ``C``."""
    m, scale = _scaled(mdp_true, 1.0)
    g, M = m.gamma, len(expert_data)
    expert = solve_expert(m) if expert_policy is None else expert_policy
    ln_f = math.log(f_size) if f_size is not None else log_f_size(policy_set, m.shape)
    es = eps_s(ln_f, delta, M)
    b = _behavior_values(behavior_p)
    eT = model_error(tl, m, b)
    u_hat = policy_uncertainty(learner_out.policy, tl, m, b)
    u_star = policy_uncertainty(expert, tl, m, b)
    e_pp = policy_distance(expert, learner_out.policy, m)
    bound = 2.0 * es / (1 - g) + (2.0 * eT + u_hat + u_star) / (1 - g) ** 2 + e_pp / (1 - g)
    measured = value(expert, m) - value(learner_out.policy, m)
    terms = {"eps_s": es, "eps_s_statement": es / 2, "eps_T": eT, "U_hat_pi": u_hat,
             "U_pi_star": u_star, "eps_pistar_pihat": e_pp, "F_size_log": ln_f, "M": M,
             "delta": delta, "gamma": g, "reward_scale": scale}
    return BoundReport("cor2", terms, bound, measured, ("eps_s=2sqrt",))


def check_lemma6(pi, tt: MdpSpec, tl: MdpSpec) -> BoundReport:
    """``||d_t - d_l||_1 <= E_p[||T_t - T_l||_1] / (1-gamma)`` with ``p`` taken in either model.

    ``bound_value`` is the smaller of the two directions, so ``holds``
    certifies both.
    """
    if tt.shape != tl.shape:
        raise DimensionError("model shapes differ")
    g = tt.gamma
    err = row_errors(tl, tt)
    p_t = occupancy(pi, tt, kind="state_action").values
    p_l = occupancy(pi, tl, tt.init_dist, "state_action").values
    measured = float(np.abs(p_t.sum(axis=1) - p_l.sum(axis=1)).sum())
    b_t = float((p_t * err).sum()) / (1 - g)
    b_l = float((p_l * err).sum()) / (1 - g)
    return BoundReport("lemma6", {"bound_true_occ": b_t, "bound_model_occ": b_l, "gamma": g},
                       min(b_t, b_l), measured)


def check_state_chain(expert_data, learner_out, tl: MdpSpec, mdp_true: MdpSpec, behavior_p,
                      policy_set="all", delta: float = 0.1, f_size=None) -> BoundReport:
    """``||d*_t - d^pi_hat_t||_1 <= IPM_hat + C eps_T/(1-gamma) + eps_s`` for a state-witness run.

    ``IPM_hat`` is the empirical state IPM of the returned policy in ``tl``
    from ``d0``.
    """
    m, _ = _scaled(mdp_true, 1.0)
    g, M = m.gamma, len(expert_data)
    expert = solve_expert(m)
    ln_f = math.log(f_size) if f_size is not None else log_f_size(policy_set, m.shape)
    es = eps_s(ln_f, delta, M)
    eT, C, scope = _model_terms(tl, m, behavior_p, policy_set, learner_out.policy, expert)
    d_model = occupancy(learner_out.policy, tl, m.init_dist).values
    ipm_hat = float(np.abs(expert_data.state_histogram() - d_model).sum())
    measured = float(np.abs(occupancy(expert, m).values - occupancy(learner_out.policy, m).values).sum())
    model_term = 0.0 if eT == 0.0 else C * eT / (1 - g)
    bound = ipm_hat + model_term + es
    return _assemble("state_chain", {"ipm_hat": ipm_hat, "eps_s": es, "eps_T": eT, "C": C,
                                     "M": M, "delta": delta, "gamma": g}, bound, measured, scope)


def recovery_variable(pi, k: int, nu, mdp: MdpSpec, expert_occ) -> float:
    """``v^k_pi = ||d* - (P^pi)^k nu||_1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    P = transition_operator(pi, mdp)
    x = np.asarray(nu, dtype=np.float64)
    x = np.linalg.matrix_power(P, k) @ x
    target = expert_occ.values if isinstance(expert_occ, Occupancy) else np.asarray(expert_occ)
    return float(np.abs(target - x).sum())


def stepwise_model_error(pi, k: int, start, tt: MdpSpec, tl: MdpSpec) -> np.ndarray:
    """``E_{s ~ (P_t^pi)^i start, a ~ pi} ||T_t - T_l||_1`` for ``i = 0..k-1``."""
    probs = pi.probs if isinstance(pi, TabularPolicy) else np.asarray(pi)
    per_state = (probs * row_errors(tl, tt)).sum(axis=1)
    P = transition_operator(probs, tt)
    x = np.asarray(start, dtype=np.float64)
    out = np.empty(k)
    for i in range(k):
        out[i] = per_state @ x
        x = P @ x
    return out


def check_proposition1(pi, k: int, nu, tl: MdpSpec, tt: MdpSpec, behavior_d, C_value=None,
                       expert_occ=None) -> BoundReport:
    """``v^k <= ||d* - (P_l^pi)^k d^mu||_1 + k eps_hat_T + sqrt(2 log C)``.

    ``eps_hat_T`` is the largest one-step model error along the ``k``-step
    push-forward of ``d^mu`` in the true dynamics.  ``C`` defaults to the
    exact ``max_s nu(s) / d^mu(s)``.
    """
    nu = np.asarray(nu, dtype=np.float64)
    b = np.asarray(behavior_d, dtype=np.float64)
    C_exact = _ratio_max(nu, b)
    C = C_exact if C_value is None else float(C_value)
    if expert_occ is None:
        expert_occ = occupancy(solve_expert(tt), tt)
    measured = recovery_variable(pi, k, nu, tt, expert_occ)
    flags = []
    first = recovery_variable(pi, k, b, tl, expert_occ)
    steps = stepwise_model_error(pi, k, b, tt, tl)
    eps_hat = float(steps.max())
    if math.isinf(C) or C < 1.0:
        bound = math.inf
        flags.append("vacuous")
    else:
        bound = first + k * eps_hat + math.sqrt(2.0 * math.log(C))
    if first >= 1.0:
        flags.append("first_term_large")
    return BoundReport("prop1", {"first_term": first, "eps_hat_T": eps_hat, "k": k, "C": C,
                                 "C_exact": C_exact}, bound, measured, tuple(flags))


# --- offline RL reduction -----------------------------------------------------

def fitted_reward(data: TransitionDataset) -> np.ndarray:
    """Per-pair mean reward label; 0 on unseen pairs."""
    if data.rewards is None:
        raise ValueError("dataset carries no reward labels")
    S, A = data.shape
    tot = np.zeros((S, A))
    np.add.at(tot, (data.states, data.actions), data.rewards)
    n = data.state_action_counts()
    return np.where(n > 0, tot / np.where(n > 0, n, 1.0), 0.0)


def offline_rl_policy(tl: MdpSpec, reward=None) -> TabularPolicy:
    """Planning in ``tl`` with ``reward`` (true table or fitted labels)."""
    return solve_expert(tl, tl.reward if reward is None else reward)


def check_theorem5(tl: MdpSpec, mdp_true: MdpSpec, behavior_p, reward=None) -> BoundReport:
    """``V* - V^pi_hat <= 2 C eps_T / (1-gamma)^2`` (plus ``2 C eps_r / (1-gamma)`` with fitted reward)."""
    m, scale = _scaled(mdp_true, 1.0)
    g = m.gamma
    b = _behavior_values(behavior_p)
    r_hat = m.reward if reward is None else np.asarray(reward) * scale
    tl_r = MdpSpec(tl.transition, r_hat, m.init_dist, g, r_max=max(float(r_hat.max()), 1e-300))
    pi_hat = offline_rl_policy(tl_r, r_hat)
    measured = value(solve_expert(m), m) - value(pi_hat, m)
    eT = model_error(tl, m, b)
    C = _ratio_max(max_occupancy_table(tl_r), b)
    bound = 0.0 if eT == 0.0 else 2.0 * C * eT / (1 - g) ** 2
    terms = {"eps_T": eT, "C": C, "gamma": g, "reward_scale": scale}
    tid = "thm5"
    if reward is not None:
        er = float((b * np.abs(r_hat - m.reward)).sum())
        terms["eps_r"] = er
        bound += 0.0 if er == 0.0 else 2.0 * C * er / (1 - g)
        tid = "cor4"
    flags = ("vacuous",) if math.isinf(bound) else ()
    return BoundReport(tid, terms, bound, measured, flags)


def check_corollary4(tl, mdp_true, behavior_p, reward) -> BoundReport:
    return check_theorem5(tl, mdp_true, behavior_p, reward)


# --- summaries ----------------------------------------------------------------

def summarize(reports) -> list[dict]:
    """Per theorem: ``holds_rate`` and ``median_slack`` (finite slacks only)."""
    by = {}
    for r in reports:
        by.setdefault(r.theorem_id, []).append(r)
    rows = []
    for tid in sorted(by):
        rs = by[tid]
        slacks = [r.slack for r in rs if math.isfinite(r.slack)]
        rows.append({"theorem_id": tid, "n": len(rs), "holds_rate": holds_frequency(rs),
                     "median_slack": float(np.median(slacks)) if slacks else math.inf})
    return rows


# --- randomized audits ----------------------------------------------------------
#
# Instances are small so every term is exact and cheap.  ``rng`` drives all
# draws; results are deterministic given its seed.

THEORY_TRAIN = TrainConfig(iters=300, start_dist="init", horizon_h="inf", bc_weight=1.0)


def perturbed_model(mdp: MdpSpec, rng: np.random.Generator, scale: float | None = None) -> MdpSpec:
    """Rows mixed toward random Dirichlet rows by a random (or given) weight."""
    S, A = mdp.shape
    w = rng.uniform(0.0, 1.0) if scale is None else scale
    T = (1 - w) * mdp.transition + w * dirichlet_rows(rng, (S, A), S)
    return mdp.replace(transition=T / T.sum(axis=2, keepdims=True))


def _random_instance(rng, max_states=8, max_actions=4, gamma=None):
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    g = float(rng.uniform(0.5, 0.99)) if gamma is None else gamma
    return random_mdp(S, A, g, rng)


def audit_lemma6(n: int, rng: np.random.Generator) -> list[BoundReport]:
    out = []
    for _ in range(n):
        mdp = _random_instance(rng)
        out.append(check_lemma6(random_policy(*mdp.shape, rng), mdp, perturbed_model(mdp, rng)))
    return out


def audit_lemma1(n: int, rng: np.random.Generator) -> list[BoundReport]:
    out = []
    for _ in range(n):
        mdp = _random_instance(rng)
        out.append(check_lemma1(random_policy(*mdp.shape, rng), random_policy(*mdp.shape, rng), mdp))
    return out


def audit_theorem2(mdp: MdpSpec, m: int, n_redraws: int, rng: np.random.Generator,
                   delta: float = 0.1, cfg: TrainConfig = THEORY_TRAIN) -> list[BoundReport]:
    """Redraw the expert data ``n_redraws`` times; the holds-rate should reach ``1 - delta``."""
    expert = solve_expert(mdp)
    out = []
    for _ in range(n_redraws):
        data = sample_dataset(expert, mdp, m, rng, tag="expert")
        res = adversarial_il_true_model(data, mdp, cfg)
        out.append(check_theorem2(data, res, mdp, delta, expert_policy=expert))
    return out


def model_bound_instance(rng: np.random.Generator, n_states: int = 4, n_actions: int = 2,
                         gamma: float = 0.9, m: int = 200, n_behavior: int = 2000,
                         delta: float = 0.1, cfg: TrainConfig = THEORY_TRAIN) -> list[BoundReport]:
    """One random instance with full-support (uniform) behavior data: Theorem 3/4, Corollary 2, chain."""
    mdp = random_mdp(n_states, n_actions, gamma, rng)
    expert = solve_expert(mdp)
    uniform = TabularPolicy.uniform(n_states, n_actions)
    bp = occupancy(uniform, mdp, kind="state_action").values
    ed = sample_dataset(expert, mdp, m, rng, tag="expert")
    bd = sample_dataset(uniform, mdp, n_behavior, rng, tag="behavior_narrow")
    tl = fit_model(bd, pseudocount=0.1).as_mdp(mdp)
    o1 = algorithm1(ed, tl, cfg)
    o2 = algorithm2(ed, tl, None, cfg)
    kw = dict(policy_set="all", delta=delta)
    return [check_theorem3(ed, o1, tl, mdp, bp, expert_policy=expert, **kw),
            check_theorem4(ed, o2, tl, mdp, bp, expert_policy=expert, **kw),
            check_corollary2(ed, o2, tl, mdp, bp, expert_policy=expert, **kw),
            check_state_chain(ed, o2, tl, mdp, bp, **kw)]


def audit_model_bounds(n: int, rng: np.random.Generator, **kw) -> list[BoundReport]:
    out = []
    for _ in range(n):
        out.extend(model_bound_instance(rng, **kw))
    return out


RIGHT = 3


def vacuous_two_room(rng: np.random.Generator, m: int = 100, n_behavior: int = 5000,
                     delta: float = 0.1, cfg: TrainConfig = THEORY_TRAIN) -> list[BoundReport]:
    """Behavior never moves right, so ``p^mu(s, right) = 0`` everywhere.

    Any learner that heads for the door puts mass on those pairs in the
    learned model, so ``C`` is infinite and Theorem 4 is vacuous, while
    Corollary 2 (no ``C``) stays finite.
    """
    mdp = two_room()
    S, A = mdp.shape
    probs = np.full((S, A), 1.0 / (A - 1))
    probs[:, RIGHT] = 0.0
    behavior = TabularPolicy(probs)
    bp = occupancy(behavior, mdp, kind="state_action").values
    expert = solve_expert(mdp)
    ed = sample_dataset(expert, mdp, m, rng, tag="expert")
    bd = sample_dataset(behavior, mdp, n_behavior, rng, tag="behavior_narrow")
    tl = fit_model(bd, pseudocount=0.1).as_mdp(mdp)
    o2 = algorithm2(ed, tl, None, cfg)
    kw = dict(policy_set="all", delta=delta, expert_policy=expert)
    return [check_theorem4(ed, o2, tl, mdp, bp, **kw), check_corollary2(ed, o2, tl, mdp, bp, **kw)]


def finite_c_instance(rng: np.random.Generator, n_states: int = 5, n_actions: int = 2,
                      gamma: float = 0.9, n_behavior: int = 3000):
    """Random MDP, uniform behavior (full support), model fit on behavior data."""
    mdp = random_mdp(n_states, n_actions, gamma, rng)
    uniform = TabularPolicy.uniform(n_states, n_actions)
    bp = occupancy(uniform, mdp, kind="state_action").values
    bd = sample_dataset(uniform, mdp, n_behavior, rng, tag="behavior_narrow")
    tl = fit_model(bd, pseudocount=0.1).as_mdp(mdp)
    return mdp, bp, bd, tl


def audit_offline_rl(n: int, rng: np.random.Generator, **kw) -> list[BoundReport]:
    out = []
    for _ in range(n):
        mdp, bp, bd, tl = finite_c_instance(rng, **kw)
        out.append(check_theorem5(tl, mdp, bp))
        out.append(check_corollary4(tl, mdp, bp, fitted_reward(bd)))
    return out


def audit_proposition1(n: int, rng: np.random.Generator, k_max: int = 10, **kw) -> list[BoundReport]:
    out = []
    for _ in range(n):
        mdp, bp, _, tl = finite_c_instance(rng, **kw)
        S, A = mdp.shape
        k = int(rng.integers(1, k_max + 1))
        nu = rng.dirichlet(np.ones(S))
        out.append(check_proposition1(random_policy(S, A, rng), k, nu, tl, mdp, bp.sum(axis=1)))
    return out
