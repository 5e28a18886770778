import numpy as np
import pytest
from numpy.testing import assert_allclose

from milo.datagen import TransitionDataset, make_behavior_policy, sample_dataset, solve_expert
from milo.imitation import (ConfigError, LearnerOutput, TrainConfig, Witness,
                            adversarial_il_true_model, algorithm1, algorithm2, bc_fit, bc_gradient,
                            bc_loss, best_witness, inner_policy_step, ipm_value, normalized_score,
                            resolve_horizon, resolve_start)
from milo.mdp import TabularPolicy, l1_distance, occupancy, q_values, random_mdp
from milo.models import fit_ensemble, fit_model
from milo.suite import GO, chain2, two_room

TRAIN = TrainConfig(horizon_h=5, update_weighting="budget", rollout_budget=20.0, lambda_u=0.5)

# state 0: action 0 twice, action 1 once; state 2 never seen
EXPERT = TransitionDataset([0, 0, 0, 1], [0, 0, 1, 1], [1, 1, 1, 1], 3, 2)


def test_bc_fit_by_hand():
    pi = bc_fit(EXPERT)
    assert_allclose(pi.probs, [[2 / 3, 1 / 3], [0, 1], [0.5, 0.5]])
    prior = TabularPolicy.deterministic([0, 0, 1], 2)
    pi = bc_fit(EXPERT, fallback="argmax_prior", prior_policy=prior)
    assert_allclose(pi.probs[2], [0, 1])
    with pytest.raises(ValueError):
        bc_fit(EXPERT.subset([]))


def test_bc_loss_by_hand():
    pi = bc_fit(EXPERT)
    # per-sample 2(1 - pi(a|s)): 2/3, 2/3, 4/3, 0
    assert_allclose(bc_loss(pi, EXPERT), (2 / 3 + 2 / 3 + 4 / 3 + 0) / 4)
    assert bc_loss(TabularPolicy(np.array([[1.0, 0], [0, 1], [1, 0]])), EXPERT) == 0.5


def test_bc_gradient_is_shift_of_true_gradient():
    g = bc_gradient(TabularPolicy.uniform(3, 2), EXPERT)
    assert_allclose(g, [[1 / 4, -1 / 4], [-1 / 4, 1 / 4], [0, 0]])
    # finite differences of the loss: d loss / d pi(a|s) = -2 count(s,a) / M
    raw = 2.0 * EXPERT.state_action_counts() / len(EXPERT)
    pi = np.full((3, 2), 0.5)
    for s, a in [(0, 0), (0, 1), (1, 1)]:
        e = np.zeros((3, 2))
        e[s, a] = 1e-6
        fd = (bc_loss(pi - e, EXPERT) - bc_loss(pi + e, EXPERT)) / 2e-6
        assert_allclose(fd, raw[s, a], rtol=1e-6)
    # the exponentiated step ignores per-state constants, so both forms agree
    mdp = random_mdp(3, 2, 0.9, np.random.default_rng(0))
    zero = np.zeros(3)
    a = inner_policy_step(pi, zero, mdp, 1.0, EXPERT).probs
    b = pi * np.exp(raw)
    assert_allclose(a, b / b.sum(axis=1, keepdims=True), atol=1e-14)


def test_witness_is_sign_and_attains_l1():
    p, q = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
    f = best_witness(p, q)
    assert_allclose(f.values, [1, 0, -1])
    assert_allclose(ipm_value(f, p, q), l1_distance(p, q))
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = Witness("state", rng.uniform(-1, 1, 3))
        assert ipm_value(g, p, q) <= ipm_value(f, p, q) + 1e-15
    with pytest.raises(ValueError):
        Witness("state", [1.5, 0.0])


def test_inner_step_by_hand():
    mdp = chain2(0.9)
    pi = np.full((2, 2), 0.5)
    r = np.array([1.0, -1.0])  # signal on states
    Q = 0.1 * q_values(pi, mdp, np.repeat(r[:, None], 2, axis=1))
    w = pi * np.exp(0.5 * Q)
    out = inner_policy_step(pi, r, mdp, lr=0.5).probs
    assert_allclose(out, w / w.sum(axis=1, keepdims=True), atol=1e-14)
    # staying in the +1 state beats going to the -1 state
    assert out[0, 1] > out[0, 0]
    # zero signal leaves the policy alone; zero-weight states are frozen
    assert_allclose(inner_policy_step(pi, np.zeros(2), mdp).probs, pi)
    frozen = inner_policy_step(pi, r, mdp, state_weight=[0.0, 1.0]).probs
    assert_allclose(frozen[0], [0.5, 0.5])


def test_normalized_score_endpoints():
    mdp = two_room()
    exp = solve_expert(mdp)
    assert_allclose(normalized_score(exp, mdp, exp), 1.0)
    assert_allclose(normalized_score(TabularPolicy.uniform(*mdp.shape), mdp, exp), 0.0, atol=1e-12)


def _expert_data(mdp, m, seed):
    return sample_dataset(solve_expert(mdp), mdp, m, np.random.default_rng(seed), tag="expert")


def test_adversarial_il_recovers_chain2_expert():
    mdp = chain2(0.9)
    out = adversarial_il_true_model(_expert_data(mdp, 200, 0), mdp, TrainConfig(iters=200))
    assert out.policy.probs[0, GO] > 0.9
    ipms = [c[1] for c in out.training_curve]
    assert ipms[-1] < ipms[0] and out.learner == "adv_il"


def test_algorithm1_matches_true_model_learner_when_model_exact():
    mdp = chain2(0.9)
    data = _expert_data(mdp, 50, 1)
    cfg = TrainConfig(iters=50)
    a = adversarial_il_true_model(data, mdp, cfg)
    b = algorithm1(data, mdp, cfg)
    assert_allclose(a.policy.probs, b.policy.probs)
    assert b.learner == "alg1"


def test_algorithm2_imitates_in_learned_model():
    mdp = two_room()
    rng = np.random.default_rng(2)
    expert = _expert_data(mdp, 400, 2)
    behavior = sample_dataset(make_behavior_policy(mdp, "wide"), mdp, 20_000, rng, tag="behavior_wide")
    tl = fit_model(expert.concat(behavior)).as_mdp(mdp)
    out = algorithm2(expert, tl, None, TRAIN, behavior_data=behavior)
    assert normalized_score(out.policy, mdp, solve_expert(mdp)) > 0.9
    d = occupancy(out.policy, mdp).values
    assert l1_distance(d, expert.state_histogram()) < 0.3


def test_penalty_lowers_model_uncertainty():
    mdp = two_room()
    rng = np.random.default_rng(3)
    expert = _expert_data(mdp, 32, 3)
    behavior = sample_dataset(make_behavior_policy(mdp, "narrow"), mdp, 2000, rng, tag="behavior_narrow")
    data = expert.concat(behavior)
    tl = fit_model(data).as_mdp(mdp)
    ens = fit_ensemble(data, None, 5, 0.1, rng, prior="randomized")
    cfg = TrainConfig(iters=100, start_dist="expert_states")
    u = [algorithm2(expert, tl, ens, cfg.replace(lambda_u=lam)).training_curve[-1][3]
         for lam in (0.0, 5.0)]
    assert u[1] < u[0]


def test_resolve_start_options():
    mdp = chain2()
    beh = TransitionDataset([1, 1, 0, 1], [0, 0, 0, 0], [1, 1, 1, 1], 2, 2)
    exp = TransitionDataset([0], [0], [1], 2, 2)
    assert_allclose(resolve_start("init", mdp, exp, beh), [1, 0])
    assert_allclose(resolve_start("expert_states", mdp, exp, beh), [1, 0])
    assert_allclose(resolve_start("behavior_states", mdp, exp, beh), [0.25, 0.75])
    assert_allclose(resolve_start("arbitrary", mdp, exp, beh), [0.5, 0.5])
    with pytest.raises(ConfigError):
        resolve_start("behavior_states", mdp, exp, None)
    with pytest.raises(ConfigError):
        algorithm2(exp, mdp)  # default start needs behavior data


def test_train_config_validation_and_horizon():
    with pytest.raises(ConfigError):
        TrainConfig(iters=0)
    with pytest.raises(ConfigError):
        TrainConfig(start_dist="random")
    with pytest.raises(ConfigError):
        TrainConfig(horizon_h=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"iters": 5, "lr": 1})
    assert TrainConfig.from_dict({"iters": 5}).iters == 5
    assert resolve_horizon(TrainConfig(), 0.9) == 22
    assert resolve_horizon(TrainConfig(horizon_h="inf"), 0.9) is None
    assert resolve_horizon(TrainConfig(horizon_h=5), 0.9) == 5


def test_empty_expert_data_rejected():
    mdp = chain2()
    with pytest.raises(ValueError):
        algorithm1(EXPERT.subset([]), mdp)


def test_learner_output_round_trip():
    mdp = chain2(0.9)
    out = algorithm1(_expert_data(mdp, 20, 4), mdp, TrainConfig(iters=5))
    back = LearnerOutput.from_dict(out.to_dict())
    assert_allclose(back.policy.probs, out.policy.probs)
    assert back.training_curve == out.training_curve and back.to_json() == out.to_json()
