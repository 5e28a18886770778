import numpy as np
import pytest
from numpy.testing import assert_allclose

from milo.mdp import (DimensionError, MdpSpec, Occupancy, TabularPolicy, bellman_value,
                      default_horizon, l1_distance, monte_carlo_occupancy, occupancy, q_values,
                      random_mdp, random_policy, rollout, sample_categorical, state_values,
                      truncated_occupancy, value)
from milo.suite import GO, STAY, chain2

GO_ALWAYS = TabularPolicy.deterministic([GO, GO], 2)


def test_chain2_go_occupancy_closed_form():
    # d = (1-g) sum_t g^t e_{s_t}: state 0 only at t = 0
    mdp = chain2(0.9)
    assert_allclose(occupancy(GO_ALWAYS, mdp).values, [0.1, 0.9], atol=1e-14)
    assert_allclose(value(GO_ALWAYS, mdp), 9.0, atol=1e-12)


def test_chain2_mixed_policy_closed_form():
    # [DERIVED] p(go|0) = q: d(0) = (1-g) / (1 - g (1-q)) = 0.1 / 0.55
    mdp = chain2(0.9)
    pi = TabularPolicy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    d = occupancy(pi, mdp)
    assert_allclose(d.values, [0.1 / 0.55, 1 - 0.1 / 0.55], atol=1e-14)
    assert_allclose(value(pi, mdp), 8.181818181818182, atol=1e-12)
    sa = occupancy(pi, mdp, kind="state_action").values
    assert_allclose(sa, [[0.0909090909090909, 0.0909090909090909], [0.8181818181818182, 0.0]],
                    atol=1e-14)


def test_stay_policy_never_leaves():
    mdp = chain2(0.9)
    stay = TabularPolicy.deterministic([STAY, STAY], 2)
    assert_allclose(occupancy(stay, mdp).values, [1.0, 0.0])
    assert value(stay, mdp) == 0.0


def test_truncated_occupancy_two_steps():
    # weights 1, g on states 0, 1 then renormalised
    d = truncated_occupancy(GO_ALWAYS, chain2(0.9), [1.0, 0.0], 2)
    assert_allclose(d.values, [1 / 1.9, 0.9 / 1.9], atol=1e-15)


def test_truncated_occupancy_converges_to_exact():
    rng = np.random.default_rng(0)
    mdp = random_mdp(5, 3, 0.8, rng)
    pi = random_policy(5, 3, rng)
    exact = occupancy(pi, mdp).values
    trunc = truncated_occupancy(pi, mdp, mdp.init_dist, default_horizon(0.8, 1e-14)).values
    assert_allclose(trunc, exact, atol=1e-12)


def test_linear_solve_matches_bellman_iteration():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mdp = random_mdp(6, 3, float(rng.uniform(0.5, 0.95)), rng)
        pi = random_policy(6, 3, rng)
        assert_allclose(value(pi, mdp), bellman_value(pi, mdp), rtol=1e-10)
        assert_allclose(mdp.init_dist @ state_values(pi, mdp), value(pi, mdp), rtol=1e-10)


def test_q_values_consistent_with_state_values():
    rng = np.random.default_rng(2)
    mdp = random_mdp(4, 2, 0.9, rng)
    pi = random_policy(4, 2, rng)
    assert_allclose((pi.probs * q_values(pi, mdp)).sum(axis=1), state_values(pi, mdp), atol=1e-12)


def test_occupancy_matches_monte_carlo_small():
    rng = np.random.default_rng(3)
    mdp = random_mdp(4, 2, 0.7, rng)
    pi = random_policy(4, 2, rng)
    mc = monte_carlo_occupancy(pi, mdp, mdp.init_dist, 20_000, rng)
    assert l1_distance(occupancy(pi, mdp).values, mc) < 0.03


def test_default_horizon():
    assert default_horizon(0.9) == 22  # 0.9**22 = 0.098 <= 0.1 < 0.9**21
    assert default_horizon(0.5, 0.25) == 2


def test_json_round_trip_is_exact():
    mdp = random_mdp(3, 2, 0.95, np.random.default_rng(4))
    back = MdpSpec.from_json(mdp.to_json())
    assert np.array_equal(back.transition, mdp.transition)
    assert np.array_equal(back.reward, mdp.reward)
    assert back.gamma == mdp.gamma and back.to_json() == mdp.to_json()


@pytest.mark.parametrize("bad", [
    dict(transition=np.ones((2, 2, 3)) / 3),
    dict(reward=np.zeros((2, 3))),
    dict(init_dist=np.ones(3) / 3),
])
def test_shape_errors(bad):
    mdp = chain2()
    kw = dict(transition=mdp.transition, reward=mdp.reward, init_dist=mdp.init_dist, gamma=0.9)
    kw.update(bad)
    with pytest.raises(DimensionError):
        MdpSpec(**kw)


def test_value_errors():
    mdp = chain2()
    T = mdp.transition.copy()
    T[0, 0] = [0.6, 0.6]
    with pytest.raises(ValueError):
        mdp.replace(transition=T)
    with pytest.raises(ValueError):
        mdp.replace(gamma=1.0)
    with pytest.raises(ValueError):
        mdp.replace(reward=-mdp.reward - 1)
    with pytest.raises(ValueError):
        TabularPolicy(np.array([[0.5, 0.4], [1.0, 0.0]]))
    with pytest.raises(DimensionError):
        occupancy(TabularPolicy.uniform(3, 2), mdp)


def test_occupancy_rejects_non_distribution():
    with pytest.raises(ValueError):
        Occupancy("state", np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        l1_distance(Occupancy("state", [1.0]), Occupancy("state_action", [[1.0]]))


def test_rollout_chains_and_sampling_is_seeded():
    mdp = chain2()
    traj = rollout(GO_ALWAYS, mdp, mdp.init_dist, 5, np.random.default_rng(0))
    assert traj.states == [0, 1, 1, 1, 1] and len(traj) == 5
    p = np.array([[0.2, 0.8], [1.0, 0.0]])
    a = sample_categorical(p, np.random.default_rng(7))
    b = sample_categorical(p, np.random.default_rng(7))
    assert np.array_equal(a, b) and a[1] == 0
