import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from milo.datagen import TransitionDataset, sample_dataset
from milo.mdp import DimensionError, TabularPolicy, occupancy, random_mdp, random_policy
from milo.models import (LearnedModel, ModelEnsemble, ModelError, concentrability,
                         deterministic_policies, fit_ensemble, fit_model, max_concentrability,
                         max_occupancy_table, model_error, policy_uncertainty, row_errors,
                         uncertainty_hat, uncertainty_table)
from milo.suite import chain2

# (0,0) -> 1 twice, (0,0) -> 0 once, (1,1) -> 1 once
DATA = TransitionDataset([0, 0, 0, 1], [0, 0, 0, 1], [1, 1, 0, 1], 2, 2)


def test_smoothed_counts_by_hand():
    m = fit_model(DATA, pseudocount=0.1)
    assert_allclose(m.transition[0, 0], [1.1 / 3.2, 2.1 / 3.2])
    assert_allclose(m.transition[1, 1], [0.1 / 1.2, 1.1 / 1.2])
    assert_allclose(m.transition[0, 1], [0.5, 0.5])  # unvisited: uniform
    assert_allclose(m.visit_counts, [[3, 0], [0, 1]])


def test_maximum_likelihood_flags_unvisited_rows():
    m = fit_model(DATA, pseudocount=0.0)
    assert_allclose(m.transition[0, 0], [1 / 3, 2 / 3])
    assert m.flagged.tolist() == [[False, True], [True, False]]
    with pytest.raises(ModelError):
        m.as_mdp(chain2())


def test_fit_converges_to_truth():
    rng = np.random.default_rng(0)
    mdp = random_mdp(3, 2, 0.9, rng)
    data = sample_dataset(TabularPolicy.uniform(3, 2), mdp, 60_000, rng, tag="behavior_narrow")
    tl = fit_model(data).as_mdp(mdp)
    assert row_errors(tl, mdp).max() < 0.05
    assert model_error(tl, mdp, occupancy(TabularPolicy.uniform(3, 2), mdp, kind="state_action")) < 0.03


def test_model_error_weighting():
    mdp = chain2()
    T = mdp.transition.copy()
    T[0, 0] = [0.5, 0.5]  # L1 error 1.0 on (0, go)
    tl = mdp.replace(transition=T)
    assert_allclose(row_errors(tl, mdp), [[1.0, 0.0], [0.0, 0.0]])
    assert model_error(tl, mdp, [[0.25, 0.25], [0.5, 0.0]]) == 0.25
    with pytest.raises(DimensionError):
        model_error(tl, mdp, [0.5, 0.5])


def _member(rows, counts=None):
    T = np.array(rows, dtype=float)
    return LearnedModel(T, 0.1, np.ones(T.shape[:2]) if counts is None else counts)


def test_uncertainty_by_hand():
    a = _member([[[1.0, 0.0]], [[0.0, 1.0]]])
    b = _member([[[0.5, 0.5]], [[0.0, 1.0]]])
    c = _member([[[0.0, 1.0]], [[0.0, 1.0]]])
    ens = ModelEnsemble((a, b, c))
    assert_allclose(uncertainty_table(ens), [[2.0], [0.0]])
    # mean row (0.5, 0.5): deviations 1, 0, 1
    assert_allclose(uncertainty_table(ens, "max_to_mean"), [[1.0], [0.0]])
    assert uncertainty_hat(ens, 0, 0) == 2.0 and uncertainty_hat(ens, 0, 0, "max_to_mean") == 1.0
    with pytest.raises(IndexError):
        uncertainty_hat(ens, 2, 0)
    with pytest.raises(ValueError):
        uncertainty_table(ens, "variance")


def test_randomized_prior_disagrees_only_where_data_is_thin():
    rng = np.random.default_rng(1)
    mdp = random_mdp(3, 2, 0.9, rng)
    pi = TabularPolicy(np.tile([1.0, 0.0], (3, 1)))  # never takes action 1
    data = sample_dataset(pi, mdp, 20_000, rng, tag="behavior_narrow")
    u_rand = uncertainty_table(fit_ensemble(data, None, 5, 0.1, rng, prior="randomized"))
    u_unif = uncertainty_table(fit_ensemble(data, None, 5, 0.1, rng, prior="uniform"))
    assert u_rand[:, 1].min() > 0.1 and u_rand[:, 0].max() < 0.05
    assert_allclose(u_unif[:, 1], 0.0)


def test_ensemble_round_trip_and_validation():
    ens = fit_ensemble(DATA, (2, 2), 3, 0.1, np.random.default_rng(2))
    back = ModelEnsemble.from_dict(ens.to_dict())
    assert_allclose(back.stacked(), ens.stacked())
    assert_allclose(ens.mean_model().transition.sum(axis=2), 1.0)
    with pytest.raises(ValueError):
        fit_ensemble(DATA, None, 1, 0.1, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        fit_model(DATA, (3, 2))


def test_policy_uncertainty_zero_for_exact_model():
    rng = np.random.default_rng(3)
    mdp = random_mdp(4, 2, 0.9, rng)
    b = occupancy(TabularPolicy.uniform(4, 2), mdp, kind="state_action")
    assert policy_uncertainty(random_policy(4, 2, rng), mdp, mdp, b) == 0.0


def test_max_occupancy_table_matches_enumeration():
    # oracle: max over every deterministic policy (vertices of the occupancy polytope)
    rng = np.random.default_rng(4)
    for _ in range(5):
        mdp = random_mdp(4, 2, float(rng.uniform(0.5, 0.95)), rng)
        brute = np.max([occupancy(p, mdp, kind="state_action").values
                        for p in deterministic_policies(4, 2)], axis=0)
        assert_allclose(max_occupancy_table(mdp), brute, atol=1e-10)
        # stochastic policies never exceed it
        for _ in range(20):
            p = occupancy(random_policy(4, 2, rng), mdp, kind="state_action").values
            assert np.all(p <= brute + 1e-12)


def test_concentrability_finite_and_structural_infinity():
    rng = np.random.default_rng(5)
    mdp = random_mdp(3, 2, 0.9, rng)
    b = occupancy(TabularPolicy.uniform(3, 2), mdp, kind="state_action").values
    c = max_concentrability(mdp, b)
    assert math.isfinite(c) and c >= 1.0
    assert concentrability(list(deterministic_policies(3, 2)), mdp, b) == pytest.approx(c, rel=1e-9)
    b0 = b.copy()
    b0[0, 1] = 0.0
    assert math.isinf(max_concentrability(mdp, b0 / b0.sum()))
