""" Unit tests for lexrank.lori.infer module """


import json
import math
import pytest
import numpy as np

from lexrank.lori import AgeGated
from lexrank.lori import CancerGroundTruthTumor
from lexrank.lori import CancerGroundTruthWBC
from lexrank.lori import FitConfig
from lexrank.lori import FitReport
from lexrank.lori import LevelParams
from lexrank.lori import Linear
from lexrank.lori import LexRankInvalidData
from lexrank.lori import LexRankParamError
from lexrank.lori import LexRewardModel
from lexrank.lori import LoriFitter
from lexrank.lori import PreferenceDataset
from lexrank.lori import TrajLinear
from lexrank.lori import TrajThresholdedLinear
from lexrank.lori import fit_lori
from lexrank.lori import fit_trex
from lexrank.lori import neg_log_likelihood
from lexrank.lori import nll_gradients
from lexrank.lori import rmsprop_step
from lexrank.lori.infer import OptimizerState
from lexrank.lori.infer import ParameterLayout
from lexrank.lori.infer import direction_cosine
from lexrank.lori.infer import full_log_likelihood
from lexrank.lori.infer import log_binomial_total
from lexrank.lori.prefmodel import pair_reward_diffs
from lexrank.lori.prefmodel import sample_preferences
from lexrank.lori.rewards import EFFICACY_FIRST
from lexrank.lori.rewards import TOXICITY_FIRST


def _random_counts(rng, n_alternatives, n_pairs=40):
    counts = {}
    for _ in range(n_pairs):
        star, circ = rng.choice(n_alternatives, 2, replace=False)
        counts[(int(star), int(circ))] = counts.get((int(star), int(circ)), 0) + int(rng.integers(1, 4))
    return counts


def _sampled_dataset(model, alternatives, n_samples, rng):
    """ Preferences drawn from a model over random pairs of alternatives. """

    data = PreferenceDataset(alternatives)
    star = rng.integers(len(alternatives), size=n_samples)
    circ = (star + rng.integers(1, len(alternatives), size=n_samples)) % len(alternatives)
    diffs = pair_reward_diffs(model.reward_matrix(alternatives), star, circ)
    wins = sample_preferences(diffs, model.alphas, model.epsilons, rng)
    for a, b, win in zip(star, circ, wins):
        if win:
            data.add(int(a), int(b))
        else:
            data.add(int(b), int(a))
    return data


def _replace_level(model, level, family=None, alpha=None, epsilon=None):
    levels = list(model.levels)
    old_family, old_params = levels[level]
    levels[level] = (family or old_family,
                     LevelParams(old_params.alpha if alpha is None else alpha,
                                 old_params.epsilon if epsilon is None else epsilon))
    return LexRewardModel(levels)


def _numeric_gradients(model, data, h=1e-6):
    theta, alpha, epsilon = [], np.zeros(model.k), np.zeros(model.k)
    for level, (family, params) in enumerate(model.levels):
        base = family.params
        grad = np.zeros(len(base))
        for j in range(len(base)):
            step = np.zeros(len(base))
            step[j] = h
            plus = _replace_level(model, level, family=family.with_params(base + step))
            minus = _replace_level(model, level, family=family.with_params(base - step))
            grad[j] = (neg_log_likelihood(plus, data) - neg_log_likelihood(minus, data)) / (2 * h)
        theta.append(grad)
        alpha[level] = (neg_log_likelihood(_replace_level(model, level, alpha=params.alpha + h), data)
                        - neg_log_likelihood(_replace_level(model, level, alpha=params.alpha - h), data)) / (2 * h)
        up = neg_log_likelihood(_replace_level(model, level, epsilon=params.epsilon + h), data)
        down = neg_log_likelihood(_replace_level(model, level, epsilon=params.epsilon - h), data)
        epsilon[level] = (up - down) / (2 * h)
    return theta, alpha, epsilon


def _assert_gradients_match(model, data, rtol=1e-5, atol=1e-6):
    analytic = nll_gradients(model, data)
    theta, alpha, epsilon = _numeric_gradients(model, data)
    for level in range(model.k):
        np.testing.assert_allclose(analytic.theta[level], theta[level], rtol=rtol, atol=atol)
    np.testing.assert_allclose(analytic.alpha, alpha, rtol=rtol, atol=atol)
    np.testing.assert_allclose(analytic.epsilon, epsilon, rtol=rtol, atol=atol)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_linear_gradients_match_finite_differences(k, rng):
    for positive in (False, True):
        features = list(rng.normal(size=(12, 3)))
        data = PreferenceDataset(features, _random_counts(rng, len(features)))
        model = LexRewardModel([(Linear(rng.uniform(0.2, 1.5, 3), positive),
                                 LevelParams(rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)))
                                for _ in range(k)])
        _assert_gradients_match(model, data)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_trajectory_gradients_match_finite_differences(k, rng, random_trajectories):
    pool = random_trajectories(12, with_age=True)
    data = PreferenceDataset(pool, _random_counts(rng, len(pool)))
    families = [TrajLinear(0.6, 1.4), AgeGated(45.0, 6.0, age_center=40.0, age_scale=10.0), TrajLinear(1.2, 0.3)]
    model = LexRewardModel([(families[level], LevelParams(rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)))
                            for level in range(k)])
    _assert_gradients_match(model, data)


def test_thresholded_gradients_match_finite_differences(rng, random_trajectories):
    pool = random_trajectories(12)
    data = PreferenceDataset(pool, _random_counts(rng, len(pool)))
    model = LexRewardModel([(TrajThresholdedLinear(1.0, 0.5, 1.0), LevelParams(1.5, 0.3)),
                            (TrajThresholdedLinear(-2.0, 1.0, 0.2), LevelParams(0.8, 0.6))])
    _assert_gradients_match(model, data, rtol=1e-3)


def _random_family(rng):
    low, high = 0.2, 1.5
    draw = int(rng.integers(6))
    if draw == 0:
        return TrajLinear(*rng.uniform(low, high, 2))
    if draw == 1:
        return TrajThresholdedLinear(rng.normal(0.0, 2.0), *rng.uniform(low, high, 2))
    if draw in (2, 3):
        polarity = EFFICACY_FIRST if draw == 2 else TOXICITY_FIRST
        return AgeGated(rng.uniform(30.0, 50.0), rng.uniform(3.0, 10.0), polarity, age_center=40.0, age_scale=10.0)
    return CancerGroundTruthWBC() if draw == 4 else CancerGroundTruthTumor()


def _random_instance(rng, random_trajectories):
    """ Random k in {1, 2, 3}, reward families, alpha and epsilon, plus a random dataset. """

    k = int(rng.integers(1, 4))
    if rng.random() < 0.4:
        pool = list(rng.normal(size=(12, 3)))
        families = []
        for _ in range(k):
            positive = bool(rng.integers(2))
            families.append(Linear(rng.uniform(0.2, 1.5, 3) if positive else rng.normal(size=3), positive))
    else:
        pool = random_trajectories(12, with_age=True)
        families = [_random_family(rng) for _ in range(k)]
    model = LexRewardModel([(family, LevelParams(rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)))
                            for family in families])
    data = PreferenceDataset(pool, _random_counts(rng, len(pool)))
    rtol = 1e-3 if any(isinstance(family, TrajThresholdedLinear) for family in families) else 1e-5
    return model, data, rtol


def _flat_coordinates(model, learn_alpha, learn_epsilon):
    parts = []
    for family, params in model.levels:
        parts.append(family.params)
        if learn_alpha:
            parts.append([math.log(params.alpha)])
        if learn_epsilon:
            parts.append([math.log(params.epsilon)])
    return np.concatenate(parts)


@pytest.mark.parametrize("seed", range(100))
def test_random_models_gradients_match_finite_differences(seed, random_trajectories):
    model, data, rtol = _random_instance(np.random.default_rng(seed), random_trajectories)

    _assert_gradients_match(model, data, rtol=rtol)


@pytest.mark.parametrize("seed", range(100))
def test_fitter_objective_gradients_match_finite_differences(seed, random_trajectories):
    model, data, rtol = _random_instance(np.random.default_rng(seed), random_trajectories)
    fitter = LoriFitter(model.k, model.families)
    h = 1e-6

    for learn_alpha, learn_epsilon in [(False, True), (True, True), (True, False), (False, False)]:
        config = FitConfig(learn_alpha=learn_alpha, learn_epsilon=learn_epsilon)
        layout = ParameterLayout(model.families, config)
        phi = _flat_coordinates(model, learn_alpha, learn_epsilon)
        assert len(phi) == layout.size

        _, analytic, _ = fitter._evaluate(layout, data, phi)
        numeric = np.zeros(layout.size)
        for j in range(layout.size):
            step = np.zeros(layout.size)
            step[j] = h
            numeric[j] = (fitter._evaluate(layout, data, phi + step)[0]
                          - fitter._evaluate(layout, data, phi - step)[0]) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=1e-6)


def test_epsilon_gradient_vanishes_without_consistency(rng):
    features = list(rng.normal(size=(10, 2)))
    data = PreferenceDataset(features, _random_counts(rng, len(features)))
    model = LexRewardModel([(Linear([0.7, -0.4]), LevelParams(0.0, 0.5))])

    assert nll_gradients(model, data).epsilon[0] == 0.0


def test_gradients_of_empty_dataset(projection_model):
    gradient = nll_gradients(projection_model, PreferenceDataset([np.zeros(2)]))

    assert all(np.all(theta == 0) for theta in gradient.theta)
    assert np.all(gradient.alpha == 0) and np.all(gradient.epsilon == 0)


def test_nll_two_point_example(logistic_model, two_point_dataset):
    expected = 2 * math.log1p(math.exp(-1.0)) + math.log1p(math.e)

    assert neg_log_likelihood(logistic_model, two_point_dataset) == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(1.9397851, abs=1e-7)


def test_nll_empty_dataset(projection_model):
    assert neg_log_likelihood(projection_model, PreferenceDataset([])) == 0.0


def test_nll_kind_mismatch(projection_model, sample_preferences):
    with pytest.raises(LexRankParamError):
        neg_log_likelihood(projection_model, sample_preferences)


def test_nll_clamps_vanishing_probabilities():
    model = LexRewardModel([(Linear([1.0]), LevelParams(1e4, 0.0))])
    data = PreferenceDataset([np.array([0.0]), np.array([1.0])], {(0, 1): 1})

    assert math.isfinite(neg_log_likelihood(model, data))
    assert all(np.isfinite(nll_gradients(model, data).theta[0]))


def test_full_log_likelihood(logistic_model, two_point_dataset):
    assert log_binomial_total(two_point_dataset) == pytest.approx(math.log(3.0))
    assert full_log_likelihood(logistic_model, two_point_dataset) == \
        pytest.approx(math.log(3.0) - neg_log_likelihood(logistic_model, two_point_dataset))


def test_dataset_counts():
    data = PreferenceDataset([np.zeros(1), np.ones(1), np.full(1, 2.0)])
    data.add(2, 0, 3)
    data.add(0, 1)
    data.add(2, 0)
    data.add(0, 2, 2)

    assert data.count(2, 0) == 4
    assert data.total(0, 2) == 6
    assert data.n_preferences == 7
    assert data.unordered_pairs() == [(0, 1), (0, 2)]
    star, circ, n = data.pairs()
    np.testing.assert_array_equal(star, [0, 0, 2])
    np.testing.assert_array_equal(circ, [1, 2, 0])
    np.testing.assert_array_equal(n, [1, 2, 4])


@pytest.mark.parametrize("star, circ, count", [
    (0, 1, 0),
    (0, 1, 1.5),
    (0, 1, True),
    (0, 3, 1),
    (-1, 0, 1),
    (1, 1, 1),
])
def test_dataset_rejects_invalid_preferences(star, circ, count):
    data = PreferenceDataset([np.zeros(1), np.ones(1)])

    with pytest.raises(LexRankInvalidData):
        data.add(star, circ, count)


def test_dataset_rejects_mixed_kinds(sample_trajectories):
    with pytest.raises(LexRankInvalidData):
        PreferenceDataset([sample_trajectories[0], np.zeros(3)])


def test_rmsprop_first_step():
    config = FitConfig()
    state = OptimizerState.zeros(2)
    params, new_state = rmsprop_step(state, np.zeros(2), np.array([5.0, -0.3]), config)

    np.testing.assert_allclose(params, [-0.001 / math.sqrt(0.1), 0.001 / math.sqrt(0.1)], rtol=1e-12)
    assert params[0] == pytest.approx(-0.0031623, abs=1e-7)
    assert new_state.iteration == 1
    np.testing.assert_array_equal(state.H, np.zeros(2))


def test_rmsprop_zero_gradient_keeps_params():
    params, _ = rmsprop_step(OptimizerState.zeros(1), np.array([0.7]), np.zeros(1), FitConfig())

    np.testing.assert_array_equal(params, [0.7])


def test_rmsprop_shape_mismatch():
    with pytest.raises(LexRankParamError):
        rmsprop_step(OptimizerState.zeros(2), np.zeros(2), np.zeros(3), FitConfig())


@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0.0},
    {"rmsprop_discount": 1.0},
    {"patience": 0},
    {"restarts": -1},
    {"fixed_epsilon": -1.0},
])
def test_fit_config_validation(kwargs):
    with pytest.raises(LexRankParamError):
        FitConfig(**kwargs)


def test_trex_recovers_direction(rng):
    truth = LexRewardModel([(Linear([2.0, -1.0]), LevelParams(1.0, 0.0))])
    alternatives = list(rng.normal(size=(200, 2)))
    data = _sampled_dataset(truth, alternatives, 3000, rng)
    model, report = fit_trex(data, Linear.zeros(2), FitConfig(learning_rate=0.01, max_iters=3000))

    assert direction_cosine(model.families[0].theta, [2.0, -1.0]) > 0.95
    assert report.final_loss < report.initial_loss


def test_trex_freezes_level_parameters(two_point_dataset):
    config = FitConfig(learn_alpha=True, learn_epsilon=True, max_iters=50)
    model, report = fit_trex(two_point_dataset, Linear.zeros(1), config)

    assert model.k == 1 and report.method == "trex"
    np.testing.assert_array_equal(model.alphas, [1.0])
    np.testing.assert_array_equal(model.epsilons, [0.0])


def test_single_level_without_epsilon_is_trex(rng):
    alternatives = list(rng.normal(size=(30, 2)))
    data = PreferenceDataset(alternatives, _random_counts(rng, 30, 100))
    config = FitConfig(learning_rate=0.01, max_iters=200, learn_epsilon=False)

    lori, _ = fit_lori(data, 1, Linear.zeros(2), config)
    trex, _ = fit_trex(data, Linear.zeros(2), config)

    np.testing.assert_array_equal(lori.families[0].params, trex.families[0].params)


def test_lori_learns_epsilon(projection_model, rng):
    alternatives = list(rng.normal(0, 2, size=(80, 2)))
    data = _sampled_dataset(projection_model, alternatives, 2000, rng)
    model, report = fit_lori(data, 2, Linear.zeros(2), FitConfig(learning_rate=0.01, max_iters=500))

    assert model.k == 2 and report.k == 2
    assert np.all(model.epsilons > 0) and not np.all(model.epsilons == 1.0)
    assert report.final_loss < report.initial_loss
    assert neg_log_likelihood(model, data) == pytest.approx(report.final_loss)


def test_stopping_rule(rng):
    alternatives = list(rng.normal(size=(20, 2)))
    data = PreferenceDataset(alternatives, _random_counts(rng, 20, 60))
    config = FitConfig(learning_rate=0.05, max_iters=3000, patience=5)
    _, report = fit_lori(data, 2, Linear.zeros(2), config)
    trace = report.loss_trace

    assert len(trace) == report.iterations + 1
    for t in range(config.patience, len(trace) - 1):
        assert trace[t] <= trace[t - config.patience]
    if report.stop_reason == "patience":
        assert trace[-1] > trace[-1 - config.patience]
        assert report.converged
    else:
        assert report.iterations == config.max_iters


def test_max_iters_cap(two_point_dataset):
    _, report = fit_lori(two_point_dataset, 1, Linear.zeros(1), FitConfig(max_iters=5))

    assert report.stop_reason == "max_iters"
    assert report.iterations == 5
    assert not report.converged


def test_separable_data_does_not_fail():
    data = PreferenceDataset([np.array([1.0]), np.array([0.0])], {(0, 1): 5})
    model, report = fit_trex(data, Linear.zeros(1), FitConfig(learning_rate=0.01, max_iters=200))

    assert report.stop_reason == "max_iters"
    assert np.all(np.isfinite(model.families[0].params))
    assert model.families[0].theta[0] > 0
    assert report.final_loss < report.initial_loss


def test_fit_is_deterministic(rng):
    alternatives = list(rng.normal(size=(25, 2)))
    data = PreferenceDataset(alternatives, _random_counts(rng, 25, 80))
    config = FitConfig(learning_rate=0.01, max_iters=300, restarts=1, seed=3)

    first = fit_lori(data, 2, Linear.zeros(2), config)
    second = fit_lori(data, 2, Linear.zeros(2), config)

    assert first[0] == second[0]
    assert first[1] == second[1]


def test_restarts_never_worse(rng):
    alternatives = list(rng.normal(size=(25, 2)))
    data = PreferenceDataset(alternatives, _random_counts(rng, 25, 80))

    _, single = fit_lori(data, 2, Linear.zeros(2), FitConfig(learning_rate=0.01, max_iters=300))
    _, several = fit_lori(data, 2, Linear.zeros(2), FitConfig(learning_rate=0.01, max_iters=300, restarts=3))

    assert several.restarts == 3
    assert several.final_loss <= single.final_loss


def test_fit_rejects_empty_data():
    with pytest.raises(LexRankParamError):
        fit_lori(PreferenceDataset([np.zeros(2)]), 2, Linear.zeros(2))


def test_fit_rejects_wrong_family(sample_preferences):
    with pytest.raises(LexRankParamError):
        fit_lori(sample_preferences, 1, Linear.zeros(3))
    with pytest.raises(LexRankParamError):
        LoriFitter(2, [TrajLinear()])


def test_fit_on_sample_trajectories(sample_preferences):
    model, report = fit_lori(sample_preferences, 2, TrajThresholdedLinear(), FitConfig(max_iters=100))

    assert model.kind == "trajectory"
    assert report.iterations >= 1 and math.isfinite(report.final_loss)


def test_fit_report_dict(two_point_dataset):
    _, report = fit_trex(two_point_dataset, Linear.zeros(1), FitConfig(max_iters=20))
    data = json.loads(report.to_json())

    assert data["converged"] == report.converged
    assert FitReport.from_dict(data) == report
    with pytest.raises(LexRankInvalidData):
        FitReport.from_dict({"method": "lori"})


def test_direction_cosine():
    assert direction_cosine([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
    assert direction_cosine([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)
    assert direction_cosine([0.0, 0.0], [1.0, 1.0]) == 0.0
