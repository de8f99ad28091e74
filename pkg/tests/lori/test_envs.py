""" Unit tests for lexrank.lori.envs module """


import math
import pytest
import numpy as np

from pytest import fixture

from lexrank.lori import CancerDynamics
from lexrank.lori import LevelParams
from lexrank.lori import LexRankParamError
from lexrank.lori import LexRewardModel
from lexrank.lori import Linear
from lexrank.lori import Trajectory
from lexrank.lori import cancer_ground_truth
from lexrank.lori import cancer_step
from lexrank.lori import gen_allocation_dataset
from lexrank.lori import gen_preference_dataset
from lexrank.lori import gen_synthetic_lex_env
from lexrank.lori import lex_dominates
from lexrank.lori import pref_prob_tiebreak
from lexrank.lori import rollout
from lexrank.lori.control import ConstantPolicy
from lexrank.lori.envs import NORMALIZED_UNIFORM
from lexrank.lori.envs import AllocationConfig
from lexrank.lori.envs import CancerState
from lexrank.lori.envs import age_ground_truth
from lexrank.lori.envs import allocation_ground_truth
from lexrank.lori.envs import rollout_batch
from lexrank.lori.envs import single_reward_ground_truth
from lexrank.lori.prefmodel import pair_reward_diffs
from lexrank.lori.prefmodel import tiebreak_from_diffs


@fixture
def noise_free():
    return CancerDynamics(noise_std=0.0, z0_std=0.0)


def test_cancer_step_treated():
    state = cancer_step(CancerState(30.0, 8.0), 1)

    assert state.z == pytest.approx(30.0 + 0.09 * math.log(1000.0 / 30.0) - 4.5, abs=1e-12)
    assert state.z == pytest.approx(25.8156, abs=1e-4)
    assert state.w == pytest.approx(4.8, abs=1e-12)


def test_cancer_step_untreated():
    state = cancer_step(CancerState(30.0, 8.0), 0)

    assert state.z > 30.0
    assert state.w == pytest.approx(8.0, abs=1e-12)


def test_cancer_step_floors_tumor_volume():
    state = cancer_step(CancerState(2.0, 8.0), 1, dynamics=CancerDynamics(kill=3.0))

    assert state.z == CancerDynamics().z_floor


def test_cancer_step_noise_is_seeded():
    first = cancer_step(CancerState(30.0, 8.0), 1, np.random.default_rng(4))
    second = cancer_step(CancerState(30.0, 8.0), 1, np.random.default_rng(4))

    assert first == second
    assert first != cancer_step(CancerState(30.0, 8.0), 1)


@pytest.mark.parametrize("state, action", [
    (CancerState(30.0, 8.0), 2),
    (CancerState(30.0, 8.0), -1),
    (CancerState(0.0, 8.0), 0),
    (CancerState(30.0, math.nan), 0),
])
def test_cancer_step_rejects_invalid_input(state, action):
    with pytest.raises(LexRankParamError):
        cancer_step(state, action)


@pytest.mark.parametrize("kwargs", [
    {"capacity": 0.0},
    {"noise_std": -0.5},
    {"growth": math.inf},
])
def test_dynamics_validation(kwargs):
    with pytest.raises(LexRankParamError):
        CancerDynamics(**kwargs)


def test_always_treat_drives_wbc_to_fixed_point(noise_free, rng):
    trajectory = rollout(ConstantPolicy(1.0), 50, rng, dynamics=noise_free)

    assert np.all(trajectory.actions == 1)
    assert np.all(np.diff(trajectory.w) <= 0)
    assert trajectory.w[-1] == pytest.approx(1.2 / 0.55, abs=1e-6)
    assert np.all(np.diff(trajectory.z) <= 0)


def test_never_treat_keeps_wbc(noise_free, rng):
    trajectory = rollout(ConstantPolicy(0.0), 10, rng, dynamics=noise_free)

    assert np.all(trajectory.actions == 0)
    np.testing.assert_allclose(trajectory.w, 8.0)
    assert trajectory.z[0] == 30.0


def test_rollout_batch_shapes(rng):
    trajectories = rollout_batch(ConstantPolicy(0.5), 25, 7, rng, with_age=True)

    assert len(trajectories) == 25
    assert all(trajectory.horizon == 7 for trajectory in trajectories)
    assert all(trajectory.age is not None for trajectory in trajectories)
    assert all(trajectory.w[0] == 8.0 for trajectory in trajectories)
    assert all(np.all(trajectory.z > 0) for trajectory in trajectories)


def test_rollout_is_reproducible():
    first = rollout_batch(ConstantPolicy(0.5), 5, 6, np.random.default_rng(9))
    second = rollout_batch(ConstantPolicy(0.5), 5, 6, np.random.default_rng(9))

    assert first == second


def test_rollout_rejects_bad_horizon(rng):
    with pytest.raises(LexRankParamError):
        rollout(ConstantPolicy(0.5), 0, rng)
    with pytest.raises(LexRankParamError):
        rollout_batch(ConstantPolicy(0.5), -1, 5, rng)


def test_single_step_rollout(noise_free, rng):
    trajectory = rollout(ConstantPolicy(1.0), 1, rng, dynamics=noise_free)

    assert trajectory.horizon == 1
    np.testing.assert_array_equal(trajectory.z, [30.0])
    np.testing.assert_array_equal(trajectory.w, [8.0])
    np.testing.assert_array_equal(trajectory.actions, [1])


def test_single_step_rollout_skips_transition_noise():
    dynamics = CancerDynamics()
    simulated, replayed = np.random.default_rng(3), np.random.default_rng(3)

    rollout(ConstantPolicy(0.5), 1, simulated)
    replayed.normal(dynamics.z0_mean, dynamics.z0_std, 1)
    replayed.random(1)

    assert simulated.random() == replayed.random()


def test_ground_truth_models():
    truth = cancer_ground_truth()

    assert truth.k == 2 and truth.kind == "trajectory"
    np.testing.assert_allclose(truth.alphas, [10 * math.log(9.0)] * 2)
    np.testing.assert_allclose(truth.epsilons, [0.1, 0.1])
    assert single_reward_ground_truth().k == 1
    assert age_ground_truth().k == 2


def test_cancer_ground_truth_protects_wbc(rng):
    truth = cancer_ground_truth()
    healthy = rollout(ConstantPolicy(0.0), 20, rng)
    treated = rollout(ConstantPolicy(1.0), 20, rng)

    assert treated.z.mean() < healthy.z.mean()
    assert pref_prob_tiebreak(truth, healthy, treated) > 0.99


def test_gen_preference_dataset(rng, random_trajectories):
    pool = random_trajectories(30)
    data = gen_preference_dataset(cancer_ground_truth(), pool, 500, rng)

    assert data.n_preferences == 500
    assert data.n_alternatives == 30
    assert all(star != circ for star, circ in data.counts)


def test_gen_preference_dataset_follows_first_level(rng, random_trajectories):
    pool = random_trajectories(60)
    data = gen_preference_dataset(cancer_ground_truth(), pool, 2000, rng)
    wbc = np.array([min(5.0, trajectory.w.mean()) for trajectory in pool])

    decided = agree = 0
    for (star, circ), count in data.counts.items():
        if abs(wbc[star] - wbc[circ]) > 0.5:
            decided += count
            agree += count * int(wbc[star] > wbc[circ])
    assert decided > 0
    assert agree / decided > 0.99


def test_gen_preference_dataset_is_seeded(random_trajectories):
    pool = random_trajectories(10)
    first = gen_preference_dataset(cancer_ground_truth(), pool, 100, np.random.default_rng(1))
    second = gen_preference_dataset(cancer_ground_truth(), pool, 100, np.random.default_rng(1))

    assert first == second


def test_gen_preference_dataset_edge_cases(rng, random_trajectories):
    pool = random_trajectories(3)

    assert gen_preference_dataset(cancer_ground_truth(), pool, 0, rng).is_empty()
    with pytest.raises(LexRankParamError):
        gen_preference_dataset(cancer_ground_truth(), pool[:1], 10, rng)
    with pytest.raises(LexRankParamError):
        gen_preference_dataset(cancer_ground_truth(), pool, -1, rng)


def test_gen_preference_dataset_flip_rate(rng, random_trajectories):
    truth = cancer_ground_truth()
    pool = random_trajectories(40)
    data = gen_preference_dataset(truth, pool, 10000, rng)
    rewards = truth.reward_matrix(pool)

    flips, expected, variance = 0, 0.0, 0.0
    for a, b in data.unordered_pairs():
        if lex_dominates(rewards[a], rewards[b]):
            dominant, dominated = a, b
        elif lex_dominates(rewards[b], rewards[a]):
            dominant, dominated = b, a
        else:
            continue
        p_flip = 1.0 - tiebreak_from_diffs(pair_reward_diffs(rewards, [dominant], [dominated]),
                                           truth.alphas, truth.epsilons)[0]
        total = data.total(a, b)
        flips += data.count(dominated, dominant)
        expected += total * p_flip
        variance += total * p_flip * (1.0 - p_flip)

    assert variance > 0
    assert abs(flips - expected) <= 3 * math.sqrt(variance)


def test_gen_preference_dataset_matches_tiebreak_probability(rng):
    truth = cancer_ground_truth()
    pool = [Trajectory([0], [30.0], [4.0]), Trajectory([0], [30.0], [3.95])]
    data = gen_preference_dataset(truth, pool, 10000, rng)
    p = pref_prob_tiebreak(truth, pool[0], pool[1])

    assert data.total(0, 1) == 10000
    assert 0.05 < p < 0.95
    chi_square = (data.count(0, 1) - 10000 * p) ** 2 / (10000 * p * (1.0 - p))
    assert chi_square < 9.0


def test_synthetic_env_weights_on_simplex(rng):
    for weights in ("dirichlet", NORMALIZED_UNIFORM):
        env = gen_synthetic_lex_env(4, 6, rng, weights=weights)
        assert env.k_true == 4 and env.dim == 6
        for family in env.ground_truth.families:
            assert np.all(family.theta >= 0)
            assert family.theta.sum() == pytest.approx(1.0)


def test_synthetic_env_half_normal_epsilons(rng):
    env = gen_synthetic_lex_env(4000, 2, rng)

    assert np.all(env.ground_truth.epsilons >= 0)
    assert env.ground_truth.epsilons.mean() == pytest.approx(math.sqrt(2 / math.pi), abs=0.04)
    np.testing.assert_allclose(env.ground_truth.alphas, 5 * math.log(4.0))


def test_synthetic_env_alternatives(rng):
    env = gen_synthetic_lex_env(2, 3, rng, alternative_std=2.0)
    alternatives = np.array(env.sample_alternatives(5000, rng))

    assert alternatives.shape == (5000, 3)
    assert alternatives.std() == pytest.approx(2.0, rel=0.05)


def test_synthetic_env_validation(rng):
    with pytest.raises(LexRankParamError):
        gen_synthetic_lex_env(0, 3, rng)
    with pytest.raises(LexRankParamError):
        gen_synthetic_lex_env(2, 3, rng, weights="beta")


def test_allocation_dataset_sizes(rng):
    data = gen_allocation_dataset(allocation_ground_truth(), 30, 5, rng)

    assert data.n_preferences == 30 * 4
    assert data.n_alternatives == 30 * 5
    assert data.kind == "feature"


def test_allocation_dataset_fixed_pool(rng):
    data = gen_allocation_dataset(allocation_ground_truth(), 30, 5, rng, AllocationConfig(n_patients=12))

    assert data.n_alternatives == 12
    assert data.n_preferences == 30 * 4


def test_allocation_need_comes_first():
    truth = allocation_ground_truth()
    urgent, beneficial = np.array([150.0, 200.0]), np.array([300.0, 50.0])

    assert pref_prob_tiebreak(truth, urgent, beneficial) > 0.5


def test_allocation_winner_is_need_first(rng):
    need_slack, waitlist = 1.0, 5
    truth = LexRewardModel([(Linear([0.0, 1.0]), LevelParams(1e6, need_slack)),
                            (Linear([1.0, 0.0]), LevelParams(1e6, 0.0))])
    data = gen_allocation_dataset(truth, 200, waitlist, rng)

    winners = {star // waitlist: star for star, _ in data.counts}
    assert len(winners) == 200
    assert all(star == winners[star // waitlist] for star, _ in data.counts)

    separated = 0
    for event, winner in winners.items():
        need = np.array([data.alternatives[i][1] for i in range(event * waitlist, (event + 1) * waitlist)])
        gaps = np.abs(need[:, None] - need[None, :])[np.triu_indices(waitlist, 1)]
        if np.all(gaps > need_slack + 1e-3):
            separated += 1
            assert winner - event * waitlist == int(np.argmax(need))
        else:
            assert need[winner - event * waitlist] >= need.max() - (waitlist - 1) * (need_slack + 1e-3)
    assert separated > 0


def test_allocation_fixed_pool_records_both_directions(rng):
    data = gen_allocation_dataset(allocation_ground_truth(), 200, 4, rng, AllocationConfig(n_patients=6))

    assert any(data.count(b, a) > 0 for a, b in data.counts)


@pytest.mark.parametrize("kwargs", [
    {"waitlist_size": 1},
    {"n_organ_events": -1},
    {"waitlist_size": 10, "n_patients": 5},
])
def test_allocation_config_validation(kwargs):
    with pytest.raises(LexRankParamError):
        AllocationConfig(**kwargs)
