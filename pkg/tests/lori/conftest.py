""" Unit tests for lexrank.lori subpackage """


import numpy as np

from importlib import resources
from pytest import fixture

from lexrank.lori import LevelParams
from lexrank.lori import Linear
from lexrank.lori import LexRewardModel
from lexrank.lori import PreferenceDataset
from lexrank.lori import Trajectory
from lexrank.lori.dataio import read_preferences
from lexrank.lori.dataio import read_trajectories


@fixture
def rng():
    return np.random.default_rng(12345)


@fixture(scope='package')
def intransitivity_triple():
    return [np.array([-0.6, 2.0]), np.array([0.0, 0.0]), np.array([0.6, -2.0])]


@fixture(scope='package')
def projection_model():
    """ Two levels projecting R^2 on its coordinates, alpha = epsilon = 1. """

    return LexRewardModel([(Linear([1.0, 0.0]), LevelParams(1.0, 1.0)),
                           (Linear([0.0, 1.0]), LevelParams(1.0, 1.0))])


@fixture(scope='package')
def logistic_model():
    """ Single scalar linear reward with alpha = 1 and epsilon = 0. """

    return LexRewardModel([(Linear([1.0]), LevelParams(1.0, 0.0))])


@fixture
def two_point_dataset():
    return PreferenceDataset([np.array([1.0]), np.array([0.0])], {(0, 1): 2, (1, 0): 1})


@fixture
def random_trajectories():
    generator = np.random.default_rng(7)

    def make(n, horizon=5, with_age=False):
        return [Trajectory(generator.integers(2, size=horizon),
                           generator.uniform(1.0, 5.0, horizon),
                           generator.uniform(1.0, 5.0, horizon),
                           float(generator.normal(40.0, 10.0)) if with_age else None)
                for _ in range(n)]

    return make


@fixture(scope='package')
def sample_trajectories():
    with resources.path('lexrank.lori.data', 'trajectories.sample.csv') as path2csv:
        return read_trajectories(path2csv)


@fixture(scope='package')
def sample_preferences(sample_trajectories):
    with resources.path('lexrank.lori.data', 'preferences.sample.csv') as path2csv:
        return read_preferences(path2csv, sample_trajectories)


@fixture
def fast_config_dict(tmp_path):
    """ Overrides that shrink every study to a few seconds. """

    return {
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "results"),
        "fit": {"learning_rate": 0.01, "max_iters": 300},
        "birl": {"n_samples": 12, "burn_in": 2, "thin": 5},
        "qlearning": {"episodes": 200, "batch_size": 50, "horizon": 10},
        "cloning": {"max_iters": 50, "hidden_width": 8},
        "allocation": {"n_organ_events": 40, "waitlist_size": 4},
        "cancer": {"n_trajectories": 40, "horizon": 10, "n_train": 60, "n_test": 60, "n_policy_samples": 20},
        "ksweep": {"k_true": 3, "dim": 3, "k_values": [1, 2], "n_train": 200, "n_test": 200},
        "age": {"n_trajectories": 40, "horizon": 5, "n_train": 80, "n_test": 80, "curve_ages": [20.0, 40.0, 60.0]},
        "allocation_study": {"n_test_events": 20, "need_max": 20.0, "benefit_max": 100.0},
    }
