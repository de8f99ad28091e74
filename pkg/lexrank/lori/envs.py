""" Simulated decision environments and preference-data generators """


import collections
import logging
import math

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from lexrank.lori.exception import LexRankParamError
from lexrank.lori.infer import PreferenceDataset
from lexrank.lori.prefmodel import LevelParams
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.prefmodel import pair_reward_diffs
from lexrank.lori.prefmodel import sample_preferences
from lexrank.lori.rewards import EFFICACY_FIRST
from lexrank.lori.rewards import TOXICITY_FIRST
from lexrank.lori.rewards import AgeGated
from lexrank.lori.rewards import Alternative
from lexrank.lori.rewards import CancerGroundTruthTumor
from lexrank.lori.rewards import CancerGroundTruthWBC
from lexrank.lori.rewards import Linear
from lexrank.lori.rewards import TrajLinear
from lexrank.lori.rewards import Trajectory

if TYPE_CHECKING:
    from lexrank.lori.control import Policy


logger = logging.getLogger(__name__)

CANCER_ALPHA = 10.0 * math.log(9.0)
CANCER_EPSILON = 0.1
SYNTHETIC_ALPHA = 5.0 * math.log(4.0)

DIRICHLET = "dirichlet"
NORMALIZED_UNIFORM = "normalized-uniform"

BENEFIT, NEED = 0, 1


@dataclass
class CancerDynamics:
    """ Pharmacodynamic model of tumor volume z and white-blood-cell count w.

    z' = z + growth z ln(capacity / z) - kill z a + nu
    w' = w + recovery - decay w - toxicity w a + eta
    with nu, eta ~ N(0, noise_std^2) and z floored at z_floor.
    """

    growth: float = 0.003
    capacity: float = 1000.0
    kill: float = 0.15
    recovery: float = 1.2
    decay: float = 0.15
    toxicity: float = 0.4
    noise_std: float = 0.5
    z_floor: float = 1e-3
    z0_mean: float = 30.0
    z0_std: float = 5.0
    w0: float = 8.0
    age_mean: float = 35.0
    age_std: float = 20.0

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not math.isfinite(value):
                raise LexRankParamError(f"CancerDynamics.{name} must be finite, got {value}")
        if self.capacity <= 0 or self.z_floor <= 0:
            raise LexRankParamError("capacity and z_floor must be positive")
        if self.noise_std < 0 or self.z0_std < 0 or self.age_std < 0:
            raise LexRankParamError("Standard deviations must be nonnegative")


class CancerState(NamedTuple):
    z: float
    w: float


def advance_states(z: np.ndarray, w: np.ndarray, a: np.ndarray,
                   dynamics: CancerDynamics,
                   rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, np.ndarray]:
    """ Vectorized transition; noise-free when rng is None. """

    nu = rng.normal(0.0, dynamics.noise_std, z.shape) if rng is not None else 0.0
    eta = rng.normal(0.0, dynamics.noise_std, w.shape) if rng is not None else 0.0
    z_next = z + dynamics.growth * z * np.log(dynamics.capacity / z) - dynamics.kill * z * a + nu
    w_next = w + dynamics.recovery - dynamics.decay * w - dynamics.toxicity * w * a + eta
    return np.maximum(z_next, dynamics.z_floor), w_next


def cancer_step(state: CancerState,
                action: int,
                rng: Optional[np.random.Generator] = None,
                dynamics: Optional[CancerDynamics] = None) -> CancerState:
    """ Advance one patient by one treatment decision.
    Parameters:
    ----------
    state: CancerState
        Current (z, w); z must be positive
    action: int
        1 to treat, 0 otherwise
    rng: np.random.Generator, optional
        Noise source (default is the noise-free transition)
    dynamics: CancerDynamics, optional
        Model constants (default is CancerDynamics())

    Returns:
    -------
    CancerState
        Next state, with z clamped to the positivity floor
    """

    dynamics = dynamics or CancerDynamics()
    if action not in (0, 1):
        raise LexRankParamError(f"Action must be 0 or 1, got {action!r}")
    if not (math.isfinite(state.z) and math.isfinite(state.w)) or state.z <= 0:
        raise LexRankParamError(f"Invalid cancer state {state}")
    z, w = advance_states(np.array([state.z], dtype=float), np.array([state.w], dtype=float),
                          np.array([action], dtype=float), dynamics, rng)
    return CancerState(float(z[0]), float(w[0]))


def rollout_batch(policy: "Policy",
                  n: int,
                  horizon: int,
                  rng: np.random.Generator,
                  with_age: bool = False,
                  dynamics: Optional[CancerDynamics] = None) -> List[Trajectory]:
    """ Simulate n patients in lock-step under one policy.

    Draw order per call: initial tumor volumes, ages (when requested), then
    for every step the action uniforms followed by the transition noise.

    Parameters:
    ----------
    policy: Policy
        Anything with action_probs(z, w) -> (n, 2)
    n: int
        Number of patients
    horizon: int
        Trajectory length tau >= 1
    rng: np.random.Generator
        Source of randomness
    with_age: bool
        Attach an age drawn from N(age_mean, age_std^2)
    dynamics: CancerDynamics, optional
        Model constants (default is CancerDynamics())

    Returns:
    -------
    List[Trajectory]
        One trajectory per patient
    """

    dynamics = dynamics or CancerDynamics()
    if horizon < 1:
        raise LexRankParamError(f"Horizon must be >= 1, got {horizon}")
    if n < 0:
        raise LexRankParamError(f"Number of patients must be >= 0, got {n}")

    z = np.maximum(rng.normal(dynamics.z0_mean, dynamics.z0_std, n), dynamics.z_floor)
    w = np.full(n, dynamics.w0)
    ages = rng.normal(dynamics.age_mean, dynamics.age_std, n) if with_age else None

    zs, ws, actions = np.empty((horizon, n)), np.empty((horizon, n)), np.empty((horizon, n), dtype=int)
    for t in range(horizon):
        zs[t], ws[t] = z, w
        p_treat = policy.action_probs(z, w)[:, 1]
        actions[t] = rng.random(n) < p_treat
        if t < horizon - 1:
            z, w = advance_states(z, w, actions[t].astype(float), dynamics, rng)

    return [Trajectory(actions[:, i], zs[:, i], ws[:, i], None if ages is None else float(ages[i]))
            for i in range(n)]


def rollout(policy: "Policy",
            horizon: int,
            rng: np.random.Generator,
            with_age: bool = False,
            dynamics: Optional[CancerDynamics] = None) -> Trajectory:
    """ Simulate one patient; the single-patient case of rollout_batch. """

    return rollout_batch(policy, 1, horizon, rng, with_age, dynamics)[0]


def cancer_ground_truth(alpha: float = CANCER_ALPHA, epsilon: float = CANCER_EPSILON) -> LexRewardModel:
    """ Keep mean WBC above five first, then minimize mean tumor volume. """

    return LexRewardModel([(CancerGroundTruthWBC(), LevelParams(alpha, epsilon)),
                           (CancerGroundTruthTumor(), LevelParams(alpha, epsilon))])


def single_reward_ground_truth(theta_z: float = 0.2, theta_w: float = 0.8,
                               alpha: float = CANCER_ALPHA) -> LexRewardModel:
    """ One linear trajectory reward under the logistic preference model. """

    return LexRewardModel([(TrajLinear(theta_z, theta_w), LevelParams(alpha, 0.0))])


def age_ground_truth(y_threshold: float = 40.0, y_sensitivity: float = 1.0,
                     alpha: float = CANCER_ALPHA, epsilon: float = CANCER_EPSILON) -> LexRewardModel:
    """ Efficacy prioritized over toxicity for patients older than y_threshold, the reverse below. """

    return LexRewardModel([(AgeGated(y_threshold, y_sensitivity, EFFICACY_FIRST), LevelParams(alpha, epsilon)),
                           (AgeGated(y_threshold, y_sensitivity, TOXICITY_FIRST), LevelParams(alpha, epsilon))])


def gen_preference_dataset(ground_truth: LexRewardModel,
                           pool: Sequence[Alternative],
                           n_pairs: int,
                           rng: np.random.Generator) -> PreferenceDataset:
    """ Label n_pairs uniformly drawn distinct pairs of the pool with the ground truth.
    Parameters:
    ----------
    ground_truth: LexRewardModel
        Model the labels are sampled from
    pool: Sequence[Alternative]
        At least two alternatives
    n_pairs: int
        Number of labelled pairs (draws with replacement across pairs)
    rng: np.random.Generator
        Source of randomness

    Returns:
    -------
    PreferenceDataset
        Dataset over the pool with aggregated counts

    Raises:
    ------
    LexRankParamError
        Pool smaller than two or negative n_pairs
    """

    m = len(pool)
    if m < 2:
        raise LexRankParamError(f"Need at least two alternatives to form pairs, got {m}")
    if n_pairs < 0:
        raise LexRankParamError(f"n_pairs must be >= 0, got {n_pairs}")

    first = rng.integers(m, size=n_pairs)
    second = rng.integers(m - 1, size=n_pairs)
    second += second >= first

    rewards = ground_truth.reward_matrix(pool)
    first_wins = sample_preferences(pair_reward_diffs(rewards, first, second),
                                    ground_truth.alphas, ground_truth.epsilons, rng)
    winners = np.where(first_wins, first, second)
    losers = np.where(first_wins, second, first)

    counts = collections.Counter(zip(winners.tolist(), losers.tolist()))
    return PreferenceDataset(pool, counts)


@dataclass
class SyntheticLexEnv:
    """ Random lexicographic environment over R^dim with linear levels. """

    ground_truth: LexRewardModel
    mean: np.ndarray
    std: float

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def k_true(self) -> int:
        return self.ground_truth.k

    def sample_alternatives(self, n: int, rng: np.random.Generator) -> List[np.ndarray]:
        return list(rng.normal(self.mean, self.std, size=(n, self.dim)))


def gen_synthetic_lex_env(k_true: int = 10,
                          dim: int = 10,
                          rng: Optional[np.random.Generator] = None,
                          weights: str = DIRICHLET,
                          alpha: float = SYNTHETIC_ALPHA,
                          alternative_std: float = 0.5) -> SyntheticLexEnv:
    """ Draw simplex weights, half-normal indifference widths and a fixed alpha per level.

    weights="dirichlet" samples uniformly on the simplex; "normalized-uniform"
    normalizes U(0, 1) draws, which is a different distribution.
    """

    if k_true < 1 or dim < 1:
        raise LexRankParamError(f"k_true and dim must be positive, got {k_true} and {dim}")
    rng = rng if rng is not None else np.random.default_rng()

    if weights == DIRICHLET:
        thetas = rng.dirichlet(np.ones(dim), size=k_true)
    elif weights == NORMALIZED_UNIFORM:
        raw = rng.random((k_true, dim))
        thetas = raw / raw.sum(axis=1, keepdims=True)
    else:
        raise LexRankParamError(f"Unknown weight distribution '{weights}'")
    epsilons = np.abs(rng.standard_normal(k_true))

    truth = LexRewardModel([(Linear(theta), LevelParams(float(alpha), float(epsilon)))
                            for theta, epsilon in zip(thetas, epsilons)])
    return SyntheticLexEnv(truth, np.zeros(dim), float(alternative_std))


class AllocationPair(NamedTuple):
    benefit: float
    need: float


@dataclass
class AllocationConfig:
    """ Synthetic waitlist generator; benefit and need are measured in days. """

    n_organ_events: int = 500
    waitlist_size: int = 10
    benefit_mean: float = 200.0
    benefit_std: float = 80.0
    need_mean: float = 100.0
    need_std: float = 40.0
    n_patients: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_organ_events < 0:
            raise LexRankParamError("n_organ_events must be >= 0")
        if self.waitlist_size < 2:
            raise LexRankParamError(f"waitlist_size must be >= 2, got {self.waitlist_size}")
        if self.benefit_std < 0 or self.need_std < 0:
            raise LexRankParamError("Standard deviations must be nonnegative")
        if self.n_patients is not None and self.n_patients < self.waitlist_size:
            raise LexRankParamError("n_patients must be at least waitlist_size")


def allocation_ground_truth(alpha: float = 1.0) -> LexRewardModel:
    """ Need-first allocation preferences over [benefit, need] features. """

    return LexRewardModel([(Linear([0.0001, 0.0139]), LevelParams(alpha, 0.8944)),
                           (Linear([0.0562, 0.0002]), LevelParams(alpha, 1.8830))])


def _draw_pairs(config: AllocationConfig, n: int, rng: np.random.Generator) -> List[np.ndarray]:
    benefit = rng.normal(config.benefit_mean, config.benefit_std, n)
    need = rng.normal(config.need_mean, config.need_std, n)
    return list(np.column_stack([benefit, need]))


def _tournament(rewards: np.ndarray, ground_truth: LexRewardModel, rng: np.random.Generator) -> int:
    best = 0
    for challenger in range(1, len(rewards)):
        challenger_wins = sample_preferences((rewards[challenger] - rewards[best]).reshape(1, -1),
                                             ground_truth.alphas, ground_truth.epsilons, rng)[0]
        if challenger_wins:
            best = challenger
    return best


def gen_allocation_dataset(ground_truth: LexRewardModel,
                           n_organ_events: int,
                           waitlist_size: int,
                           rng: np.random.Generator,
                           config: Optional[AllocationConfig] = None) -> PreferenceDataset:
    """ Simulate organ offers: the sampled tournament winner is preferred to every other waitlisted patient.
    Parameters:
    ----------
    ground_truth: LexRewardModel
        Preferences over [benefit, need] feature vectors
    n_organ_events: int
        Number of organs allocated
    waitlist_size: int
        Candidates per organ (>= 2)
    rng: np.random.Generator
        Source of randomness
    config: AllocationConfig, optional
        Marginals and optional fixed patient pool

    Returns:
    -------
    PreferenceDataset
        waitlist_size - 1 preferences per organ event
    """

    config = config or AllocationConfig()
    config = AllocationConfig(n_organ_events, waitlist_size, config.benefit_mean, config.benefit_std,
                              config.need_mean, config.need_std, config.n_patients)

    alternatives: List[np.ndarray] = []
    if config.n_patients is not None:
        alternatives = _draw_pairs(config, config.n_patients, rng)
        pool_rewards = ground_truth.reward_matrix(alternatives)

    counts: collections.Counter = collections.Counter()
    for _ in range(n_organ_events):
        if config.n_patients is not None:
            members = rng.choice(config.n_patients, size=waitlist_size, replace=False)
            rewards = pool_rewards[members]
        else:
            members = np.arange(len(alternatives), len(alternatives) + waitlist_size)
            waitlist = _draw_pairs(config, waitlist_size, rng)
            alternatives.extend(waitlist)
            rewards = ground_truth.reward_matrix(waitlist)

        winner = _tournament(rewards, ground_truth, rng)
        for position, member in enumerate(members.tolist()):
            if position != winner:
                counts[(int(members[winner]), member)] += 1

    logger.info(f"Allocated {n_organ_events} organs over {len(alternatives)} candidates")
    return PreferenceDataset(alternatives, counts)
