""" Policies, thresholded lexicographic Q-learning, behavioral cloning and policy comparison """


import logging
import math

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from numpy.typing import ArrayLike

from scipy.special import log_softmax, softmax

from lexrank.lori.envs import CancerDynamics
from lexrank.lori.envs import advance_states
from lexrank.lori.envs import rollout_batch
from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.infer import FitConfig
from lexrank.lori.infer import OptimizerState
from lexrank.lori.infer import rmsprop_step
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.prefmodel import lex_pref_prob_from_diffs
from lexrank.lori.prefmodel import pair_reward_diffs
from lexrank.lori.rewards import Trajectory


logger = logging.getLogger(__name__)

N_ACTIONS = 2


@dataclass
class StateGrid:
    """ Rectangular discretization of (z, w); values outside the bounds fall in the edge bins. """

    z_low: float = 0.0
    z_high: float = 60.0
    z_bins: int = 24
    w_low: float = 0.0
    w_high: float = 12.0
    w_bins: int = 24

    def __post_init__(self) -> None:
        for axis in ("z", "w"):
            low, high, bins = getattr(self, f"{axis}_low"), getattr(self, f"{axis}_high"), getattr(self, f"{axis}_bins")
            if not (math.isfinite(low) and math.isfinite(high)) or low >= high:
                raise LexRankParamError(f"{axis} bounds must be finite with low < high, got [{low}, {high}]")
            if bins < 2:
                raise LexRankParamError(f"{axis}_bins must be >= 2, got {bins}")

    @property
    def n_states(self) -> int:
        return self.z_bins * self.w_bins

    @property
    def z_edges(self) -> np.ndarray:
        return np.linspace(self.z_low, self.z_high, self.z_bins + 1)

    @property
    def w_edges(self) -> np.ndarray:
        return np.linspace(self.w_low, self.w_high, self.w_bins + 1)

    @staticmethod
    def _bin(values: np.ndarray, low: float, high: float, bins: int) -> np.ndarray:
        position = np.floor((np.asarray(values, dtype=float) - low) / (high - low) * bins)
        return np.clip(position, 0, bins - 1).astype(int)

    def z_index(self, z) -> np.ndarray:
        return self._bin(z, self.z_low, self.z_high, self.z_bins)

    def w_index(self, w) -> np.ndarray:
        return self._bin(w, self.w_low, self.w_high, self.w_bins)

    def index(self, z, w) -> np.ndarray:
        """ Flat state index z_bin * w_bins + w_bin. """

        return self.z_index(z) * self.w_bins + self.w_index(w)


class Policy(ABC):
    """ Mapping from patient state to a distribution over {no treatment, treatment}.

    Methods:
    --------
    action_probs(z, w)
        (n, 2) action probabilities; rows sum to one
    act(z, w, rng)
        Sample actions
    to_dict()
        JSON-ready description (see policy_from_dict)
    """

    kind = ""

    @abstractmethod
    def action_probs(self, z, w) -> np.ndarray:
        pass

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    def act(self, z, w, rng: np.random.Generator) -> np.ndarray:
        p_treat = self.action_probs(z, w)[:, 1]
        return (rng.random(len(p_treat)) < p_treat).astype(int)


class ConstantPolicy(Policy):
    """ Treat with the same probability in every state. """

    kind = "constant"

    def __init__(self, p_treat: float) -> None:
        if not 0.0 <= p_treat <= 1.0:
            raise LexRankParamError(f"p_treat must lie in [0, 1], got {p_treat}")
        self.p_treat = float(p_treat)

    def action_probs(self, z, w) -> np.ndarray:
        n = len(np.atleast_1d(z))
        return np.tile([1.0 - self.p_treat, self.p_treat], (n, 1))

    def to_dict(self) -> Dict[str, Any]:
        return {"policy": self.kind, "p_treat": self.p_treat}


def lex_filter(q: np.ndarray, thresholds: ArrayLike) -> np.ndarray:
    """ Actions surviving the thresholded lexicographic filter.

    Level by level, keep the surviving actions whose Q-value is within the
    level threshold of the best surviving Q-value.

    Parameters:
    ----------
    q: np.ndarray
        (k, n_actions) or (k, n, n_actions) Q-values, highest priority first
    thresholds: ArrayLike
        Nonnegative threshold per level

    Returns:
    -------
    np.ndarray
        Boolean mask of shape (n_actions,) or (n, n_actions)
    """

    q = np.asarray(q, dtype=float)
    limits = np.asarray(thresholds, dtype=float)
    if len(limits) != q.shape[0] or (limits < 0).any():
        raise LexRankParamError(f"Need {q.shape[0]} nonnegative thresholds, got {limits.tolist()}")

    survivors = np.ones(q.shape[1:], dtype=bool)
    for level, threshold in enumerate(limits):
        best = np.where(survivors, q[level], -np.inf).max(axis=-1, keepdims=True)
        survivors &= q[level] >= best - threshold
    return survivors


def lex_greedy(q: np.ndarray, thresholds: ArrayLike) -> np.ndarray:
    """ Surviving action with the largest last-level Q-value (lowest index on ties). """

    survivors = lex_filter(q, thresholds)
    return np.where(survivors, np.asarray(q, dtype=float)[-1], -np.inf).argmax(axis=-1)


class TabularPolicy(Policy):
    """ Greedy policy of per-level Q-tables on a state grid; unvisited states act uniformly.

    Attributes:
    ----------
    grid: StateGrid
        Discretization of (z, w)
    q: np.ndarray
        (k, n_states, 2) Q-values
    thresholds: np.ndarray
        Lexicographic filter threshold per level
    visits: np.ndarray
        (n_states, 2) update counts
    """

    kind = "tabular"

    def __init__(self, grid: StateGrid, q: np.ndarray, thresholds: ArrayLike,
                 visits: Optional[np.ndarray] = None) -> None:
        self.grid = grid
        self.q = np.asarray(q, dtype=float)
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.visits = np.zeros((grid.n_states, N_ACTIONS), dtype=int) if visits is None \
            else np.asarray(visits, dtype=int)
        if self.q.ndim != 3 or self.q.shape[1:] != (grid.n_states, N_ACTIONS):
            raise LexRankParamError(f"Q-tables must have shape (k, {grid.n_states}, {N_ACTIONS}), got {self.q.shape}")
        if self.visits.shape != (grid.n_states, N_ACTIONS) or len(self.thresholds) != self.q.shape[0]:
            raise LexRankParamError("Visit counts or thresholds do not match the Q-tables")

    @property
    def k(self) -> int:
        return self.q.shape[0]

    @property
    def coverage(self) -> float:
        """ Fraction of grid states visited during training. """

        return float((self.visits.sum(axis=1) > 0).mean())

    def greedy_actions(self, states: np.ndarray) -> np.ndarray:
        return lex_greedy(self.q[:, states, :], self.thresholds)

    def action_probs(self, z, w) -> np.ndarray:
        states = self.grid.index(np.atleast_1d(z), np.atleast_1d(w))
        probs = np.zeros((len(states), N_ACTIONS))
        probs[np.arange(len(states)), self.greedy_actions(states)] = 1.0
        unvisited = self.visits[states].sum(axis=1) == 0
        probs[unvisited] = 1.0 / N_ACTIONS
        return probs

    def to_dict(self) -> Dict[str, Any]:
        return {"policy": self.kind, "grid": asdict(self.grid), "q": self.q.tolist(),
                "thresholds": self.thresholds.tolist(), "visits": self.visits.tolist()}


class MixturePolicy(Policy):
    """ (1 - uniform_weight) base + uniform_weight uniform. """

    kind = "mixture"

    def __init__(self, base: Policy, uniform_weight: float) -> None:
        if not 0.0 <= uniform_weight <= 1.0:
            raise LexRankParamError(f"uniform_weight must lie in [0, 1], got {uniform_weight}")
        self.base = base
        self.uniform_weight = float(uniform_weight)

    def action_probs(self, z, w) -> np.ndarray:
        return (1.0 - self.uniform_weight) * self.base.action_probs(z, w) + self.uniform_weight / N_ACTIONS

    def to_dict(self) -> Dict[str, Any]:
        return {"policy": self.kind, "uniform_weight": self.uniform_weight, "base": self.base.to_dict()}


def make_behavior_policy(optimal: Policy, epsilon_explore: float) -> MixturePolicy:
    """ pi_b(a | s) = (1 - epsilon) pi*(a | s) + epsilon / |A|.

    Raises:
    ------
    LexRankParamError
        epsilon_explore outside [0, 1]
    """

    return MixturePolicy(optimal, epsilon_explore)


class ClonedPolicy(Policy):
    """ One-hidden-layer ReLU classifier over standardized (z, w). """

    kind = "cloned"

    def __init__(self, W1: np.ndarray, b1: np.ndarray, W2: np.ndarray, b2: np.ndarray,
                 mean: np.ndarray, scale: np.ndarray) -> None:
        self.W1, self.b1 = np.asarray(W1, dtype=float), np.asarray(b1, dtype=float)
        self.W2, self.b2 = np.asarray(W2, dtype=float), np.asarray(b2, dtype=float)
        self.mean, self.scale = np.asarray(mean, dtype=float), np.asarray(scale, dtype=float)
        width = self.W1.shape[1] if self.W1.ndim == 2 else 0
        if width < 1 or self.W1.shape != (2, width) or self.b1.shape != (width,) \
                or self.W2.shape != (width, N_ACTIONS) or self.b2.shape != (N_ACTIONS,):
            raise LexRankParamError("Inconsistent cloned-policy weight shapes")

    @property
    def hidden_width(self) -> int:
        return self.W1.shape[1]

    def logits(self, X: np.ndarray) -> np.ndarray:
        hidden = np.maximum((X - self.mean) / self.scale @ self.W1 + self.b1, 0.0)
        return hidden @ self.W2 + self.b2

    def action_probs(self, z, w) -> np.ndarray:
        X = np.column_stack([np.atleast_1d(z), np.atleast_1d(w)]).astype(float)
        return softmax(self.logits(X), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"policy": self.kind, "W1": self.W1.tolist(), "b1": self.b1.tolist(), "W2": self.W2.tolist(),
                "b2": self.b2.tolist(), "mean": self.mean.tolist(), "scale": self.scale.tolist()}


def policy_from_dict(data: Dict[str, Any]) -> Policy:
    """ Rebuild a policy from Policy.to_dict() output.

    Raises:
    ------
    LexRankInvalidData
        Unknown policy kind or malformed fields
    """

    try:
        kind = data["policy"]
        if kind == ConstantPolicy.kind:
            return ConstantPolicy(data["p_treat"])
        if kind == TabularPolicy.kind:
            return TabularPolicy(StateGrid(**data["grid"]), np.array(data["q"]),
                                 data["thresholds"], np.array(data["visits"]))
        if kind == MixturePolicy.kind:
            return MixturePolicy(policy_from_dict(data["base"]), data["uniform_weight"])
        if kind == ClonedPolicy.kind:
            return ClonedPolicy(*(np.array(data[key]) for key in ("W1", "b1", "W2", "b2", "mean", "scale")))
    except (KeyError, TypeError, ValueError, LexRankParamError) as e:
        raise LexRankInvalidData("Malformed policy description") from e
    raise LexRankInvalidData(f"Unknown policy kind '{kind}'")


@dataclass
class QLearningConfig:
    """ Tabular lexicographic Q-learning settings. """

    episodes: int = 50000
    horizon: int = 20
    batch_size: int = 100
    learning_rate: float = 0.1
    discount: float = 0.95
    explore_start: float = 1.0
    explore_end: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.horizon < 1 or self.batch_size < 1:
            raise LexRankParamError("episodes, horizon and batch_size must be positive")
        if not 0 < self.learning_rate <= 1 or not 0 <= self.discount <= 1:
            raise LexRankParamError("learning_rate must lie in (0, 1] and discount in [0, 1]")
        if not (0 <= self.explore_end <= 1 and 0 <= self.explore_start <= 1):
            raise LexRankParamError("Exploration rates must lie in [0, 1]")


class LexQLearner:
    """ Thresholded lexicographic Q-learning on the cancer simulator.

    One Q-table per reward level is updated from the per-step reward of
    the next state; actions are chosen epsilon-greedily with respect to the
    lexicographic filter. Episodes run in parallel batches and colliding
    updates of a (state, action) cell are averaged.

    Attributes:
    ----------
    _config: QLearningConfig
        Training settings
    _logger: Logger
        Logger of the class
    """

    def __init__(self, config: Optional[QLearningConfig] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        self._config = config or QLearningConfig()
        self._setup_logging(logging_level)

    def _setup_logging(self, logging_level: Union[int, str]) -> None:
        self._logger = logging.getLogger(__name__)
        self._logger.setLevel(logging_level)

    def _step_rewards(self, model: LexRewardModel, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.vstack([family.step_reward(z, w, self._config.horizon) for family in model.families])

    def train(self,
              model: LexRewardModel,
              dynamics: Optional[CancerDynamics] = None,
              grid: Optional[StateGrid] = None,
              thresholds: Optional[ArrayLike] = None) -> TabularPolicy:
        """ Learn a greedy lexicographic policy for the reward levels of a model.
        Parameters:
        ----------
        model: LexRewardModel
            Trajectory reward levels with per-step decompositions
        dynamics: CancerDynamics, optional
            Simulator constants
        grid: StateGrid, optional
            State discretization
        thresholds: ArrayLike, optional
            Filter threshold per level (default is the model's epsilons)

        Returns:
        -------
        TabularPolicy
            Greedy policy after training
        """

        config = self._config
        dynamics = dynamics or CancerDynamics()
        grid = grid or StateGrid()
        limits = np.asarray(model.epsilons if thresholds is None else thresholds, dtype=float)
        rng = np.random.default_rng(config.seed)

        k, n_cells = model.k, grid.n_states * N_ACTIONS
        q = np.zeros((k, grid.n_states, N_ACTIONS))
        visits = np.zeros((grid.n_states, N_ACTIONS), dtype=int)
        n_batches = math.ceil(config.episodes / config.batch_size)

        for batch in range(n_batches):
            n = min(config.batch_size, config.episodes - batch * config.batch_size)
            progress = batch / (n_batches - 1) if n_batches > 1 else 1.0
            explore = config.explore_start + (config.explore_end - config.explore_start) * progress

            z = np.maximum(rng.normal(dynamics.z0_mean, dynamics.z0_std, n), dynamics.z_floor)
            w = np.full(n, dynamics.w0)
            states = grid.index(z, w)
            for t in range(config.horizon - 1):
                greedy = lex_greedy(q[:, states, :], limits)
                actions = np.where(rng.random(n) < explore, rng.integers(N_ACTIONS, size=n), greedy)
                z, w = advance_states(z, w, actions.astype(float), dynamics, rng)
                next_states = grid.index(z, w)

                target = self._step_rewards(model, z, w)
                if t < config.horizon - 2:
                    bootstrap = lex_greedy(q[:, next_states, :], limits)
                    target = target + config.discount * q[:, next_states, bootstrap]
                td = target - q[:, states, actions]

                cells = states * N_ACTIONS + actions
                counts = np.bincount(cells, minlength=n_cells)
                hit = counts > 0
                for level in range(k):
                    sums = np.bincount(cells, td[level], minlength=n_cells)
                    update = np.zeros(n_cells)
                    update[hit] = sums[hit] / counts[hit]
                    q[level] += config.learning_rate * update.reshape(grid.n_states, N_ACTIONS)
                visits += counts.reshape(grid.n_states, N_ACTIONS)
                states = next_states

            if (batch + 1) % 100 == 0:
                self._logger.debug(f"Q-learning batch {batch + 1}/{n_batches} (explore {explore:.3f})")

        policy = TabularPolicy(grid, q, limits, visits)
        self._logger.info(f"Q-learning finished after {config.episodes} episodes, "
                          f"state coverage {policy.coverage:.1%}")
        return policy


def lex_q_learning(reward_levels: LexRewardModel,
                   env_config: Optional[CancerDynamics] = None,
                   grid: Optional[StateGrid] = None,
                   train_config: Optional[QLearningConfig] = None,
                   thresholds: Optional[ArrayLike] = None,
                   logging_level: Union[int, str] = logging.WARNING) -> TabularPolicy:
    """ Train a thresholded lexicographic Q-learning policy. """

    return LexQLearner(train_config, logging_level).train(reward_levels, env_config, grid, thresholds)


@dataclass
class CloningConfig:
    """ Behavioral cloning network and optimizer settings. """

    hidden_width: int = 32
    learning_rate: float = 0.001
    rmsprop_discount: float = 0.9
    patience: int = 100
    max_iters: int = 20000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_width < 1:
            raise LexRankParamError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.patience < 1 or self.max_iters < 1:
            raise LexRankParamError("patience and max_iters must be positive")
        FitConfig(learning_rate=self.learning_rate, rmsprop_discount=self.rmsprop_discount)


class BehaviorCloner:
    """ Cross-entropy training of a one-hidden-layer policy network with RMSprop.

    Training stops once the loss has not improved on its best value for
    `patience` consecutive iterations; the best weights are returned.
    """

    def __init__(self, config: Optional[CloningConfig] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        self._config = config or CloningConfig()
        self._setup_logging(logging_level)

    def _setup_logging(self, logging_level: Union[int, str]) -> None:
        self._logger = logging.getLogger(__name__)
        self._logger.setLevel(logging_level)

    def _unpack(self, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        h = self._config.hidden_width
        W1 = phi[:2 * h].reshape(2, h)
        b1 = phi[2 * h:3 * h]
        W2 = phi[3 * h:5 * h].reshape(h, N_ACTIONS)
        b2 = phi[5 * h:]
        return W1, b1, W2, b2

    def _loss_and_grad(self, phi: np.ndarray, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
        W1, b1, W2, b2 = self._unpack(phi)
        n = len(X)
        pre = X @ W1 + b1
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ W2 + b2
        log_probs = log_softmax(logits, axis=1)
        loss = -float(log_probs[np.arange(n), y].mean())

        d_logits = np.exp(log_probs)
        d_logits[np.arange(n), y] -= 1.0
        d_logits /= n
        d_hidden = (d_logits @ W2.T) * (pre > 0)
        grad = np.concatenate([(X.T @ d_hidden).ravel(), d_hidden.sum(axis=0),
                               (hidden.T @ d_logits).ravel(), d_logits.sum(axis=0)])
        return loss, grad

    def train(self, demos: Sequence[Trajectory]) -> ClonedPolicy:
        """ Fit the network to every (z_t, w_t) -> a_t step of the demonstrations.

        Raises:
        ------
        LexRankParamError
            No demonstrations
        """

        if len(demos) == 0:
            raise LexRankParamError("Behavioral cloning needs at least one demonstration")
        config = self._config
        X = np.vstack([np.column_stack([demo.z, demo.w]) for demo in demos])
        y = np.concatenate([demo.actions for demo in demos])
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale

        rng = np.random.default_rng(config.seed)
        h = config.hidden_width
        phi = np.concatenate([rng.normal(0.0, math.sqrt(2.0 / 2), 2 * h), np.zeros(h),
                              rng.normal(0.0, math.sqrt(2.0 / h), h * N_ACTIONS), np.zeros(N_ACTIONS)])
        optimizer = FitConfig(learning_rate=config.learning_rate, rmsprop_discount=config.rmsprop_discount)
        state = OptimizerState.zeros(len(phi))

        loss, grad = self._loss_and_grad(phi, X, y)
        best_loss, best_phi, since_best = loss, phi, 0
        state.loss_history.append(loss)
        for iteration in range(1, config.max_iters + 1):
            phi, state = rmsprop_step(state, phi, grad, optimizer)
            loss, grad = self._loss_and_grad(phi, X, y)
            state.loss_history.append(loss)
            if loss < best_loss:
                best_loss, best_phi, since_best = loss, phi, 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break

        self.loss_history: List[float] = state.loss_history
        self._logger.info(f"Behavioral cloning on {len(X)} steps: {state.iteration} iterations, "
                          f"cross-entropy {state.loss_history[0]:.4f} -> {best_loss:.4f}")
        return ClonedPolicy(*self._unpack(best_phi), mean, scale)


def behavioral_cloning(demos: Sequence[Trajectory],
                       net_config: Optional[CloningConfig] = None,
                       logging_level: Union[int, str] = logging.WARNING) -> ClonedPolicy:
    """ Imitate the demonstrated actions with a one-hidden-layer classifier. """

    return BehaviorCloner(net_config, logging_level).train(demos)


def policy_pref_frequency(pi_star: Policy,
                          pi_circ: Policy,
                          ground_truth: LexRewardModel,
                          n_samples: int,
                          rng: np.random.Generator,
                          horizon: int = 20,
                          dynamics: Optional[CancerDynamics] = None) -> Tuple[float, float]:
    """ Monte-Carlo estimate of Pr(pi_star > pi_circ) under the raw lexicographic model.
    Parameters:
    ----------
    pi_star, pi_circ: Policy
        Policies compared
    ground_truth: LexRewardModel
        Preference model trajectories are judged by
    n_samples: int
        Trajectory pairs (>= 1)
    rng: np.random.Generator
        Source of randomness; pi_star is rolled out first
    horizon: int
        Trajectory length

    Returns:
    -------
    Tuple[float, float]
        Mean preference probability and its standard error
    """

    if n_samples < 1:
        raise LexRankParamError(f"n_samples must be >= 1, got {n_samples}")
    stars = rollout_batch(pi_star, n_samples, horizon, rng, dynamics=dynamics)
    circs = rollout_batch(pi_circ, n_samples, horizon, rng, dynamics=dynamics)
    rewards = ground_truth.reward_matrix(stars + circs)
    index = np.arange(n_samples)
    probs = lex_pref_prob_from_diffs(pair_reward_diffs(rewards, index, index + n_samples),
                                     ground_truth.alphas, ground_truth.epsilons)
    stderr = float(probs.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return float(probs.mean()), stderr
