""" Bayesian inverse reinforcement learning baseline (Metropolis-Hastings over linear rewards) """


import logging
import math

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from scipy.special import logsumexp
from scipy.stats import norm

from lexrank.lori.control import N_ACTIONS
from lexrank.lori.control import StateGrid
from lexrank.lori.envs import CancerDynamics
from lexrank.lori.exception import LexRankConvergenceError
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.rewards import TrajLinear
from lexrank.lori.rewards import Trajectory


logger = logging.getLogger(__name__)


@dataclass
class BirlConfig:
    """ Chain length, proposal, prior and planning settings of the sampler.

    temperature is the Boltzmann constant c of the demonstration likelihood;
    c = 0 makes the likelihood flat so the chain samples the prior.
    """

    n_samples: int = 10000
    burn_in: int = 1000
    thin: int = 100
    proposal_std: float = 0.01
    prior_std: float = 1.0
    temperature: float = 1.0
    discount: float = 0.95
    horizon: int = 20
    tolerance: float = 1e-6
    max_value_iters: int = 10000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise LexRankParamError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0 <= self.burn_in < self.n_samples or self.thin < 1:
            raise LexRankParamError(f"Need 0 <= burn_in < n_samples and thin >= 1, "
                                    f"got burn_in={self.burn_in}, thin={self.thin}")
        if not (self.proposal_std > 0 and self.prior_std > 0 and self.temperature >= 0):
            raise LexRankParamError("proposal_std and prior_std must be positive, temperature nonnegative")
        if not 0 <= self.discount < 1 or not self.tolerance > 0 or self.max_value_iters < 1 or self.horizon < 1:
            raise LexRankParamError("Invalid value-iteration settings")


def _axis_transitions(centers: np.ndarray, edges: np.ndarray, means: np.ndarray, std: float) -> np.ndarray:
    """ Row i: probability that N(means[i], std^2) lands in each bin; tails go to the edge bins. """

    inner = edges[1:-1]
    if std == 0:
        target = np.searchsorted(inner, means, side="right")
        matrix = np.zeros((len(centers), len(centers)))
        matrix[np.arange(len(centers)), target] = 1.0
        return matrix
    cdf = norm.cdf((inner[None, :] - means[:, None]) / std)
    cdf = np.hstack([np.zeros((len(means), 1)), cdf, np.ones((len(means), 1))])
    return np.diff(cdf, axis=1)


class TransitionModel:
    """ Discretized cancer dynamics on a StateGrid.

    The z and w transitions are independent given the action, so the
    expectation of a (z_bins, w_bins) array M under action a is
    Pz[a] @ M @ Pw[a].T.
    """

    def __init__(self, grid: StateGrid, dynamics: Optional[CancerDynamics] = None) -> None:
        self.grid = grid
        self.dynamics = dynamics or CancerDynamics()
        d = self.dynamics
        z_edges, w_edges = grid.z_edges, grid.w_edges
        self.z_centers = 0.5 * (z_edges[1:] + z_edges[:-1])
        self.w_centers = 0.5 * (w_edges[1:] + w_edges[:-1])
        z = np.maximum(self.z_centers, d.z_floor)
        self.Pz = np.stack([_axis_transitions(self.z_centers, z_edges,
                                              np.maximum(z + d.growth * z * np.log(d.capacity / z) - d.kill * z * a,
                                                         d.z_floor),
                                              d.noise_std)
                            for a in range(N_ACTIONS)])
        w = self.w_centers
        self.Pw = np.stack([_axis_transitions(self.w_centers, w_edges,
                                              w + d.recovery - d.decay * w - d.toxicity * w * a, d.noise_std)
                            for a in range(N_ACTIONS)])

    def expectation(self, values: np.ndarray) -> np.ndarray:
        """ (2, z_bins, w_bins) expected next-state values for every state and action. """

        return np.stack([self.Pz[a] @ values @ self.Pw[a].T for a in range(N_ACTIONS)])


def value_iteration(model: TransitionModel,
                    rewards: np.ndarray,
                    discount: float,
                    tolerance: float = 1e-6,
                    max_iters: int = 10000,
                    initial: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int]:
    """ Q*(s, a) = E[r(s') + discount max_a' Q*(s', a')] on the grid.
    Parameters:
    ----------
    model: TransitionModel
        Discretized dynamics
    rewards: np.ndarray
        (z_bins, w_bins) reward of arriving in each state
    discount: float
        Discount in [0, 1)
    tolerance: float
        Stop once the sup-norm change of V is below this value
    max_iters: int
        Iteration cap
    initial: np.ndarray, optional
        Starting state values (warm start)

    Returns:
    -------
    Tuple[np.ndarray, int]
        (n_states, 2) Q-values in flat StateGrid order and iterations used

    Raises:
    ------
    LexRankConvergenceError
        Tolerance not reached within max_iters
    """

    values = np.zeros_like(rewards) if initial is None else initial.copy()
    residual = math.inf
    for iteration in range(1, max_iters + 1):
        q = model.expectation(rewards + discount * values)
        updated = q.max(axis=0)
        residual = float(np.abs(updated - values).max())
        values = updated
        if residual < tolerance:
            return q.reshape(N_ACTIONS, -1).T, iteration
    raise LexRankConvergenceError(f"Value iteration did not converge (residual {residual:.3g})",
                                  residual=residual, iterations=max_iters)


@dataclass
class BirlDiagnostics:
    """ Chain summary of a BIRL run. """

    theta_z: float
    theta_w: float
    mean_log_theta: List[float]
    acceptance_rate: float
    samples: List[List[float]]
    log_posterior: List[float] = field(repr=False)
    value_iterations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {"theta_z": self.theta_z, "theta_w": self.theta_w, "mean_log_theta": self.mean_log_theta,
                "acceptance_rate": self.acceptance_rate, "samples": self.samples,
                "log_posterior": self.log_posterior, "value_iterations": self.value_iterations}


class BirlSampler:
    """ Metropolis-Hastings over (log theta_z, log theta_w) with a Boltzmann demonstration likelihood.

    Attributes:
    ----------
    _config: BirlConfig
        Chain settings
    _transitions: TransitionModel
        Discretized dynamics Q* is planned on
    _logger: Logger
        Logger of the class
    """

    def __init__(self,
                 config: Optional[BirlConfig] = None,
                 dynamics: Optional[CancerDynamics] = None,
                 grid: Optional[StateGrid] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        self._config = config or BirlConfig()
        self._transitions = TransitionModel(grid or StateGrid(), dynamics)
        self._setup_logging(logging_level)
        self._values: Optional[np.ndarray] = None
        self._value_iterations = 0

    def _setup_logging(self, logging_level: Union[int, str]) -> None:
        self._logger = logging.getLogger(__name__)
        self._logger.setLevel(logging_level)

    def _action_counts(self, demos: Sequence[Trajectory]) -> np.ndarray:
        grid = self._transitions.grid
        counts = np.zeros((grid.n_states, N_ACTIONS))
        for demo in demos:
            np.add.at(counts, (grid.index(demo.z, demo.w), demo.actions), 1.0)
        return counts

    def _q_values(self, log_theta: np.ndarray) -> np.ndarray:
        config, transitions = self._config, self._transitions
        family = TrajLinear(*np.exp(log_theta))
        z, w = np.meshgrid(transitions.z_centers, transitions.w_centers, indexing="ij")
        rewards = family.step_reward(z, w, config.horizon)
        q, iterations = value_iteration(transitions, rewards, config.discount, config.tolerance,
                                        config.max_value_iters, self._values)
        self._values = q.max(axis=1).reshape(rewards.shape)
        self._value_iterations += iterations
        return q

    def _log_posterior(self, log_theta: np.ndarray, counts: np.ndarray) -> float:
        config = self._config
        log_prior = -0.5 * float(np.sum((log_theta / config.prior_std) ** 2))
        if config.temperature == 0:
            return log_prior
        scaled = config.temperature * self._q_values(log_theta)
        log_likelihood = float(np.sum(counts * scaled) - np.sum(counts.sum(axis=1) * logsumexp(scaled, axis=1)))
        return log_prior + log_likelihood

    def sample(self, demos: Sequence[Trajectory]) -> Tuple[TrajLinear, BirlDiagnostics]:
        """ Run the chain and average the thinned post-burn-in samples.

        Raises:
        ------
        LexRankParamError
            No demonstrations
        LexRankConvergenceError
            Value iteration failed for some proposal
        """

        if len(demos) == 0:
            raise LexRankParamError("BIRL needs at least one demonstration")
        config = self._config
        rng = np.random.default_rng(config.seed)
        counts = self._action_counts(demos)

        current = np.zeros(2)
        current_lp = self._log_posterior(current, counts)
        chain = np.empty((config.n_samples, 2))
        trace = np.empty(config.n_samples)
        accepted = 0
        for i in range(config.n_samples):
            proposal = current + rng.normal(0.0, config.proposal_std, 2)
            proposal_lp = self._log_posterior(proposal, counts)
            if rng.random() < math.exp(min(0.0, proposal_lp - current_lp)):
                current, current_lp = proposal, proposal_lp
                accepted += 1
            chain[i], trace[i] = current, current_lp
            if (i + 1) % 1000 == 0:
                self._logger.debug(f"BIRL sample {i + 1}/{config.n_samples}: log posterior {current_lp:.4f}")

        kept = chain[config.burn_in::config.thin]
        theta = np.exp(kept).mean(axis=0)
        diagnostics = BirlDiagnostics(theta_z=float(theta[0]), theta_w=float(theta[1]),
                                      mean_log_theta=kept.mean(axis=0).tolist(),
                                      acceptance_rate=accepted / config.n_samples,
                                      samples=np.exp(kept).tolist(), log_posterior=trace.tolist(),
                                      value_iterations=self._value_iterations)
        self._logger.info(f"BIRL kept {len(kept)} samples, acceptance {diagnostics.acceptance_rate:.1%}, "
                          f"theta_z={diagnostics.theta_z:.4f}, theta_w={diagnostics.theta_w:.4f}")
        return TrajLinear(diagnostics.theta_z, diagnostics.theta_w), diagnostics


def fit_birl(demos: Sequence[Trajectory],
             config: Optional[BirlConfig] = None,
             dynamics: Optional[CancerDynamics] = None,
             grid: Optional[StateGrid] = None,
             logging_level: Union[int, str] = logging.WARNING) -> Tuple[TrajLinear, BirlDiagnostics]:
    """ Posterior-mean linear trajectory reward from demonstrations. """

    return BirlSampler(config, dynamics, grid, logging_level).sample(demos)
