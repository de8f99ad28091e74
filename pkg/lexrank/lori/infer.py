""" Likelihoods, analytic gradients and RMSprop fitting of lexicographic reward models """


import json
import logging
import math

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from numpy.typing import ArrayLike

from scipy.special import gammaln

from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.prefmodel import LevelParams
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.prefmodel import equiv_prefix
from lexrank.lori.prefmodel import level_probs
from lexrank.lori.rewards import Alternative
from lexrank.lori.rewards import RewardFamily
from lexrank.lori.rewards import alternative_kind
from lexrank.lori.rewards import design_matrix


logger = logging.getLogger(__name__)

# Floor applied to pair probabilities inside the logarithm
PROB_FLOOR = 1e-300
# Floor applied to the RMSprop accumulator inside the square root
H_FLOOR = 1e-300


class PreferenceDataset:
    """ Alternatives plus counts n(x_star, x_circ) of observed pairwise preferences.

    Attributes:
    ----------
    alternatives: Tuple[Alternative, ...]
        Indexed store of alternatives (all of one kind)
    counts: Dict[Tuple[int, int], int]
        (star index, circ index) -> number of times star was preferred

    Methods:
    --------
    add(star, circ, count)
        Record count more observations of star preferred to circ
    pairs()
        Arrays (star, circ, n) over ordered pairs with n > 0
    total(a, b)
        N(a, b) = n(a, b) + n(b, a)
    design_matrix()
        Cached design matrix of the alternatives
    """

    def __init__(self,
                 alternatives: Sequence[Alternative],
                 counts: Optional[Mapping[Tuple[int, int], int]] = None) -> None:
        """ PreferenceDataset constructor.
        Parameters:
        ----------
        alternatives: Sequence[Alternative]
            Alternatives referenced by index
        counts: Mapping[Tuple[int, int], int], optional
            Initial preference counts (default is no preferences)

        Raises:
        -------
        LexRankInvalidData
            Invalid index, self-pair or count below one
        """

        self.alternatives: Tuple[Alternative, ...] = tuple(alternatives)
        self.counts: Dict[Tuple[int, int], int] = {}
        kinds = {alternative_kind(x) for x in self.alternatives}
        if len(kinds) > 1:
            raise LexRankInvalidData(f"Alternatives of mixed kinds {sorted(kinds)}")
        self._design: Optional[np.ndarray] = None
        for (star, circ), count in (counts or {}).items():
            self.add(star, circ, count)

    @property
    def kind(self) -> Optional[str]:
        return alternative_kind(self.alternatives[0]) if self.alternatives else None

    @property
    def n_alternatives(self) -> int:
        return len(self.alternatives)

    @property
    def n_preferences(self) -> int:
        return sum(self.counts.values())

    def is_empty(self) -> bool:
        return not self.counts

    def add(self, star: int, circ: int, count: int = 1) -> None:
        """ Record `count` observations of alternative `star` preferred to `circ`. """

        if isinstance(count, bool) or not isinstance(count, (int, np.integer)) or count < 1:
            raise LexRankInvalidData(f"Preference counts must be integers >= 1, got {count!r} for ({star}, {circ})")
        for index in (star, circ):
            if isinstance(index, bool) or not isinstance(index, (int, np.integer)) \
                    or not 0 <= index < len(self.alternatives):
                raise LexRankInvalidData(f"Alternative index {index!r} out of range [0, {len(self.alternatives)})")
        if star == circ:
            raise LexRankInvalidData(f"Self-pair ({star}, {circ}) is not a preference")
        key = (int(star), int(circ))
        self.counts[key] = self.counts.get(key, 0) + int(count)

    def count(self, star: int, circ: int) -> int:
        return self.counts.get((star, circ), 0)

    def total(self, a: int, b: int) -> int:
        return self.count(a, b) + self.count(b, a)

    def pairs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """ Return (star, circ, n) arrays over ordered pairs, sorted by index. """

        keys = sorted(self.counts)
        star = np.array([key[0] for key in keys], dtype=int)
        circ = np.array([key[1] for key in keys], dtype=int)
        n = np.array([self.counts[key] for key in keys], dtype=float)
        return star, circ, n

    def unordered_pairs(self) -> List[Tuple[int, int]]:
        return sorted({(min(a, b), max(a, b)) for a, b in self.counts})

    def design_matrix(self) -> np.ndarray:
        if self._design is None:
            self._design = design_matrix(self.alternatives, self.kind)
        return self._design

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        if self.counts != other.counts or len(self.alternatives) != len(other.alternatives):
            return False
        return all(_same_alternative(a, b) for a, b in zip(self.alternatives, other.alternatives))

    def __repr__(self) -> str:
        return (f"PreferenceDataset(alternatives={self.n_alternatives}, "
                f"pairs={len(self.counts)}, preferences={self.n_preferences})")


def _same_alternative(a: Alternative, b: Alternative) -> bool:
    if alternative_kind(a) != alternative_kind(b):
        return False
    if isinstance(a, np.ndarray) or not hasattr(a, "summary"):
        return bool(np.array_equal(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))
    return a == b


@dataclass
class FitConfig:
    """ RMSprop fitting configuration.

    Attributes:
    ----------
    learning_rate: float
        RMSprop step size eta
    rmsprop_discount: float
        Accumulator discount gamma in (0, 1)
    patience: int
        Stop when the loss exceeds the loss `patience` iterations earlier
    max_iters: int
        Hard iteration cap
    learn_alpha, learn_epsilon: bool
        Optimize log alpha / log epsilon alongside the reward parameters
    fixed_alpha, fixed_epsilon: float
        Values used for a level parameter that is not learned
    seed: int
        Seed for random restarts
    restarts: int
        Extra random initializations (0 keeps the zero initialization only)
    restart_scale: float
        Standard deviation of restart initializations
    """

    learning_rate: float = 0.001
    rmsprop_discount: float = 0.9
    patience: int = 10
    max_iters: int = 50000
    learn_alpha: bool = False
    learn_epsilon: bool = True
    fixed_alpha: float = 1.0
    fixed_epsilon: float = 0.0
    seed: int = 0
    restarts: int = 0
    restart_scale: float = 0.5

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise LexRankParamError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.rmsprop_discount < 1:
            raise LexRankParamError(f"rmsprop_discount must lie in (0, 1), got {self.rmsprop_discount}")
        if self.patience < 1 or self.max_iters < 1:
            raise LexRankParamError("patience and max_iters must be positive")
        if self.restarts < 0 or not self.restart_scale >= 0:
            raise LexRankParamError("restarts and restart_scale must be nonnegative")
        LevelParams(self.fixed_alpha, self.fixed_epsilon)


@dataclass
class OptimizerState:
    """ RMSprop squared-gradient accumulators, iteration counter and loss history. """

    H: np.ndarray
    iteration: int = 0
    loss_history: List[float] = field(default_factory=list)

    @classmethod
    def zeros(cls, n_params: int) -> "OptimizerState":
        return cls(H=np.zeros(n_params))


def rmsprop_step(state: OptimizerState,
                 params: np.ndarray,
                 grads: np.ndarray,
                 config: FitConfig) -> Tuple[np.ndarray, OptimizerState]:
    """ One RMSprop update: every accumulator first, then every parameter.

    Parameters:
    ----------
    state: OptimizerState
        Accumulators H (left untouched; a new state is returned)
    params: np.ndarray
        Current parameters phi
    grads: np.ndarray
        Gradients G at phi
    config: FitConfig
        Learning rate and discount

    Returns:
    -------
    Tuple[np.ndarray, OptimizerState]
        Updated parameters and optimizer state
    """

    grads = np.asarray(grads, dtype=float)
    params = np.asarray(params, dtype=float)
    if grads.shape != params.shape or state.H.shape != params.shape:
        raise LexRankParamError(f"Shape mismatch [params: {params.shape}, grads: {grads.shape}, H: {state.H.shape}]")

    gamma = config.rmsprop_discount
    H = gamma * state.H + (1.0 - gamma) * grads ** 2
    new_params = params - config.learning_rate * grads / np.sqrt(np.maximum(H, H_FLOOR))
    return new_params, replace(state, H=H, iteration=state.iteration + 1,
                               loss_history=list(state.loss_history))


@dataclass
class ModelGradient:
    """ Gradient of the negative log-likelihood per level.

    theta holds one array per level in the family's unconstrained
    coordinates; alpha and epsilon are derivatives in natural units.
    """

    theta: List[np.ndarray]
    alpha: np.ndarray
    epsilon: np.ndarray


@dataclass
class _PairTerms:
    star: np.ndarray
    circ: np.ndarray
    n: np.ndarray
    diffs: np.ndarray
    p_succ: np.ndarray
    p_prec: np.ndarray
    p_equiv: np.ndarray
    prefix: np.ndarray
    prob: np.ndarray


def _pair_terms(model: LexRewardModel, data: PreferenceDataset) -> _PairTerms:
    star, circ, n = data.pairs()
    rewards = model.rewards_from_design(data.design_matrix())
    diffs = rewards[star] - rewards[circ]
    p_succ, p_prec, p_equiv = level_probs(diffs, model.alphas, model.epsilons)
    prefix = equiv_prefix(p_equiv)
    prob = np.clip((p_succ * prefix).sum(axis=1), 0.0, 1.0)
    return _PairTerms(star, circ, n, diffs, p_succ, p_prec, p_equiv, prefix, prob)


def _check_dataset(model: LexRewardModel, data: PreferenceDataset) -> None:
    if data.kind is not None and data.kind != model.kind:
        raise LexRankParamError(f"Model evaluates {model.kind} alternatives but the dataset holds {data.kind}")


def _nll_from_terms(terms: _PairTerms) -> Tuple[float, int]:
    underflow = int((terms.prob < PROB_FLOOR).sum())
    loss = -float(np.sum(terms.n * np.log(np.maximum(terms.prob, PROB_FLOOR))))
    return loss, underflow


def neg_log_likelihood(model: LexRewardModel, data: PreferenceDataset) -> float:
    """ lambda = -sum over ordered pairs of n(x_star, x_circ) log Pr(x_star > x_circ).

    Probabilities below PROB_FLOOR are clamped. An empty dataset gives 0.
    """

    _check_dataset(model, data)
    if data.is_empty():
        return 0.0
    return _nll_from_terms(_pair_terms(model, data))[0]


def log_binomial(N, n):
    return gammaln(np.asarray(N, dtype=float) + 1) - gammaln(np.asarray(n, dtype=float) + 1) \
        - gammaln(np.asarray(N, dtype=float) - np.asarray(n, dtype=float) + 1)


def log_binomial_total(data: PreferenceDataset) -> float:
    """ sum over unordered pairs {a, b} of log C(N(a, b), n(a, b)). """

    pairs = data.unordered_pairs()
    if not pairs:
        return 0.0
    N = np.array([data.total(a, b) for a, b in pairs])
    n = np.array([data.count(a, b) for a, b in pairs])
    return float(np.sum(log_binomial(N, n)))


def full_log_likelihood(model: LexRewardModel, data: PreferenceDataset) -> float:
    """ Log-likelihood including binomial coefficients; for diagnostics only. """

    return -neg_log_likelihood(model, data) + log_binomial_total(data)


def _later_level_weights(terms: _PairTerms) -> np.ndarray:
    """ Column l holds sum_{i>l} p_succ_i prod_{j<i, j!=l} p_equiv_j (O(k^2) per pair). """

    k = terms.p_succ.shape[1]
    weights = np.zeros_like(terms.p_succ)
    for level in range(k):
        running = terms.prefix[:, level].copy()
        for i in range(level + 1, k):
            weights[:, level] += terms.p_succ[:, i] * running
            running *= terms.p_equiv[:, i]
    return weights


def _gradients_from_terms(model: LexRewardModel, data: PreferenceDataset, terms: _PairTerms) -> ModelGradient:
    alphas, epsilons = model.alphas, model.epsilons
    ps, pp = terms.p_succ, terms.p_prec
    slope_succ = ps * (1.0 - ps)
    slope_prec = pp * (1.0 - pp)

    later = _later_level_weights(terms)
    outer = -terms.n / np.maximum(terms.prob, PROB_FLOOR)

    def chain(d_succ: np.ndarray, d_prec: np.ndarray) -> np.ndarray:
        # d Pr / d x for a per-level inner derivative of p_succ and p_prec
        return terms.prefix * d_succ + later * (-(d_succ + d_prec))

    d_diff = chain(alphas * slope_succ, -alphas * slope_prec)
    d_alpha = chain((terms.diffs - epsilons) * slope_succ, (-terms.diffs - epsilons) * slope_prec)
    d_epsilon = chain(-alphas * slope_succ, -alphas * slope_prec)

    F = data.design_matrix()
    m = data.n_alternatives
    theta: List[np.ndarray] = []
    for level, family in enumerate(model.families):
        if family.n_params == 0:
            theta.append(np.zeros(0))
            continue
        pair_coef = outer * d_diff[:, level]
        alt_coef = np.bincount(terms.star, pair_coef, m) - np.bincount(terms.circ, pair_coef, m)
        theta.append(alt_coef @ family.grad_batch(F))

    return ModelGradient(theta=theta,
                         alpha=outer @ d_alpha,
                         epsilon=outer @ d_epsilon)


def nll_gradients(model: LexRewardModel, data: PreferenceDataset) -> ModelGradient:
    """ Analytic gradient of neg_log_likelihood.

    Each pair contributes n / Pr times d Pr, where level l enters through
    p_succ_l (weighted by the product of earlier equivalences) and through
    p_equiv_l (weighted by every later level that it gates).

    Parameters:
    ----------
    model: LexRewardModel
        Model at which to differentiate
    data: PreferenceDataset
        Observed preferences

    Returns:
    -------
    ModelGradient
        Derivatives for reward parameters (unconstrained), alpha and epsilon
    """

    _check_dataset(model, data)
    if data.is_empty():
        return ModelGradient(theta=[np.zeros(family.n_params) for family in model.families],
                             alpha=np.zeros(model.k), epsilon=np.zeros(model.k))
    return _gradients_from_terms(model, data, _pair_terms(model, data))


class ParameterLayout:
    """ Maps a flat vector of unconstrained coordinates to a LexRewardModel.

    Per level the vector holds the family parameters, then log alpha and
    log epsilon when those are learned.
    """

    def __init__(self, families: Sequence[RewardFamily], config: FitConfig) -> None:
        self.families = list(families)
        self.learn_alpha = config.learn_alpha
        self.learn_epsilon = config.learn_epsilon
        self.fixed = LevelParams(float(config.fixed_alpha), float(config.fixed_epsilon))
        self.slices: List[slice] = []
        offset = 0
        for family in self.families:
            width = family.n_params + int(self.learn_alpha) + int(self.learn_epsilon)
            self.slices.append(slice(offset, offset + width))
            offset += width
        self.size = offset

    def unpack(self, phi: np.ndarray) -> LexRewardModel:
        levels = []
        for family, part in zip(self.families, self.slices):
            values = phi[part]
            p = family.n_params
            alpha = float(np.exp(values[p])) if self.learn_alpha else self.fixed.alpha
            epsilon = float(np.exp(values[-1])) if self.learn_epsilon else self.fixed.epsilon
            levels.append((family.with_params(values[:p]), LevelParams(alpha, epsilon)))
        return LexRewardModel(levels)

    def flatten(self, model: LexRewardModel, gradient: ModelGradient) -> np.ndarray:
        """ Gradient with respect to the flat unconstrained coordinates. """

        out = np.zeros(self.size)
        for level, part in enumerate(self.slices):
            block = [gradient.theta[level]]
            if self.learn_alpha:
                block.append(np.array([model.alphas[level] * gradient.alpha[level]]))
            if self.learn_epsilon:
                block.append(np.array([model.epsilons[level] * gradient.epsilon[level]]))
            out[part] = np.concatenate(block)
        return out


@dataclass
class FitReport:
    """ Outcome of a gradient fit; serializes to JSON. """

    method: str
    k: int
    seed: int
    iterations: int
    stop_reason: str
    initial_loss: float
    final_loss: float
    underflow_count: int
    underflow_iterations: int
    loss_trace: List[float]
    final_params: Dict[str, Any]
    restarts: int = 0

    @property
    def converged(self) -> bool:
        return self.stop_reason == "patience"

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "converged": self.converged}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitReport":
        data = {key: value for key, value in data.items() if key != "converged"}
        try:
            return cls(**data)
        except TypeError as e:
            raise LexRankInvalidData("Malformed fit report") from e


class RewardFitter(ABC):
    """ Full-batch RMSprop maximum-likelihood fit of a lexicographic reward model.

    Attributes:
    ----------
    _config: FitConfig
        Optimizer and stopping configuration
    _logger: Logger
        Logger of the class

    Methods:
    --------
    _setup_logging(logging_level)
        Defines the logger of the class
    _fit_config()
        Effective configuration (subclasses may freeze parameters)
    _templates(data)
        Reward families of every level, before zero initialization
    fit(data)
        Run the descent (plus restarts) and return the model and report
    """

    method = ""

    def __init__(self, config: Optional[FitConfig] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        self._config = config or FitConfig()
        self._setup_logging(logging_level)

    def _setup_logging(self, logging_level: Union[int, str]) -> None:
        self._logger = logging.getLogger(__name__)
        self._logger.setLevel(logging_level)

    def _fit_config(self) -> FitConfig:
        return self._config

    @abstractmethod
    def _templates(self, data: PreferenceDataset) -> List[RewardFamily]:
        """ Reward families of every level. """

        pass

    def _evaluate(self, layout: ParameterLayout, data: PreferenceDataset,
                  phi: np.ndarray) -> Tuple[float, np.ndarray, int]:
        model = layout.unpack(phi)
        terms = _pair_terms(model, data)
        loss, underflow = _nll_from_terms(terms)
        grads = layout.flatten(model, _gradients_from_terms(model, data, terms))
        return loss, grads, underflow

    def _descend(self, layout: ParameterLayout, data: PreferenceDataset,
                 phi: np.ndarray) -> Tuple[np.ndarray, List[float], str, int, int]:
        config = self._fit_config()
        state = OptimizerState.zeros(layout.size)
        loss, grads, underflow = self._evaluate(layout, data, phi)
        history = [loss]
        underflow_iterations = int(underflow > 0)
        stop_reason = "max_iters"

        for t in range(1, config.max_iters + 1):
            phi, state = rmsprop_step(state, phi, grads, config)
            loss, grads, underflow = self._evaluate(layout, data, phi)
            history.append(loss)
            underflow_iterations += int(underflow > 0)
            if t % 1000 == 0:
                self._logger.debug(f"{self.method} iteration {t}: loss {loss:.6f}")
            if t >= config.patience and loss > history[t - config.patience]:
                stop_reason = "patience"
                break

        return phi, history, stop_reason, underflow, underflow_iterations

    def fit(self, data: PreferenceDataset) -> Tuple[LexRewardModel, FitReport]:
        """ Fit the model to a preference dataset.
        Parameters:
        ----------
        data: PreferenceDataset
            Observed preferences (nonempty)

        Returns:
        -------
        Tuple[LexRewardModel, FitReport]
            Fitted model and fit diagnostics

        Raises:
        ------
        LexRankParamError
            Empty dataset or reward families incompatible with the data
        """

        if data.is_empty():
            raise LexRankParamError(f"{self.method} needs a nonempty preference dataset")

        config = self._fit_config()
        layout = ParameterLayout([family.initial() for family in self._templates(data)], config)
        rng = np.random.default_rng(config.seed)
        starts = [np.zeros(layout.size)]
        starts += [rng.normal(0.0, config.restart_scale, layout.size) for _ in range(config.restarts)]

        self._logger.info(f"Fitting {self.method} (k={len(layout.families)}, {layout.size} free parameters) "
                          f"on {data.n_preferences} preferences over {len(data.counts)} pairs")

        best = None
        for restart, phi0 in enumerate(starts):
            phi, history, stop_reason, underflow, underflow_iterations = self._descend(layout, data, phi0)
            self._logger.info(f"{self.method} start {restart}: {len(history) - 1} iterations, "
                              f"loss {history[0]:.6f} -> {history[-1]:.6f} ({stop_reason})")
            if stop_reason == "max_iters":
                self._logger.warning(f"{self.method} start {restart} reached max_iters={config.max_iters}")
            if best is None or history[-1] < best[1][-1]:
                best = (phi, history, stop_reason, underflow, underflow_iterations)

        assert best is not None
        phi, history, stop_reason, underflow, underflow_iterations = best
        if underflow:
            self._logger.warning(f"{underflow} pair probabilities clamped at {PROB_FLOOR}")
        model = layout.unpack(phi)
        report = FitReport(method=self.method, k=model.k, seed=config.seed,
                           iterations=len(history) - 1, stop_reason=stop_reason,
                           initial_loss=history[0], final_loss=history[-1],
                           underflow_count=underflow, underflow_iterations=underflow_iterations,
                           loss_trace=[float(value) for value in history],
                           final_params=model.to_dict(), restarts=config.restarts)
        return model, report


class LoriFitter(RewardFitter):
    """ k lexicographically ordered rewards with learned indifference widths. """

    method = "lori"

    def __init__(self, k: int,
                 family_template: Union[RewardFamily, Sequence[RewardFamily]],
                 config: Optional[FitConfig] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        super().__init__(config, logging_level)
        if isinstance(family_template, RewardFamily):
            family_template = [family_template] * k
        self._family_templates = list(family_template)
        if k < 1 or len(self._family_templates) != k:
            raise LexRankParamError(f"LORI needs k >= 1 templates, got k={k} "
                                    f"and {len(self._family_templates)} templates")

    def _templates(self, data: PreferenceDataset) -> List[RewardFamily]:
        for family in self._family_templates:
            if data.kind is not None and family.kind != data.kind:
                raise LexRankParamError(f"{family.name} evaluates {family.kind} alternatives, data holds {data.kind}")
        return self._family_templates


class TrexFitter(LoriFitter):
    """ Single logistic reward: k = 1 with alpha frozen at 1 and epsilon at 0. """

    method = "trex"

    def __init__(self, family_template: RewardFamily,
                 config: Optional[FitConfig] = None,
                 logging_level: Union[int, str] = logging.WARNING) -> None:
        super().__init__(1, family_template, config, logging_level)

    def _fit_config(self) -> FitConfig:
        return replace(self._config, learn_alpha=False, learn_epsilon=False, fixed_alpha=1.0, fixed_epsilon=0.0)


def fit_lori(data: PreferenceDataset,
             k: int,
             family_template: Union[RewardFamily, Sequence[RewardFamily]],
             config: Optional[FitConfig] = None,
             logging_level: Union[int, str] = logging.WARNING) -> Tuple[LexRewardModel, FitReport]:
    """ Infer k lexicographically ordered reward functions from preferences. """

    return LoriFitter(k, family_template, config, logging_level).fit(data)


def fit_trex(data: PreferenceDataset,
             family_template: RewardFamily,
             config: Optional[FitConfig] = None,
             logging_level: Union[int, str] = logging.WARNING) -> Tuple[LexRewardModel, FitReport]:
    """ Infer a single reward function under the logistic preference model. """

    return TrexFitter(family_template, config, logging_level).fit(data)


def direction_cosine(a: ArrayLike, b: ArrayLike) -> float:
    """ Cosine of the angle between two weight vectors. """

    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0 or not math.isfinite(norm):
        return 0.0
    return float(a @ b) / norm

