""" Parameterized reward families """


import copy
import logging
import math
import typing

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from numpy.typing import ArrayLike

from scipy.special import expit

from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankParamError


logger = logging.getLogger(__name__)

FEATURE = "feature"
TRAJECTORY = "trajectory"

# Columns of the trajectory design matrix
MEAN_Z, MEAN_W, AGE = 0, 1, 2

DEFAULT_SOFTMIN_BETA = 10.0
WBC_THRESHOLD = 5.0

EFFICACY_FIRST = "efficacy-first"
TOXICITY_FIRST = "toxicity-first"


@dataclass(eq=False)
class Trajectory:
    """ Treatment rollout (a_{1:tau}, z_{1:tau}, w_{1:tau}) with optional patient age.

    Attributes:
    ----------
    actions: np.ndarray
        Binary treatment decisions, one per step
    z: np.ndarray
        Tumor volume at each step
    w: np.ndarray
        White-blood-cell count at each step
    age: float, optional
        Patient age in years (default is None)
    """

    actions: np.ndarray
    z: np.ndarray
    w: np.ndarray
    age: Optional[float] = None

    def __post_init__(self) -> None:
        self.actions = np.asarray(self.actions, dtype=int)
        self.z = np.asarray(self.z, dtype=float)
        self.w = np.asarray(self.w, dtype=float)

        if self.actions.ndim != 1 or self.z.ndim != 1 or self.w.ndim != 1:
            raise LexRankParamError("Trajectory sequences must be one-dimensional")
        if not (len(self.actions) == len(self.z) == len(self.w)) or len(self.actions) < 1:
            raise LexRankParamError(f"Trajectory sequences must share a length >= 1 "
                                    f"[actions: {len(self.actions)}, z: {len(self.z)}, w: {len(self.w)}]")
        if not np.isin(self.actions, (0, 1)).all():
            raise LexRankParamError("Trajectory actions must be binary")
        if not (np.isfinite(self.z).all() and np.isfinite(self.w).all()):
            raise LexRankParamError("Trajectory states must be finite")
        if self.age is not None:
            self.age = float(self.age)
            if not math.isfinite(self.age):
                raise LexRankParamError("Trajectory age must be finite")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def summary(self) -> np.ndarray:
        """ Return the design row [mean z, mean w, age] (age is NaN when unknown). """

        age = np.nan if self.age is None else self.age
        return np.array([self.z.mean(), self.w.mean(), age])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.actions, other.actions)
                and np.array_equal(self.z, other.z)
                and np.array_equal(self.w, other.w)
                and self.age == other.age)


Alternative = Union[Trajectory, np.ndarray, Sequence[float]]


def alternative_kind(x: Alternative) -> str:
    """ Return FEATURE or TRAJECTORY for an alternative. """

    return TRAJECTORY if isinstance(x, Trajectory) else FEATURE


def design_matrix(alternatives: Sequence[Alternative], kind: Optional[str] = None) -> np.ndarray:
    """ Stack alternatives into the matrix reward families evaluate on.

    Feature vectors are stacked as rows; trajectories are summarized by
    Trajectory.summary().

    Parameters:
    ----------
    alternatives: Sequence[Alternative]
        Alternatives of a single kind
    kind: str, optional
        Expected kind (default is the kind of the first alternative)

    Returns:
    -------
    np.ndarray
        Matrix with one row per alternative

    Raises:
    ------
    LexRankParamError
        Mixed or unexpected alternative kinds
    """

    if len(alternatives) == 0:
        return np.zeros((0, 3 if kind == TRAJECTORY else 0))

    kind = kind or alternative_kind(alternatives[0])
    for x in alternatives:
        if alternative_kind(x) != kind:
            raise LexRankParamError(f"Expected '{kind}' alternatives, found '{alternative_kind(x)}'")

    if kind == TRAJECTORY:
        return np.vstack([typing.cast(Trajectory, x).summary() for x in alternatives])

    try:
        matrix = np.vstack([np.asarray(x, dtype=float) for x in alternatives])
    except ValueError as e:
        raise LexRankParamError("Feature vectors must share a dimension") from e
    if matrix.ndim != 2:
        raise LexRankParamError("Feature vectors must be one-dimensional")
    return matrix


def softmin(a, b, beta: float = DEFAULT_SOFTMIN_BETA):
    """ Smooth two-argument minimum -(1/beta) * log(exp(-beta a) + exp(-beta b)).

    Parameters:
    ----------
    a, b: float or np.ndarray
        Arguments (broadcast together)
    beta: float
        Positive sharpness; softmin tends to min(a, b) as beta grows

    Returns:
    -------
    float or np.ndarray
        Value never above min(a, b) and within log(2)/beta of it

    Raises:
    ------
    LexRankParamError
        beta is not a positive finite number
    """

    if not (math.isfinite(beta) and beta > 0):
        raise LexRankParamError(f"softmin beta must be positive, got {beta}")

    value = -np.logaddexp(-beta * np.asarray(a, dtype=float), -beta * np.asarray(b, dtype=float)) / beta
    return float(value) if np.ndim(value) == 0 else value


def _softmin_weights(a, b, beta: float):
    """ Partial derivatives of softmin with respect to a and b (they sum to one). """

    return expit(beta * (b - a)), expit(beta * (a - b))


class RewardFamily(ABC):
    """ Reward functional form with a vector of unconstrained parameters.

    Positivity-constrained quantities are stored as logarithms, so every
    coordinate of `params` is free. Subclasses evaluate on the design matrix
    built by design_matrix().

    Attributes:
    ----------
    kind: str
        FEATURE or TRAJECTORY
    name: str
        Registry key used by to_dict()/family_from_dict()
    _params: np.ndarray
        Unconstrained parameter coordinates

    Methods:
    --------
    evaluate_batch(F)
        Rewards of every row of F
    grad_batch(F)
        Gradient of every reward with respect to the unconstrained parameters
    step_reward(z, w, horizon)
        Per-step reward signal used by tabular learners
    with_params(params)
        Copy of the family with new unconstrained parameters
    initial()
        Copy with every unconstrained coordinate set to zero
    """

    kind: str = FEATURE
    name: str = ""

    _params: np.ndarray

    @property
    def params(self) -> np.ndarray:
        return self._params.copy()

    @property
    def n_params(self) -> int:
        return len(self._params)

    def with_params(self, params: ArrayLike) -> "RewardFamily":
        """ Return a copy of this family with the given unconstrained parameters.

        Raises:
        ------
        LexRankParamError
            Wrong number of parameters or non-finite values
        """

        params = np.asarray(params, dtype=float).reshape(-1)
        if len(params) != self.n_params:
            raise LexRankParamError(f"{self.name} expects {self.n_params} parameters, got {len(params)}")
        if not np.isfinite(params).all():
            raise LexRankParamError(f"{self.name} parameters must be finite")
        family = copy.copy(self)
        family._params = params.copy()
        return family

    def initial(self) -> "RewardFamily":
        return self.with_params(np.zeros(self.n_params))

    @abstractmethod
    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        """ Return the reward of every row of the design matrix F. """

        pass

    @abstractmethod
    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        """ Return the (rows, n_params) gradient of the rewards in unconstrained coordinates. """

        pass

    def step_reward(self, z: np.ndarray, w: np.ndarray, horizon: int) -> np.ndarray:
        """ Per-step reward whose sum over a rollout approximates the trajectory reward.

        Raises:
        ------
        LexRankParamError
            The family has no per-step decomposition
        """

        raise LexRankParamError(f"{self.name} rewards have no per-step decomposition")

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """ Return the natural (constrained) parameters. """

        pass

    def to_dict(self) -> Dict[str, Any]:
        """ Natural parameters plus the exact unconstrained coordinates. """

        return {"family": self.name, **self.describe(), "params": self._params.tolist()}

    def __repr__(self) -> str:
        fields = ", ".join(f"{key}={value!r}" for key, value in self.describe().items())
        return f"{self.__class__.__name__}({fields})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RewardFamily):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise LexRankParamError(f"{name} must be strictly positive, got {value}")
    return value


def _check_trajectory_columns(F: np.ndarray) -> None:
    if F.ndim != 2 or F.shape[1] < 2:
        raise LexRankParamError("Trajectory rewards need a [mean z, mean w, age] design matrix")


class Linear(RewardFamily):
    """ r(x) = theta . x over feature vectors.

    With positive=True the weights are stored as log(theta), so they stay
    strictly positive and start at one from the zero initialization.
    """

    kind = FEATURE
    name = "linear"

    def __init__(self, theta: ArrayLike, positive: bool = False) -> None:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if len(theta) < 1 or not np.isfinite(theta).all():
            raise LexRankParamError("Linear weights must be a nonempty finite vector")
        self.positive = bool(positive)
        if self.positive:
            if (theta <= 0).any():
                raise LexRankParamError("Positive linear weights must be strictly positive")
            self._params = np.log(theta)
        else:
            self._params = theta.copy()

    @classmethod
    def zeros(cls, dim: int, positive: bool = False) -> "Linear":
        """ Return the zero-initialized family of a given dimension. """

        return typing.cast(Linear, cls(np.ones(dim), positive).initial())

    @property
    def theta(self) -> np.ndarray:
        return np.exp(self._params) if self.positive else self._params.copy()

    def _check(self, F: np.ndarray) -> None:
        if F.ndim != 2 or F.shape[1] != self.n_params:
            raise LexRankParamError(f"Linear reward of dimension {self.n_params} "
                                    f"cannot evaluate features of shape {F.shape}")

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        self._check(F)
        return F @ self.theta

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        self._check(F)
        if self.positive:
            return F * self.theta
        return F.copy()

    def describe(self) -> Dict[str, Any]:
        return {"theta": self.theta.tolist(), "positive": self.positive}


class TrajLinear(RewardFamily):
    """ r = (1/tau) sum_t (-theta_z z_t + theta_w w_t) with positive weights. """

    kind = TRAJECTORY
    name = "traj_linear"

    def __init__(self, theta_z: float = 1.0, theta_w: float = 1.0) -> None:
        self._params = np.log([_positive("theta_z", theta_z), _positive("theta_w", theta_w)])

    @property
    def theta_z(self) -> float:
        return float(np.exp(self._params[0]))

    @property
    def theta_w(self) -> float:
        return float(np.exp(self._params[1]))

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        return -self.theta_z * F[:, MEAN_Z] + self.theta_w * F[:, MEAN_W]

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        return np.column_stack([-self.theta_z * F[:, MEAN_Z], self.theta_w * F[:, MEAN_W]])

    def step_reward(self, z: np.ndarray, w: np.ndarray, horizon: int) -> np.ndarray:
        return (-self.theta_z * np.asarray(z) + self.theta_w * np.asarray(w)) / horizon

    def describe(self) -> Dict[str, Any]:
        return {"theta_z": self.theta_z, "theta_w": self.theta_w}


class TrajThresholdedLinear(RewardFamily):
    """ r = softmin{theta_max, (1/tau) sum_t (-theta_z z_t + theta_w w_t)}.

    Unconstrained coordinates are [theta_max, log theta_z, log theta_w];
    softmin_beta is a fixed hyperparameter.
    """

    kind = TRAJECTORY
    name = "traj_thresholded_linear"

    def __init__(self, theta_max: float = 0.0, theta_z: float = 1.0, theta_w: float = 1.0,
                 softmin_beta: float = DEFAULT_SOFTMIN_BETA) -> None:
        if not math.isfinite(theta_max):
            raise LexRankParamError("theta_max must be finite")
        self.softmin_beta = _positive("softmin_beta", softmin_beta)
        self._params = np.array([float(theta_max),
                                 math.log(_positive("theta_z", theta_z)),
                                 math.log(_positive("theta_w", theta_w))])

    @property
    def theta_max(self) -> float:
        return float(self._params[0])

    @property
    def theta_z(self) -> float:
        return float(np.exp(self._params[1]))

    @property
    def theta_w(self) -> float:
        return float(np.exp(self._params[2]))

    def _linear(self, mean_z, mean_w):
        return -self.theta_z * mean_z + self.theta_w * mean_w

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        return np.asarray(softmin(self.theta_max, self._linear(F[:, MEAN_Z], F[:, MEAN_W]), self.softmin_beta))

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        linear = self._linear(F[:, MEAN_Z], F[:, MEAN_W])
        w_max, w_linear = _softmin_weights(self.theta_max, linear, self.softmin_beta)
        return np.column_stack([w_max,
                                w_linear * (-self.theta_z * F[:, MEAN_Z]),
                                w_linear * (self.theta_w * F[:, MEAN_W])])

    def step_reward(self, z: np.ndarray, w: np.ndarray, horizon: int) -> np.ndarray:
        return np.asarray(softmin(self.theta_max, self._linear(np.asarray(z), np.asarray(w)),
                                  self.softmin_beta)) / horizon

    def describe(self) -> Dict[str, Any]:
        return {"theta_max": self.theta_max, "theta_z": self.theta_z, "theta_w": self.theta_w,
                "softmin_beta": self.softmin_beta}


class CancerGroundTruthWBC(RewardFamily):
    """ r = min{5, mean WBC count} (hard minimum; never differentiated). """

    kind = TRAJECTORY
    name = "cancer_wbc"

    def __init__(self) -> None:
        self._params = np.zeros(0)

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        return np.minimum(WBC_THRESHOLD, F[:, MEAN_W])

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        return np.zeros((len(F), 0))

    def step_reward(self, z: np.ndarray, w: np.ndarray, horizon: int) -> np.ndarray:
        return np.minimum(WBC_THRESHOLD, np.asarray(w, dtype=float)) / horizon

    def describe(self) -> Dict[str, Any]:
        return {}


class CancerGroundTruthTumor(RewardFamily):
    """ r = -mean tumor volume. """

    kind = TRAJECTORY
    name = "cancer_tumor"

    def __init__(self) -> None:
        self._params = np.zeros(0)

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        _check_trajectory_columns(F)
        return -F[:, MEAN_Z]

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        return np.zeros((len(F), 0))

    def step_reward(self, z: np.ndarray, w: np.ndarray, horizon: int) -> np.ndarray:
        return -np.asarray(z, dtype=float) / horizon

    def describe(self) -> Dict[str, Any]:
        return {}


class AgeGated(RewardFamily):
    """ r = g E + (1 - g) T with gate g = logistic((y - y_threshold) / y_sensitivity).

    E = -mean z and T = mean w for the efficacy-first polarity; the
    toxicity-first polarity swaps them. The threshold is stored as
    (y_threshold - age_center) / age_scale and the sensitivity as its log.
    """

    kind = TRAJECTORY
    name = "age_gated"

    def __init__(self, y_threshold: float = 40.0, y_sensitivity: float = 1.0,
                 polarity: str = EFFICACY_FIRST, age_center: float = 0.0, age_scale: float = 1.0) -> None:
        if polarity not in (EFFICACY_FIRST, TOXICITY_FIRST):
            raise LexRankParamError(f"Unknown polarity '{polarity}'")
        if not (math.isfinite(y_threshold) and math.isfinite(age_center)):
            raise LexRankParamError("y_threshold and age_center must be finite")
        self.polarity = polarity
        self.age_center = float(age_center)
        self.age_scale = _positive("age_scale", age_scale)
        self._params = np.array([(float(y_threshold) - self.age_center) / self.age_scale,
                                 math.log(_positive("y_sensitivity", y_sensitivity))])

    @property
    def y_threshold(self) -> float:
        return float(self.age_center + self.age_scale * self._params[0])

    @property
    def y_sensitivity(self) -> float:
        return float(np.exp(self._params[1]))

    def gate(self, age):
        """ Priority of the first objective at the given age(s). """

        return expit((np.asarray(age, dtype=float) - self.y_threshold) / self.y_sensitivity)

    def _objectives(self, F: np.ndarray):
        _check_trajectory_columns(F)
        if F.shape[1] <= AGE or np.isnan(F[:, AGE]).any():
            raise LexRankParamError("Age-gated rewards require trajectories with a patient age")
        efficacy, toxicity = -F[:, MEAN_Z], F[:, MEAN_W]
        if self.polarity == EFFICACY_FIRST:
            return efficacy, toxicity
        return toxicity, efficacy

    def evaluate_batch(self, F: np.ndarray) -> np.ndarray:
        first, second = self._objectives(F)
        g = self.gate(F[:, AGE])
        return g * first + (1.0 - g) * second

    def grad_batch(self, F: np.ndarray) -> np.ndarray:
        first, second = self._objectives(F)
        g = self.gate(F[:, AGE])
        slope = (first - second) * g * (1.0 - g)
        u = (F[:, AGE] - self.y_threshold) / self.y_sensitivity
        return np.column_stack([-slope * self.age_scale / self.y_sensitivity, -slope * u])

    def describe(self) -> Dict[str, Any]:
        return {"y_threshold": self.y_threshold, "y_sensitivity": self.y_sensitivity,
                "polarity": self.polarity, "age_center": self.age_center, "age_scale": self.age_scale}


_FAMILIES: Dict[str, typing.Type[RewardFamily]] = {
    cls.name: cls for cls in (Linear, TrajLinear, TrajThresholdedLinear,
                              CancerGroundTruthWBC, CancerGroundTruthTumor, AgeGated)
}


def family_from_dict(data: Dict[str, Any]) -> RewardFamily:
    """ Build a reward family from its to_dict() form.

    Raises:
    ------
    LexRankInvalidData
        Unknown family name or bad parameters
    """

    data = dict(data)
    try:
        cls = _FAMILIES[data.pop("family")]
    except KeyError as e:
        raise LexRankInvalidData(f"Unknown or missing reward family in {data}") from e
    params = data.pop("params", None)
    try:
        family = cls(**data)
        return family if params is None else family.with_params(params)
    except (TypeError, LexRankParamError) as e:
        raise LexRankInvalidData(f"Invalid parameters for reward family '{cls.name}'") from e


def _design_row(family: RewardFamily, x: Alternative) -> np.ndarray:
    kind = alternative_kind(x)
    if kind != family.kind:
        raise LexRankParamError(f"{family.name} rewards evaluate {family.kind} alternatives, got a {kind}")
    row = design_matrix([x], kind)
    if kind == FEATURE and not np.isfinite(row).all():
        raise LexRankParamError("Feature vectors must be finite")
    return row


def eval_reward(family: RewardFamily, x: Alternative) -> float:
    """ Evaluate a reward family on one alternative.

    Raises:
    ------
    LexRankParamError
        Alternative kind does not match the family
    """

    return float(family.evaluate_batch(_design_row(family, x))[0])


def reward_param_grad(family: RewardFamily, x: Alternative) -> np.ndarray:
    """ Gradient of eval_reward with respect to the family's unconstrained parameters. """

    return family.grad_batch(_design_row(family, x))[0]
