""" Stochastic lexicographic preference model """


import enum
import logging
import math
import typing

from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from numpy.typing import ArrayLike

from scipy.special import expit

from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.rewards import Alternative
from lexrank.lori.rewards import RewardFamily
from lexrank.lori.rewards import design_matrix
from lexrank.lori.rewards import family_from_dict


logger = logging.getLogger(__name__)

# Running products of equivalence probabilities below this are treated as zero
EQUIV_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class LevelParams:
    """ Consistency scale alpha and indifference width epsilon of one level. """

    alpha: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        for name in ("alpha", "epsilon"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise LexRankParamError(f"{name} must be a finite nonnegative number, got {value!r}")


class ComparisonTriple(NamedTuple):
    """ Probabilities of significantly better, significantly worse and equivalent. """

    p_succ: float
    p_prec: float
    p_equiv: float


class PreferenceLabel(enum.Enum):
    STAR_PREFERRED = "star_preferred"
    CIRC_PREFERRED = "circ_preferred"


class LexRewardModel:
    """ Ordered levels of (reward family, level parameters); level 0 has the highest priority.

    Attributes:
    ----------
    levels: List[Tuple[RewardFamily, LevelParams]]
        Reward family and (alpha, epsilon) per priority level

    Methods:
    --------
    reward_vector(x)
        Rewards of one alternative, one per level
    reward_matrix(alternatives)
        (n_alternatives, k) rewards of a pool
    to_dict() / from_dict(data)
        JSON-ready representation with explicit level order
    """

    def __init__(self, levels: Sequence[Tuple[RewardFamily, LevelParams]]) -> None:
        """ LexRewardModel constructor.
        Parameters:
        ----------
        levels: Sequence[Tuple[RewardFamily, LevelParams]]
            At least one (family, params) pair, highest priority first

        Raises:
        -------
        LexRankParamError
            No levels, or levels evaluating different alternative kinds
        """

        self.levels: List[Tuple[RewardFamily, LevelParams]] = [(family, params) for family, params in levels]
        if not self.levels:
            raise LexRankParamError("A lexicographic model needs at least one level")
        kinds = {family.kind for family, _ in self.levels}
        if len(kinds) != 1:
            raise LexRankParamError(f"All levels must evaluate the same alternative kind, got {sorted(kinds)}")
        for family, params in self.levels:
            if not isinstance(family, RewardFamily) or not isinstance(params, LevelParams):
                raise LexRankParamError("Levels must be (RewardFamily, LevelParams) pairs")

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def kind(self) -> str:
        return self.levels[0][0].kind

    @property
    def families(self) -> List[RewardFamily]:
        return [family for family, _ in self.levels]

    @property
    def alphas(self) -> np.ndarray:
        return np.array([params.alpha for _, params in self.levels])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([params.epsilon for _, params in self.levels])

    def rewards_from_design(self, F: np.ndarray) -> np.ndarray:
        """ Return the (rows, k) reward matrix of a design matrix. """

        return np.column_stack([family.evaluate_batch(F) for family in self.families])

    def reward_matrix(self, alternatives: Sequence[Alternative]) -> np.ndarray:
        return self.rewards_from_design(design_matrix(alternatives, self.kind))

    def reward_vector(self, x: Alternative) -> np.ndarray:
        return self.reward_matrix([x])[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"levels": [{"priority": i + 1,
                            "reward": family.to_dict(),
                            "alpha": params.alpha,
                            "epsilon": params.epsilon}
                           for i, (family, params) in enumerate(self.levels)]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LexRewardModel":
        """ Rebuild a model from to_dict() output, ordering levels by priority.

        Raises:
        ------
        LexRankInvalidData
            Missing fields or invalid level parameters
        """

        try:
            levels = sorted(data["levels"], key=lambda level: level["priority"])
            return cls([(family_from_dict(level["reward"]),
                         LevelParams(float(level["alpha"]), float(level["epsilon"])))
                        for level in levels])
        except (KeyError, TypeError, ValueError, LexRankParamError) as e:
            raise LexRankInvalidData("Malformed lexicographic model description") from e

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LexRewardModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"LexRewardModel(k={self.k}, levels={self.levels!r})"


def logistic(u):
    """ 1 / (1 + exp(-u)) without overflow for large |u|. """

    value = expit(u)
    return float(value) if np.ndim(value) == 0 else value


def level_probs(diffs: np.ndarray,
                alphas: np.ndarray,
                epsilons: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ Per-level comparison probabilities for many pairs at once.

    Parameters:
    ----------
    diffs: np.ndarray
        (pairs, k) reward differences r_i(x_star) - r_i(x_circ)
    alphas, epsilons: np.ndarray
        (k,) level parameters

    Returns:
    -------
    Tuple[np.ndarray, np.ndarray, np.ndarray]
        p_succ, p_prec, p_equiv with the shape of diffs
    """

    diffs = np.asarray(diffs, dtype=float)
    p_succ = expit(alphas * (diffs - epsilons))
    p_prec = expit(alphas * (-diffs - epsilons))
    p_equiv = np.clip(1.0 - p_succ - p_prec, 0.0, 1.0)
    return p_succ, p_prec, p_equiv


def equiv_prefix(p_equiv: np.ndarray) -> np.ndarray:
    """ Column i holds prod_{j<i} p_equiv_j; products that underflow are set to zero. """

    prefix = np.ones_like(p_equiv)
    if p_equiv.shape[1] > 1:
        prefix[:, 1:] = np.cumprod(p_equiv[:, :-1], axis=1)
    prefix[prefix < EQUIV_UNDERFLOW] = 0.0
    return prefix


def lex_pref_prob_from_diffs(diffs: np.ndarray, alphas: np.ndarray, epsilons: np.ndarray) -> np.ndarray:
    """ sum_i p_succ_i prod_{j<i} p_equiv_j for every row of diffs. """

    p_succ, _, p_equiv = level_probs(diffs, alphas, epsilons)
    return np.clip((p_succ * equiv_prefix(p_equiv)).sum(axis=1), 0.0, 1.0)


def _split_residual(p_star: np.ndarray, p_circ: np.ndarray) -> np.ndarray:
    # Computed from the larger side so that swapped arguments sum to one exactly
    u = p_star - p_circ
    high = 0.5 + 0.5 * np.abs(u)
    return np.where(u >= 0, high, 1.0 - high)


def tiebreak_from_diffs(diffs: np.ndarray, alphas: np.ndarray, epsilons: np.ndarray) -> np.ndarray:
    """ Preference probability with the residual tie mass split evenly. """

    diffs = np.asarray(diffs, dtype=float)
    return _split_residual(lex_pref_prob_from_diffs(diffs, alphas, epsilons),
                           lex_pref_prob_from_diffs(-diffs, alphas, epsilons))


def component_probs(reward_diff: float, params: LevelParams) -> ComparisonTriple:
    """ Comparison probabilities of one level for a reward difference.

    Parameters:
    ----------
    reward_diff: float
        r_i(x_star) - r_i(x_circ)
    params: LevelParams
        alpha and epsilon of the level

    Returns:
    -------
    ComparisonTriple
        Probabilities summing to one

    Raises:
    ------
    LexRankParamError
        Non-finite reward difference
    """

    if not math.isfinite(reward_diff):
        raise LexRankParamError(f"Reward difference must be finite, got {reward_diff}")
    p_succ, p_prec, p_equiv = level_probs(np.array([[reward_diff]]),
                                          np.array([params.alpha]), np.array([params.epsilon]))
    return ComparisonTriple(float(p_succ[0, 0]), float(p_prec[0, 0]), float(p_equiv[0, 0]))


def _pair_diffs(model: LexRewardModel, x_star: Alternative, x_circ: Alternative) -> np.ndarray:
    rewards = model.reward_matrix([x_star, x_circ])
    diffs = rewards[0] - rewards[1]
    if not np.isfinite(diffs).all():
        raise LexRankParamError("Reward evaluation produced non-finite values")
    return diffs.reshape(1, -1)


def lex_pref_prob(model: LexRewardModel, x_star: Alternative, x_circ: Alternative) -> float:
    """ Probability that x_star is observed preferred to x_circ (no tie-break). """

    return float(lex_pref_prob_from_diffs(_pair_diffs(model, x_star, x_circ), model.alphas, model.epsilons)[0])


def pref_prob_tiebreak(model: LexRewardModel, x_star: Alternative, x_circ: Alternative) -> float:
    """ Probability that x_star wins when ties are broken by a fair coin.

    pref_prob_tiebreak(a, b) + pref_prob_tiebreak(b, a) == 1 exactly.
    """

    return float(tiebreak_from_diffs(_pair_diffs(model, x_star, x_circ), model.alphas, model.epsilons)[0])


def lex_dominates(a: ArrayLike, b: ArrayLike) -> bool:
    """ True when a is lexicographically strictly greater than b.

    Raises:
    ------
    LexRankParamError
        Vectors of different lengths
    """

    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LexRankParamError(f"Reward vectors must have equal lengths, got {a.shape} and {b.shape}")
    for a_i, b_i in zip(a, b):
        if a_i != b_i:
            return bool(a_i > b_i)
    return False


def sample_preferences(diffs: np.ndarray,
                       alphas: np.ndarray,
                       epsilons: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """ Draw one label per row of diffs; True means x_star is preferred.

    Each row draws succ/prec/tie from the lexicographic model and settles
    ties with a fair coin.
    """

    diffs = np.asarray(diffs, dtype=float)
    p_star = lex_pref_prob_from_diffs(diffs, alphas, epsilons)
    p_circ = lex_pref_prob_from_diffs(-diffs, alphas, epsilons)
    u = rng.random(len(diffs))
    coin = rng.random(len(diffs)) < 0.5
    tie = u >= p_star + p_circ
    return (u < p_star) | (tie & coin)


def sample_preference(model: LexRewardModel,
                      x_star: Alternative,
                      x_circ: Alternative,
                      rng: np.random.Generator) -> PreferenceLabel:
    """ Sample which of two alternatives is preferred under the model. """

    star = sample_preferences(_pair_diffs(model, x_star, x_circ), model.alphas, model.epsilons, rng)[0]
    return PreferenceLabel.STAR_PREFERRED if star else PreferenceLabel.CIRC_PREFERRED


def pair_reward_diffs(rewards: np.ndarray,
                      star_idx: typing.Union[np.ndarray, Sequence[int]],
                      circ_idx: typing.Union[np.ndarray, Sequence[int]]) -> np.ndarray:
    """ (pairs, k) reward differences from a (alternatives, k) reward matrix. """

    return rewards[np.asarray(star_idx, dtype=int)] - rewards[np.asarray(circ_idx, dtype=int)]
