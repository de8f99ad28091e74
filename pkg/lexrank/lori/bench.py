""" Preference metrics and the scripted studies """


import logging
import math
import os

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
import pandas as pd

from lexrank.lori.birl import fit_birl
from lexrank.lori.config import ExperimentConfig
from lexrank.lori.config import config_hash
from lexrank.lori.control import ConstantPolicy
from lexrank.lori.control import Policy
from lexrank.lori.control import behavioral_cloning
from lexrank.lori.control import lex_q_learning
from lexrank.lori.control import make_behavior_policy
from lexrank.lori.control import policy_pref_frequency
from lexrank.lori.envs import BENEFIT
from lexrank.lori.envs import NEED
from lexrank.lori.envs import age_ground_truth
from lexrank.lori.envs import allocation_ground_truth
from lexrank.lori.envs import cancer_ground_truth
from lexrank.lori.envs import gen_allocation_dataset
from lexrank.lori.envs import gen_preference_dataset
from lexrank.lori.envs import gen_synthetic_lex_env
from lexrank.lori.envs import rollout
from lexrank.lori.envs import rollout_batch
from lexrank.lori.envs import single_reward_ground_truth
from lexrank.lori.exception import LexRankError
from lexrank.lori.exception import LexRankIOError
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.exception import LexRankStudyError
from lexrank.lori.exception import LexRankUsageError
from lexrank.lori.infer import FitConfig
from lexrank.lori.infer import PreferenceDataset
from lexrank.lori.infer import fit_lori
from lexrank.lori.infer import fit_trex
from lexrank.lori.prefmodel import LevelParams
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.prefmodel import pair_reward_diffs
from lexrank.lori.prefmodel import tiebreak_from_diffs
from lexrank.lori.rewards import EFFICACY_FIRST
from lexrank.lori.rewards import TOXICITY_FIRST
from lexrank.lori.rewards import AgeGated
from lexrank.lori.rewards import Linear
from lexrank.lori.rewards import TrajLinear
from lexrank.lori.rewards import TrajThresholdedLinear


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"

POLICY_ROWS = ("BC", "BIRL", "T-REX", "LORI", "Optimal")
POLICY_COLUMNS = ("Behavior", "BC", "BIRL", "T-REX", "LORI")


@dataclass
class MetricsReport:
    """ Test-set quality of a fitted preference model.

    Attributes:
    ----------
    rmse: float
        Root-mean-square difference of tie-break probabilities to the ground truth
    accuracy: float
        Fraction of test preferences predicted correctly (exact 0.5 counts half)
    n_events: int
        Number of test preference events
    """

    rmse: float
    accuracy: float
    n_events: int


def preference_probabilities(model: LexRewardModel, data: PreferenceDataset) -> np.ndarray:
    """ Tie-break preference probability of every ordered pair of a dataset (pairs() order). """

    star, circ, _ = data.pairs()
    rewards = model.rewards_from_design(data.design_matrix())
    return tiebreak_from_diffs(pair_reward_diffs(rewards, star, circ), model.alphas, model.epsilons)


def eval_preference_metrics(model: LexRewardModel,
                            test_data: PreferenceDataset,
                            ground_truth: LexRewardModel) -> MetricsReport:
    """ Accuracy and RMSE of a model on held-out preferences.

    Both metrics weight every ordered pair by its count, so each observed
    preference event contributes once.

    Raises:
    ------
    LexRankParamError
        Empty test data
    """

    if test_data.is_empty():
        raise LexRankParamError("Test data must contain at least one preference")
    _, _, n = test_data.pairs()
    fitted = preference_probabilities(model, test_data)
    truth = preference_probabilities(ground_truth, test_data)
    credit = np.where(fitted > 0.5, 1.0, np.where(fitted == 0.5, 0.5, 0.0))
    total = float(n.sum())
    return MetricsReport(rmse=math.sqrt(float(np.sum(n * (fitted - truth) ** 2)) / total),
                         accuracy=float(np.sum(n * credit)) / total,
                         n_events=int(total))


def summarize(values: Sequence[float]) -> Dict[str, float]:
    """ Mean, population standard deviation and standard error of per-seed values. """

    array = np.asarray(values, dtype=float)
    array = array[np.isfinite(array)]
    if len(array) == 0:
        return {"mean": math.nan, "std": math.nan, "stderr": math.nan}
    stderr = float(array.std(ddof=1) / math.sqrt(len(array))) if len(array) > 1 else 0.0
    return {"mean": float(array.mean()), "std": float(array.std()), "stderr": stderr}


def summarize_table(table: pd.DataFrame, by: List[str], columns: List[str]) -> pd.DataFrame:
    """ Per-group summarize() of the given columns, groups in first-appearance order. """

    rows = []
    for key, group in table.groupby(by, sort=False):
        keys = key if isinstance(key, tuple) else (key,)
        row = dict(zip(by, keys))
        for column in columns:
            for statistic, value in summarize(group[column].tolist()).items():
                row[f"{column}_{statistic}"] = value
        rows.append(row)
    return pd.DataFrame(rows)


def write_table(table: pd.DataFrame, path: Union[str, os.PathLike], provenance: Dict[str, str]) -> None:
    """ Write a CSV preceded by '# key: value' provenance lines.

    Raises:
    ------
    LexRankIOError
        Unwritable path
    """

    try:
        with open(path, "w", newline="") as f:
            for key, value in provenance.items():
                f.write(f"# {key}: {value}\n")
            table.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise LexRankIOError(f"Unable to write '{path}'") from e


class Study(ABC):
    """ Scripted experiment repeated over seeds.

    Attributes:
    ----------
    _config: ExperimentConfig
        Full configuration of the run
    _logger: Logger
        Logger of the class

    Methods:
    --------
    _setup_logging(logging_level)
        Defines the logger of the class
    _run_seed(seed)
        Tables (name -> rows) produced by one seed
    _summaries(tables)
        Additional tables computed from the merged per-seed tables
    run()
        Run every seed, isolate failures, write CSVs and return the tables
    """

    name = ""

    def __init__(self, config: ExperimentConfig, logging_level: Union[int, str] = logging.WARNING) -> None:
        self._config = config
        self._setup_logging(logging_level)
        self._logging_level = logging_level

    def _setup_logging(self, logging_level: Union[int, str]) -> None:
        self._logger = logging.getLogger(__name__)
        self._logger.setLevel(logging_level)

    def _fit_config(self, seed: int, **changes) -> FitConfig:
        return replace(self._config.fit, seed=seed, **changes)

    @abstractmethod
    def _run_seed(self, seed: int) -> Dict[str, List[dict]]:
        pass

    def _summaries(self, tables: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        return {}

    def run(self, write: bool = True) -> Dict[str, pd.DataFrame]:
        """ Run the study for every configured seed.
        Parameters:
        ----------
        write: bool
            Write the tables as CSV files under the output directory

        Returns:
        -------
        Dict[str, pd.DataFrame]
            Table name -> merged table, rows in seed order

        Raises:
        ------
        LexRankStudyError
            One or more seeds failed; tables of the others are written first
        """

        rows: Dict[str, List[dict]] = {}
        failed: List[int] = []
        for seed in self._config.seeds:
            self._logger.info(f"Study '{self.name}': seed {seed}")
            try:
                seed_rows = self._run_seed(seed)
            except (LexRankError, ArithmeticError, ValueError) as e:
                self._logger.error(f"Study '{self.name}' failed for seed {seed}: {e}")
                failed.append(seed)
                continue
            for table, table_rows in seed_rows.items():
                rows.setdefault(table, []).extend(table_rows)

        tables = {name: pd.DataFrame(table_rows) for name, table_rows in rows.items()}
        if tables:
            tables.update(self._summaries(tables))
        if write:
            self._write(tables)
        if failed:
            raise LexRankStudyError(f"Study '{self.name}' did not complete", failed_seeds=failed)
        return tables

    def _write(self, tables: Dict[str, pd.DataFrame]) -> None:
        output_dir = self._config.output_dir
        try:
            os.makedirs(output_dir, exist_ok=True)
        except OSError as e:
            raise LexRankIOError(f"Unable to create output directory '{output_dir}'") from e
        provenance = {"study": self.name,
                      "config_sha256": config_hash(self._config),
                      "seeds": ",".join(str(seed) for seed in self._config.seeds)}
        for name, table in tables.items():
            path = os.path.join(output_dir, f"{name}.csv")
            write_table(table, path, provenance)
            self._logger.info(f"Wrote {path} ({len(table)} rows)")


class CancerStudy(Study):
    """ Lexicographic treatment preferences: reward recovery and policy comparison. """

    name = "cancer"

    def _ground_truth(self) -> LexRewardModel:
        cancer = self._config.cancer
        return cancer_ground_truth(cancer.alpha, cancer.epsilon)

    def _optimal_thresholds(self, truth: LexRewardModel) -> List[float]:
        return truth.epsilons.tolist()

    def _policy(self, model: LexRewardModel, seed: int, thresholds: Optional[Sequence[float]] = None) -> Policy:
        config = self._config
        return lex_q_learning(model, config.dynamics, config.grid, replace(config.qlearning, seed=seed),
                              thresholds, self._logging_level)

    def _run_seed(self, seed: int) -> Dict[str, List[dict]]:
        config, cancer = self._config, self._config.cancer
        rng = np.random.default_rng(seed)
        truth = self._ground_truth()

        optimal = self._policy(truth, seed, self._optimal_thresholds(truth))
        behavior = make_behavior_policy(optimal, cancer.behavior_epsilon)
        demos = rollout_batch(behavior, cancer.n_trajectories, cancer.horizon, rng, dynamics=config.dynamics)
        train = gen_preference_dataset(truth, demos, cancer.n_train, rng)
        test = gen_preference_dataset(truth, demos, cancer.n_test, rng)

        birl_family, _ = fit_birl(demos, replace(config.birl, seed=seed, horizon=cancer.horizon),
                                  config.dynamics, config.grid, self._logging_level)
        models = {
            "BIRL": LexRewardModel([(birl_family, LevelParams(1.0, 0.0))]),
            "T-REX": fit_trex(train, TrajLinear(), self._fit_config(seed), self._logging_level)[0],
            "LORI": fit_lori(train, cancer.k, TrajThresholdedLinear(), self._fit_config(seed),
                             self._logging_level)[0],
        }

        reward_rows = []
        for method, model in models.items():
            metrics = eval_preference_metrics(model, test, truth)
            reward_rows.append({"method": method, "seed": seed, "rmse": metrics.rmse, "accuracy": metrics.accuracy})
        tables = {f"{self.name}_rewards": reward_rows}

        if cancer.compare_policies:
            policies: Dict[str, Policy] = {
                "Behavior": behavior,
                "Optimal": optimal,
                "BC": behavioral_cloning(demos, replace(config.cloning, seed=seed), self._logging_level),
                "BIRL": self._policy(models["BIRL"], seed, [0.0]),
                "T-REX": self._policy(models["T-REX"], seed, [0.0]),
                "LORI": self._policy(models["LORI"], seed),
            }
            policy_rows = []
            for row in POLICY_ROWS:
                for column in POLICY_COLUMNS:
                    if row == column:
                        continue
                    frequency, stderr = policy_pref_frequency(policies[row], policies[column], truth,
                                                              cancer.n_policy_samples, rng, cancer.horizon,
                                                              config.dynamics)
                    policy_rows.append({"row": row, "column": column, "seed": seed,
                                        "frequency": frequency, "stderr": stderr})
            tables[f"{self.name}_policies"] = policy_rows
        return tables

    def _summaries(self, tables: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        summaries = {}
        rewards = tables.get(f"{self.name}_rewards")
        if rewards is not None and len(rewards):
            summaries[f"{self.name}_rewards_summary"] = summarize_table(rewards, ["method"], ["rmse", "accuracy"])
        policies = tables.get(f"{self.name}_policies")
        if policies is not None and len(policies):
            layout = pd.DataFrame(index=list(POLICY_ROWS), columns=list(POLICY_COLUMNS), dtype=float)
            for (row, column), group in policies.groupby(["row", "column"], sort=False):
                layout.loc[row, column] = summarize(group["frequency"].tolist())["mean"]
            summaries[f"{self.name}_policies_summary"] = layout.rename_axis("policy").reset_index()
        return summaries


class SingleRewardStudy(CancerStudy):
    """ Same pipeline with a single linear ground-truth reward. """

    name = "single_reward"

    def _ground_truth(self) -> LexRewardModel:
        return single_reward_ground_truth(alpha=self._config.cancer.alpha)

    def _optimal_thresholds(self, truth: LexRewardModel) -> List[float]:
        return [0.0]


class KSweepStudy(Study):
    """ Test RMSE of LORI with k = 1..K on a random k_true-level environment. """

    name = "k_sweep"

    def _run_seed(self, seed: int) -> Dict[str, List[dict]]:
        sweep = self._config.ksweep
        rng = np.random.default_rng(seed)
        env = gen_synthetic_lex_env(sweep.k_true, sweep.dim, rng, sweep.weights, alternative_std=sweep.alternative_std)
        train = gen_preference_dataset(env.ground_truth, env.sample_alternatives(2 * sweep.n_train, rng),
                                       sweep.n_train, rng)
        test = gen_preference_dataset(env.ground_truth, env.sample_alternatives(2 * sweep.n_test, rng),
                                      sweep.n_test, rng)

        rows = []
        for k in sweep.k_values:
            model, report = fit_lori(train, k, Linear.zeros(sweep.dim, positive=True),
                                     self._fit_config(seed), self._logging_level)
            metrics = eval_preference_metrics(model, test, env.ground_truth)
            rows.append({"k": k, "seed": seed, "rmse": metrics.rmse, "accuracy": metrics.accuracy,
                         "iterations": report.iterations})
        return {self.name: rows}

    def _summaries(self, tables: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        return {f"{self.name}_summary": summarize_table(tables[self.name], ["k"], ["rmse", "accuracy"])}


class AgeStudy(Study):
    """ Recover the age at which efficacy overtakes toxicity in clinicians' priorities. """

    name = "age"

    def _run_seed(self, seed: int) -> Dict[str, List[dict]]:
        config, age = self._config, self._config.age
        rng = np.random.default_rng(seed)
        truth = age_ground_truth(age.y_threshold, age.y_sensitivity)

        p_treat = rng.random(age.n_trajectories)
        pool = [rollout(ConstantPolicy(p), age.horizon, rng, with_age=True, dynamics=config.dynamics)
                for p in p_treat]
        train = gen_preference_dataset(truth, pool, age.n_train, rng)
        test = gen_preference_dataset(truth, pool, age.n_test, rng)

        center = float(np.mean([trajectory.age for trajectory in pool]))
        templates = [AgeGated(polarity=EFFICACY_FIRST, age_center=center, age_scale=age.age_scale),
                     AgeGated(polarity=TOXICITY_FIRST, age_center=center, age_scale=age.age_scale)]
        model, _ = fit_lori(train, 2, templates, self._fit_config(seed, learning_rate=age.learning_rate),
                            self._logging_level)
        metrics = eval_preference_metrics(model, test, truth)

        fitted = model.families[0]
        assert isinstance(fitted, AgeGated)
        recovery = [{"seed": seed, "y_threshold": fitted.y_threshold, "y_sensitivity": fitted.y_sensitivity,
                     "accuracy": metrics.accuracy, "rmse": metrics.rmse}]
        truth_gate = truth.families[0]
        assert isinstance(truth_gate, AgeGated)
        ages = np.asarray(age.curve_ages, dtype=float)
        curve = [{"age": a, "seed": seed, "truth_gate": t, "fitted_gate": f}
                 for a, t, f in zip(ages.tolist(), truth_gate.gate(ages).tolist(), fitted.gate(ages).tolist())]
        return {"age_recovery": recovery, "age_curve": curve}


def required_benefit(model: LexRewardModel, need_difference: float,
                     benefit_grid: np.ndarray) -> float:
    """ Smallest benefit difference on the grid that makes the higher-benefit patient win at least half the time.

    Returns NaN when no benefit difference on the grid compensates.
    """

    needy = np.zeros(2)
    needy[NEED] = need_difference
    candidates = np.zeros((len(benefit_grid), 2))
    candidates[:, BENEFIT] = benefit_grid
    rewards = model.rewards_from_design(np.vstack([candidates, needy]))
    diffs = rewards[:-1] - rewards[-1]
    wins = tiebreak_from_diffs(diffs, model.alphas, model.epsilons) >= 0.5
    return float(benefit_grid[np.argmax(wins)]) if wins.any() else math.nan


class AllocationStudy(Study):
    """ Synthetic need-first organ allocation: weight recovery and the benefit/need trade-off. """

    name = "allocation"

    def _run_seed(self, seed: int) -> Dict[str, List[dict]]:
        config, study = self._config, self._config.allocation_study
        allocation = config.allocation
        rng = np.random.default_rng(seed)
        truth = allocation_ground_truth()

        train = gen_allocation_dataset(truth, allocation.n_organ_events, allocation.waitlist_size, rng, allocation)
        test = gen_allocation_dataset(truth, study.n_test_events, allocation.waitlist_size, rng, allocation)
        fit_config = self._fit_config(seed, learning_rate=study.learning_rate)
        models = {
            "T-REX": fit_trex(train, Linear.zeros(2, positive=True), fit_config, self._logging_level)[0],
            "LORI": fit_lori(train, 2, Linear.zeros(2, positive=True), fit_config, self._logging_level)[0],
        }

        weights, metrics_rows, tradeoff = [], [], []
        need_grid = np.arange(0.0, study.need_max + study.need_step / 2, study.need_step)
        benefit_grid = np.arange(0.0, study.benefit_max + study.benefit_step / 2, study.benefit_step)
        for method, model in models.items():
            for level, (family, params) in enumerate(model.levels, start=1):
                assert isinstance(family, Linear)
                weights.append({"seed": seed, "method": method, "level": level,
                                "benefit_weight": float(family.theta[BENEFIT]),
                                "need_weight": float(family.theta[NEED]), "epsilon": params.epsilon})
            metrics = eval_preference_metrics(model, test, truth)
            metrics_rows.append({"seed": seed, "method": method, "rmse": metrics.rmse, "accuracy": metrics.accuracy})
        for method, model in [("truth", truth)] + list(models.items()):
            for need in need_grid.tolist():
                tradeoff.append({"need_difference": need, "method": method, "seed": seed,
                                 "benefit_difference": required_benefit(model, need, benefit_grid)})
        return {"allocation_weights": weights, "allocation_metrics": metrics_rows, "allocation_tradeoff": tradeoff}


STUDY_CLASSES: Dict[str, Type[Study]] = {
    "cancer": CancerStudy,
    "single-reward": SingleRewardStudy,
    "k-sweep": KSweepStudy,
    "age": AgeStudy,
    "allocation": AllocationStudy,
}


def run_study(config: ExperimentConfig,
              logging_level: Union[int, str] = logging.WARNING,
              write: bool = True) -> Dict[str, pd.DataFrame]:
    """ Run the study named in the configuration.

    Raises:
    ------
    LexRankUsageError
        Unknown study name
    LexRankStudyError
        Some seeds failed (outputs of the others are still written)
    """

    try:
        study_class = STUDY_CLASSES[config.study]
    except KeyError as e:
        raise LexRankUsageError(f"Unknown study '{config.study}'") from e
    return study_class(config, logging_level).run(write)


def study_names() -> Tuple[str, ...]:
    return tuple(STUDY_CLASSES)
