""" lexrank.lori init configuration """
from .exception import LexRankError
from .exception import LexRankParamError
from .exception import LexRankInvalidData
from .exception import LexRankIOError
from .exception import LexRankConvergenceError
from .exception import LexRankStudyError
from .exception import LexRankUsageError

from .rewards import AgeGated
from .rewards import CancerGroundTruthTumor
from .rewards import CancerGroundTruthWBC
from .rewards import Linear
from .rewards import RewardFamily
from .rewards import TrajLinear
from .rewards import TrajThresholdedLinear
from .rewards import Trajectory
from .rewards import eval_reward
from .rewards import reward_param_grad
from .rewards import softmin

from .prefmodel import ComparisonTriple
from .prefmodel import LevelParams
from .prefmodel import LexRewardModel
from .prefmodel import PreferenceLabel
from .prefmodel import component_probs
from .prefmodel import lex_dominates
from .prefmodel import lex_pref_prob
from .prefmodel import pref_prob_tiebreak
from .prefmodel import sample_preference

from .infer import FitConfig
from .infer import FitReport
from .infer import LoriFitter
from .infer import PreferenceDataset
from .infer import TrexFitter
from .infer import fit_lori
from .infer import fit_trex
from .infer import neg_log_likelihood
from .infer import nll_gradients
from .infer import rmsprop_step

from .envs import CancerDynamics
from .envs import cancer_ground_truth
from .envs import cancer_step
from .envs import gen_allocation_dataset
from .envs import gen_preference_dataset
from .envs import gen_synthetic_lex_env
from .envs import rollout

from .control import StateGrid
from .control import behavioral_cloning
from .control import lex_q_learning
from .control import policy_pref_frequency

from .birl import fit_birl

from .bench import eval_preference_metrics
from .bench import run_study

from .config import ExperimentConfig
from .config import load_config

__all__ = ('LexRankError',
           'LexRankParamError',
           'LexRankInvalidData',
           'LexRankIOError',
           'LexRankConvergenceError',
           'LexRankStudyError',
           'LexRankUsageError',
           'AgeGated',
           'CancerGroundTruthTumor',
           'CancerGroundTruthWBC',
           'Linear',
           'RewardFamily',
           'TrajLinear',
           'TrajThresholdedLinear',
           'Trajectory',
           'eval_reward',
           'reward_param_grad',
           'softmin',
           'ComparisonTriple',
           'LevelParams',
           'LexRewardModel',
           'PreferenceLabel',
           'component_probs',
           'lex_dominates',
           'lex_pref_prob',
           'pref_prob_tiebreak',
           'sample_preference',
           'FitConfig',
           'FitReport',
           'LoriFitter',
           'PreferenceDataset',
           'TrexFitter',
           'fit_lori',
           'fit_trex',
           'neg_log_likelihood',
           'nll_gradients',
           'rmsprop_step',
           'CancerDynamics',
           'cancer_ground_truth',
           'cancer_step',
           'gen_allocation_dataset',
           'gen_preference_dataset',
           'gen_synthetic_lex_env',
           'rollout',
           'StateGrid',
           'behavioral_cloning',
           'lex_q_learning',
           'policy_pref_frequency',
           'fit_birl',
           'eval_preference_metrics',
           'run_study',
           'ExperimentConfig',
           'load_config')
