""" Command-line interface: lexrank simulate|gen-prefs|fit|eval|rl|study """


import argparse
import logging
import os
import sys

from dataclasses import replace
from typing import Any, Dict, List, Optional

import numpy as np

from lexrank.lori.bench import eval_preference_metrics
from lexrank.lori.bench import run_study
from lexrank.lori.birl import fit_birl
from lexrank.lori.config import STUDIES
from lexrank.lori.config import ExperimentConfig
from lexrank.lori.config import load_config
from lexrank.lori.control import ConstantPolicy
from lexrank.lori.control import Policy
from lexrank.lori.control import behavioral_cloning
from lexrank.lori.control import lex_q_learning
from lexrank.lori.control import make_behavior_policy
from lexrank.lori.dataio import read_model
from lexrank.lori.dataio import read_preferences
from lexrank.lori.dataio import read_trajectories
from lexrank.lori.dataio import write_json
from lexrank.lori.dataio import write_model
from lexrank.lori.dataio import write_policy
from lexrank.lori.dataio import write_preferences
from lexrank.lori.dataio import write_report
from lexrank.lori.dataio import write_trajectories
from lexrank.lori.envs import cancer_ground_truth
from lexrank.lori.envs import gen_preference_dataset
from lexrank.lori.envs import rollout_batch
from lexrank.lori.exception import LexRankError
from lexrank.lori.exception import LexRankIOError
from lexrank.lori.exception import LexRankUsageError
from lexrank.lori.infer import fit_lori
from lexrank.lori.infer import fit_trex
from lexrank.lori.prefmodel import LevelParams
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.rewards import TrajLinear
from lexrank.lori.rewards import TrajThresholdedLinear


logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

METHODS = ("lori", "trex", "birl", "bc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexrank",
                                     description="Lexicographically-ordered reward inference from preferences")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--log-file", default=None, help="Write log records to this file instead of stderr")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML or JSON configuration merged over the defaults")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=".", help="Output directory")

    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Simulate treatment trajectories")
    simulate.add_argument("--n", type=int, default=1000, help="Number of patients")
    simulate.add_argument("--horizon", type=int, default=20)
    simulate.add_argument("--policy", choices=["constant", "behavior"], default="constant")
    simulate.add_argument("--p-treat", type=float, default=0.5, help="Treatment probability of the constant policy")
    simulate.add_argument("--with-age", action="store_true")

    gen_prefs = commands.add_parser("gen-prefs", parents=[common],
                                    help="Label trajectory pairs with the cancer ground truth")
    gen_prefs.add_argument("--trajectories", required=True)
    gen_prefs.add_argument("--n-pairs", type=int, default=1000)

    fit = commands.add_parser("fit", parents=[common], help="Fit a reward model or cloned policy")
    fit.add_argument("--trajectories", required=True)
    fit.add_argument("--preferences", default=None, help="Required by lori and trex")
    fit.add_argument("--method", choices=METHODS, default="lori")
    fit.add_argument("--k", type=int, default=2)

    evaluate = commands.add_parser("eval", parents=[common], help="Accuracy and RMSE against the cancer ground truth")
    evaluate.add_argument("--trajectories", required=True)
    evaluate.add_argument("--preferences", required=True)
    evaluate.add_argument("--model", required=True)

    rl = commands.add_parser("rl", parents=[common], help="Lexicographic Q-learning on a model's rewards")
    rl.add_argument("--model", required=True)

    study = commands.add_parser("study", parents=[common], help="Run a scripted study")
    study.add_argument("name", help=f"One of: {', '.join(STUDIES)}")

    return parser


def _setup_logging(level: str, log_file: Optional[str]) -> None:
    logging.basicConfig(level=level, filename=log_file,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _config(args: argparse.Namespace, **overrides: Any) -> ExperimentConfig:
    data: Dict[str, Any] = {key: value for key, value in overrides.items() if value is not None}
    if args.seed is not None:
        data["seeds"] = [args.seed]
    return load_config(args.config, data)


def _seed(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return args.seed if args.seed is not None else config.seeds[0]


def _out(args: argparse.Namespace, filename: str) -> str:
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as e:
        raise LexRankIOError(f"Unable to create output directory '{args.out}'") from e
    return os.path.join(args.out, filename)


def _simulate(args: argparse.Namespace) -> int:
    config = _config(args)
    seed = _seed(args, config)
    policy: Policy
    if args.policy == "constant":
        policy = ConstantPolicy(args.p_treat)
    else:
        optimal = lex_q_learning(cancer_ground_truth(config.cancer.alpha, config.cancer.epsilon), config.dynamics,
                                 config.grid, replace(config.qlearning, seed=seed), logging_level=args.log_level)
        policy = make_behavior_policy(optimal, config.cancer.behavior_epsilon)
    trajectories = rollout_batch(policy, args.n, args.horizon, np.random.default_rng(seed), args.with_age,
                                 config.dynamics)
    path = _out(args, "trajectories.csv")
    write_trajectories(trajectories, path)
    print(f"Wrote {len(trajectories)} trajectories to {path}")
    return EXIT_OK


def _gen_prefs(args: argparse.Namespace) -> int:
    config = _config(args)
    pool = read_trajectories(args.trajectories)
    truth = cancer_ground_truth(config.cancer.alpha, config.cancer.epsilon)
    data = gen_preference_dataset(truth, pool, args.n_pairs, np.random.default_rng(_seed(args, config)))
    path = _out(args, "preferences.csv")
    write_preferences(data, path)
    print(f"Wrote {data.n_preferences} preferences over {len(data.counts)} pairs to {path}")
    return EXIT_OK


def _fit(args: argparse.Namespace) -> int:
    config = _config(args)
    seed = _seed(args, config)
    demos = read_trajectories(args.trajectories)

    if args.method in ("lori", "trex"):
        if args.preferences is None:
            raise LexRankUsageError(f"--preferences is required for method '{args.method}'")
        data = read_preferences(args.preferences, demos)
        fit_config = replace(config.fit, seed=seed)
        if args.method == "lori":
            model, report = fit_lori(data, args.k, TrajThresholdedLinear(), fit_config, args.log_level)
        else:
            model, report = fit_trex(data, TrajLinear(), fit_config, args.log_level)
        write_model(model, _out(args, "model.json"))
        write_report(report, _out(args, "report.json"))
        print(f"{args.method}: final loss {report.final_loss:.6f} after {report.iterations} iterations "
              f"({report.stop_reason})")
    elif args.method == "birl":
        family, diagnostics = fit_birl(demos, replace(config.birl, seed=seed), config.dynamics, config.grid,
                                       args.log_level)
        write_model(LexRewardModel([(family, LevelParams(1.0, 0.0))]), _out(args, "model.json"))
        write_json(diagnostics.to_dict(), _out(args, "birl.json"))
        print(f"birl: theta_z={diagnostics.theta_z:.6f} theta_w={diagnostics.theta_w:.6f} "
              f"(acceptance {diagnostics.acceptance_rate:.1%})")
    else:
        policy = behavioral_cloning(demos, replace(config.cloning, seed=seed), args.log_level)
        write_policy(policy, _out(args, "policy.json"))
        print(f"bc: cloned policy with {policy.hidden_width} hidden units")
    return EXIT_OK


def _eval(args: argparse.Namespace) -> int:
    config = _config(args)
    pool = read_trajectories(args.trajectories)
    data = read_preferences(args.preferences, pool)
    metrics = eval_preference_metrics(read_model(args.model), data,
                                      cancer_ground_truth(config.cancer.alpha, config.cancer.epsilon))
    print(f"accuracy={metrics.accuracy:.6f} rmse={metrics.rmse:.6f} events={metrics.n_events}")
    return EXIT_OK


def _rl(args: argparse.Namespace) -> int:
    config = _config(args)
    policy = lex_q_learning(read_model(args.model), config.dynamics, config.grid,
                            replace(config.qlearning, seed=_seed(args, config)), logging_level=args.log_level)
    path = _out(args, "policy.json")
    write_policy(policy, path)
    print(f"Wrote policy to {path} (state coverage {policy.coverage:.1%})")
    return EXIT_OK


def _study(args: argparse.Namespace) -> int:
    if args.name not in STUDIES:
        raise LexRankUsageError(f"Unknown study '{args.name}' (choose from {', '.join(STUDIES)})")
    config = _config(args, study=args.name, output_dir=args.out)
    tables = run_study(config, args.log_level)
    print(f"Study '{args.name}' wrote {len(tables)} tables to {config.output_dir}")
    return EXIT_OK


COMMANDS = {
    "simulate": _simulate,
    "gen-prefs": _gen_prefs,
    "fit": _fit,
    "eval": _eval,
    "rl": _rl,
    "study": _study,
}


def main(argv: Optional[List[str]] = None) -> int:
    """ Entry point; returns 0 on success, 2 on usage errors and 1 on other failures. """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    _setup_logging(args.log_level, args.log_file)

    try:
        return COMMANDS[args.command](args)
    except LexRankUsageError as e:
        logger.error(str(e))
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except LexRankError as e:
        logger.error(str(e))
        print(e, file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
