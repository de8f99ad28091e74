""" Example usage of the lexrank package. """

import logging

import numpy as np

import lexrank.lori as lr
from lexrank.lori.control import ConstantPolicy
from lexrank.lori.envs import rollout_batch


def setup_logging(logging_level):
    """ Create and configure the logger.
    Parameters:
    -----------
    logging_level: Any (int)
        Defines the level of the logger

    Return:
    -------
    Logger
        Returns the logger created.
    """

    logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s', filename='example.log')
    logger = logging.getLogger(__name__)
    logger.setLevel(logging_level)
    logger.info("Logger created")

    return logger


def main():
    """ Fit a two-level lexicographic reward to simulated treatment preferences. """

    logger = setup_logging(logging.INFO)

    logger.info("Start")

    rng = np.random.default_rng(0)
    truth = lr.cancer_ground_truth()

    try:
        # Patients treated with random, fixed treatment probabilities
        pool = rollout_batch(ConstantPolicy(0.5), 200, 20, rng)
        train = lr.gen_preference_dataset(truth, pool, 500, rng)
        test = lr.gen_preference_dataset(truth, pool, 500, rng)

        model, report = lr.fit_lori(train, 2, lr.TrajThresholdedLinear(),
                                    lr.FitConfig(learning_rate=0.01, max_iters=2000),
                                    logging_level=logging.INFO)
    # Catch and log every package error
    except lr.LexRankError as e:
        logger.error(f"{e}", exc_info=False)
    else:
        metrics = lr.eval_preference_metrics(model, test, truth)
        logger.info(f"Stopped after {report.iterations} iterations ({report.stop_reason})")
        for level, (family, params) in enumerate(model.levels, start=1):
            logger.info(f"Level {level}: {family.to_dict()} alpha={params.alpha:.3f} epsilon={params.epsilon:.3f}")
        print(f"accuracy={metrics.accuracy:.3f} rmse={metrics.rmse:.3f}")
    finally:
        logger.info("End")


if __name__ == "__main__":
    main()
