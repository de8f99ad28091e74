""" CSV and JSON persistence of trajectories, feature pools, preferences, models and policies """


import json
import logging
import os

from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from lexrank.lori.control import Policy
from lexrank.lori.control import policy_from_dict
from lexrank.lori.exception import LexRankInvalidData
from lexrank.lori.exception import LexRankIOError
from lexrank.lori.exception import LexRankParamError
from lexrank.lori.infer import FitReport
from lexrank.lori.infer import PreferenceDataset
from lexrank.lori.prefmodel import LexRewardModel
from lexrank.lori.rewards import Alternative
from lexrank.lori.rewards import Trajectory


logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

PREFERENCE_COLUMNS = ["star_id", "circ_id", "count"]
TRAJECTORY_COLUMNS = ["traj_id", "t", "a", "z", "w"]
AGE_COLUMN = "y"
FEATURE_ID = "feature_id"


def _read_csv(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    """ Read a CSV file; a file without rows yields an empty frame with the required columns. """

    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(required))
    except (OSError, UnicodeDecodeError) as e:
        raise LexRankIOError(f"Unable to read '{path}'") from e
    except pd.errors.ParserError as e:
        raise LexRankInvalidData(f"{path}: {e}") from e

    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise LexRankInvalidData(f"{path}: line 1: missing columns {', '.join(missing)}")
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: PathLike, integer: bool = False,
             allow_missing: bool = False) -> np.ndarray:
    """ Column as numbers; the first unparseable cell is reported with its line number. """

    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() & ~(allow_missing & frame[column].isna())
    if integer:
        bad |= values.notna() & (values != np.floor(values))
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise LexRankInvalidData(f"{path}: line {row + 2}: field '{column}' has invalid value "
                                 f"{frame[column].iloc[row]!r}")
    return values.to_numpy(dtype=float)


def _write_frame(frame: pd.DataFrame, path: PathLike) -> None:
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise LexRankIOError(f"Unable to write '{path}'") from e


def write_trajectories(trajectories: Sequence[Trajectory], path: PathLike) -> None:
    """ One row per step: traj_id, t, a, z, w and y when any trajectory has an age. """

    with_age = any(trajectory.age is not None for trajectory in trajectories)
    frames = []
    for traj_id, trajectory in enumerate(trajectories):
        frame = pd.DataFrame({"traj_id": traj_id, "t": np.arange(trajectory.horizon), "a": trajectory.actions,
                              "z": trajectory.z, "w": trajectory.w})
        if with_age:
            frame[AGE_COLUMN] = np.nan if trajectory.age is None else trajectory.age
        frames.append(frame)
    columns = TRAJECTORY_COLUMNS + ([AGE_COLUMN] if with_age else [])
    _write_frame(pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns), path)


def read_trajectories(path: PathLike) -> List[Trajectory]:
    """ Read write_trajectories() output.

    Raises:
    ------
    LexRankInvalidData
        Missing columns, unparseable values, or ids/steps that are not 0..n-1
    """

    frame = _read_csv(path, TRAJECTORY_COLUMNS)
    if frame.empty:
        return []
    traj_id = _numeric(frame, "traj_id", path, integer=True).astype(int)
    t = _numeric(frame, "t", path, integer=True).astype(int)
    actions = _numeric(frame, "a", path, integer=True).astype(int)
    z = _numeric(frame, "z", path)
    w = _numeric(frame, "w", path)
    ages = _numeric(frame, AGE_COLUMN, path, allow_missing=True) if AGE_COLUMN in frame.columns \
        else np.full(len(frame), np.nan)

    ids = np.unique(traj_id)
    if not np.array_equal(ids, np.arange(len(ids))):
        raise LexRankInvalidData(f"{path}: trajectory ids must be 0..n-1")
    trajectories = []
    for i in ids:
        rows = np.flatnonzero(traj_id == i)
        rows = rows[np.argsort(t[rows], kind="stable")]
        if not np.array_equal(t[rows], np.arange(len(rows))):
            raise LexRankInvalidData(f"{path}: line {rows[0] + 2}: steps of trajectory {i} must be 0..tau-1")
        age = ages[rows[0]]
        try:
            trajectories.append(Trajectory(actions[rows], z[rows], w[rows], None if np.isnan(age) else float(age)))
        except LexRankParamError as e:
            raise LexRankInvalidData(f"{path}: line {rows[0] + 2}: invalid trajectory {i}") from e
    return trajectories


def write_features(features: Sequence[Alternative], path: PathLike) -> None:
    """ One row per feature vector: feature_id, x0, x1, ... """

    matrix = np.vstack([np.asarray(x, dtype=float) for x in features]) if len(features) else np.zeros((0, 0))
    frame = pd.DataFrame(matrix, columns=[f"x{j}" for j in range(matrix.shape[1])])
    frame.insert(0, FEATURE_ID, np.arange(len(matrix)))
    _write_frame(frame, path)


def read_features(path: PathLike) -> List[np.ndarray]:
    frame = _read_csv(path, [FEATURE_ID])
    if frame.empty:
        return []
    ids = _numeric(frame, FEATURE_ID, path, integer=True).astype(int)
    if not np.array_equal(ids, np.arange(len(ids))):
        raise LexRankInvalidData(f"{path}: feature ids must be 0..n-1 in order")
    columns = [column for column in frame.columns if column != FEATURE_ID]
    matrix = np.column_stack([_numeric(frame, column, path) for column in columns])
    return list(matrix)


def write_preferences(data: PreferenceDataset, path: PathLike) -> None:
    """ One row per ordered pair with a positive count: star_id, circ_id, count. """

    star, circ, n = data.pairs()
    _write_frame(pd.DataFrame({"star_id": star, "circ_id": circ, "count": n.astype(int)},
                              columns=PREFERENCE_COLUMNS), path)


def read_preferences(path: PathLike, alternatives: Sequence[Alternative]) -> PreferenceDataset:
    """ Read preference counts over a known pool of alternatives.
    Parameters:
    ----------
    path: PathLike
        CSV written by write_preferences()
    alternatives: Sequence[Alternative]
        Pool the ids refer to

    Returns:
    -------
    PreferenceDataset
        Dataset (empty when the file has no rows)

    Raises:
    ------
    LexRankInvalidData
        Unparseable values, unknown ids or counts below one
    """

    frame = _read_csv(path, PREFERENCE_COLUMNS)
    data = PreferenceDataset(alternatives)
    if frame.empty:
        return data
    star = _numeric(frame, "star_id", path, integer=True).astype(int)
    circ = _numeric(frame, "circ_id", path, integer=True).astype(int)
    count = _numeric(frame, "count", path, integer=True).astype(int)
    for row, (s, c, n) in enumerate(zip(star.tolist(), circ.tolist(), count.tolist())):
        try:
            data.add(s, c, n)
        except LexRankInvalidData as e:
            raise LexRankInvalidData(f"{path}: line {row + 2}: {e}") from e
    return data


def write_json(payload: Dict[str, Any], path: PathLike) -> None:
    try:
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise LexRankIOError(f"Unable to write '{path}'") from e


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as e:
        raise LexRankIOError(f"Unable to read '{path}'") from e
    except json.JSONDecodeError as e:
        raise LexRankInvalidData(f"{path}: line {e.lineno}: {e.msg}") from e
    if not isinstance(payload, dict):
        raise LexRankInvalidData(f"{path}: expected a JSON object")
    return payload


def write_model(model: LexRewardModel, path: PathLike) -> None:
    write_json(model.to_dict(), path)


def read_model(path: PathLike) -> LexRewardModel:
    return LexRewardModel.from_dict(read_json(path))


def write_policy(policy: Policy, path: PathLike) -> None:
    write_json(policy.to_dict(), path)


def read_policy(path: PathLike) -> Policy:
    return policy_from_dict(read_json(path))


def write_report(report: FitReport, path: PathLike) -> None:
    write_json(report.to_dict(), path)


def read_report(path: PathLike) -> FitReport:
    return FitReport.from_dict(read_json(path))
