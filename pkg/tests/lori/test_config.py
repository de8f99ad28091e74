""" Unit tests for lexrank.lori.config module """


import json
import math
import pytest

from lexrank.lori import ExperimentConfig
from lexrank.lori import LexRankIOError
from lexrank.lori import LexRankInvalidData
from lexrank.lori import LexRankParamError
from lexrank.lori import LexRankUsageError
from lexrank.lori import load_config
from lexrank.lori.config import config_from_dict
from lexrank.lori.config import config_hash
from lexrank.lori.config import deep_merge
from lexrank.lori.config import read_config_file


def test_packaged_defaults():
    config = load_config()

    assert config.study == "cancer"
    assert config.seeds == [0, 1, 2, 3, 4]
    assert config.fit.learning_rate == 0.001
    assert config.fit.rmsprop_discount == 0.9
    assert config.fit.patience == 10
    assert config.fit.max_iters == 50000
    assert config.birl.n_samples == 10000 and config.birl.burn_in == 1000 and config.birl.thin == 100
    assert config.birl.proposal_std == 0.01
    assert config.cancer.alpha == pytest.approx(10 * math.log(9.0))
    assert config.ksweep.k_values == list(range(1, 11))
    assert config.allocation.n_patients is None


def test_yaml_file_overrides_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("study: k-sweep\nseeds: [7]\nfit:\n  learning_rate: 0.05\n")
    config = load_config(path)

    assert config.study == "k-sweep"
    assert config.seeds == [7]
    assert config.fit.learning_rate == 0.05
    assert config.fit.patience == 10


def test_json_file_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"study": "age", "age": {"n_train": 50}}))
    config = load_config(path, {"age": {"n_test": 25}, "seeds": [3]})

    assert config.study == "age"
    assert (config.age.n_train, config.age.n_test) == (50, 25)
    assert config.seeds == [3]


def test_unknown_keys_are_usage_errors():
    with pytest.raises(LexRankUsageError):
        config_from_dict({"fit": {"learning_rat": 0.1}})
    with pytest.raises(LexRankUsageError):
        config_from_dict({"extras": 1})


def test_unknown_study():
    with pytest.raises(LexRankUsageError):
        ExperimentConfig(study="everything")


def test_invalid_values():
    with pytest.raises(LexRankParamError):
        config_from_dict({"seeds": [1, 1]})
    with pytest.raises(LexRankParamError):
        config_from_dict({"fit": {"learning_rate": -1.0}})
    with pytest.raises(LexRankInvalidData):
        config_from_dict({"fit": 3})


def test_config_file_errors(tmp_path):
    with pytest.raises(LexRankIOError):
        read_config_file(tmp_path / "missing.yaml")

    broken = tmp_path / "broken.yaml"
    broken.write_text("fit: [unclosed\n")
    with pytest.raises(LexRankInvalidData):
        read_config_file(broken)

    listing = tmp_path / "listing.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(LexRankInvalidData):
        read_config_file(listing)

    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert read_config_file(empty) == {}


def test_deep_merge_leaves_inputs_untouched():
    base = {"fit": {"learning_rate": 0.001, "patience": 10}, "seeds": [0]}
    override = {"fit": {"patience": 3}}
    merged = deep_merge(base, override)

    assert merged == {"fit": {"learning_rate": 0.001, "patience": 3}, "seeds": [0]}
    assert base["fit"]["patience"] == 10


def test_config_hash_tracks_content():
    first, second = load_config(), load_config()

    assert config_hash(first) == config_hash(second)
    assert len(config_hash(first)) == 64
    assert config_hash(first) != config_hash(load_config(overrides={"seeds": [9]}))


def test_config_dict_rebuilds(fast_config_dict):
    config = config_from_dict(fast_config_dict)

    assert config_from_dict(config.to_dict()) == config
