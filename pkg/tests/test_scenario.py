import json

import pytest

from parascope.cost_model import Strategy
from parascope.optimizer import DAY
from parascope.scenario import constraints_from_config, load_config, load_scenario, scenario_from_config


def test_defaults():
    sc = scenario_from_config({})
    assert sc.shape.name == "X_160"
    assert sc.profile.name == "a100-80g-ib"
    assert sc.strategies == tuple(Strategy)
    assert sc.plan is None


def test_full_yaml_scenario(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(
        "model: {x: 32}\n"
        "profile: a100-80g-ethernet\n"
        "strategies: [improved, baseline]\n"
        "constraints: {epsilon: 0.1, deadline_days: 30, max_na: 4}\n"
        "plan: {strategy: improved, n_b: 8, n_l: 4, n_a: 2, n_mu: 5, b_mu: 1}\n"
    )
    sc = load_scenario(path)
    assert sc.shape.d_l == 32
    assert sc.profile.name == "a100-80g-ethernet"
    assert sc.strategies == (Strategy.Improved, Strategy.Baseline)
    assert sc.constraints.epsilon == 0.1
    assert sc.constraints.deadline == 30 * DAY
    assert sc.constraints.max_na == 4
    assert sc.plan.n_gpu == 64 and sc.plan.strategy is Strategy.Improved


def test_json_scenario_and_custom_profile(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({
        "model": {"name": "gpt-3"},
        "profile": {"base": "a100-80g-ib", "c_gpu_tflops": 624, "name": "faster"},
        "strategies": "partitioned",
    }))
    sc = load_scenario(path)
    assert sc.shape.d_l == 96
    assert sc.profile.c_gpu == pytest.approx(624e12)
    assert sc.strategies == (Strategy.Partitioned,)


def test_integer_model_shorthand():
    assert scenario_from_config({"model": 8}).shape.name == "X_8"


def test_rejects_unknown_constraint():
    with pytest.raises(ValueError, match="unknown constraint"):
        constraints_from_config({"speed": 3})


def test_rejects_non_mapping(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_empty_file_is_empty_scenario(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("")
    assert load_config(path) == {}


def test_bad_strategy_rejected():
    with pytest.raises(ValueError):
        scenario_from_config({"strategies": ["fastest"]})
