import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from nashtrack.basis import ORDER_VERSION
from nashtrack.cli import (
    EXIT_CONFIG,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    load_config,
    main,
    run_experiment,
)
from nashtrack.errors import ConfigError
from nashtrack.learning import write_policy_gains
from nashtrack.plants.glucose import glucose_basis
from nashtrack.policies import LinearFeedback

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def lq_config(tmp_path, **learning_overrides):
    config = {
        "plant": {"kind": "lq", "state_dim": 2, "action_dims": [1, 1], "game_seed": 0},
        "basis": {"kind": "quadratic"},
        "learning": dict(
            {
                "backend": "ls",
                "horizon": 3,
                "tol": 1.0e-10,
                "max_rounds": 400,
                "restart_each_tuple": True,
                "noise_ranges": [[-0.5, 0.5], [-0.5, 0.5]],
                "q0": {"base": 30.0, "action_multipliers": [1.0, 1.0]},
            },
            **learning_overrides,
        ),
        "seed": 3,
    }
    path = tmp_path / "lq.yaml"
    path.write_text(yaml.safe_dump(config))
    return path


def stub_glucose_config(tmp_path):
    config = {
        "plant": {
            "kind": "glucose",
            "patient": {"basal_glucose": 120.0},
            "scenario": {
                "meal_times_min": [],
                "meal_cho_g": [],
                "meal_durations_min": [],
                "exercise_duration_min": 0.0,
                "exercise_duration_jitter_frac": 0.0,
                "randomize_intensity": False,
            },
            "cgm_noise": False,
        },
        "basis": {"kind": "glucose"},
        "trials": {"count": 3, "days": 1},
        "seed": 9,
    }
    path = tmp_path / "stub.yaml"
    path.write_text(yaml.safe_dump(config))
    return path


# --- config validation ---------------------------------------------------------

def test_missing_config_is_config_error(tmp_path, capsys):
    code = run_experiment(str(tmp_path / "nope.yaml"), "learn", out=str(tmp_path / "out"))
    assert code == EXIT_CONFIG
    assert not (tmp_path / "out").exists()  # no partial artifacts


def test_unknown_key_is_config_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("plant:\n  kind: lq\n  tpyo: 3\n")
    with pytest.raises(ConfigError, match="plant.tpyo"):
        load_config(path)


def test_unparsable_config_is_config_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("plant: [unclosed\n")
    with pytest.raises(ConfigError, match="parse"):
        load_config(path)


def test_shipped_configs_validate():
    for name in ("lq_benchmark.yaml", "glucose.yaml"):
        load_config(CONFIGS / name)


# --- learn ----------------------------------------------------------------------

def test_learn_writes_artifacts_and_manifest(tmp_path):
    config = lq_config(tmp_path)
    out = tmp_path / "run"
    code = run_experiment(str(config), "learn", out=str(out))
    assert code == EXIT_OK
    for artifact in ("iteration_log.csv", "weights.csv", "gains.csv", "manifest.json"):
        assert (out / artifact).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["monomial_order"] == ORDER_VERSION
    assert manifest["seed"] == 3
    assert len(manifest["config_sha256"]) == 64
    header = (out / "iteration_log.csv").read_text().splitlines()[0]
    assert header.startswith("round,player,delta_sup,residual_or_objective,poe_lambda_min,w_1")


def test_learn_byte_identical_for_same_config_and_seed(tmp_path):
    config = lq_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_experiment(str(config), "learn", out=str(out1)) == EXIT_OK
    assert run_experiment(str(config), "learn", out=str(out2)) == EXIT_OK
    for name in ("iteration_log.csv", "weights.csv", "gains.csv", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_learn_horizon_comparison_round_counts(tmp_path):
    config = lq_config(tmp_path)
    counts = {}
    for horizon in (1, 3):
        out = tmp_path / f"h{horizon}"
        code = run_experiment(str(config), "learn", out=str(out), horizon=horizon)
        assert code == EXIT_OK
        rows = (out / "iteration_log.csv").read_text().strip().splitlines()
        counts[horizon] = len(rows) - 1  # two players per round
    assert counts[3] < counts[1]


def test_learn_round_cap_reports_nonconvergence(tmp_path):
    config = lq_config(tmp_path, max_rounds=2, tol=0.0)
    code = run_experiment(str(config), "learn", out=str(tmp_path / "cap"))
    assert code == EXIT_NONCONVERGENCE


# --- evaluate --------------------------------------------------------------------

def test_evaluate_requires_glucose_plant(tmp_path):
    config = lq_config(tmp_path)
    assert run_experiment(str(config), "evaluate", out=str(tmp_path / "x")) == EXIT_CONFIG


def test_evaluate_requires_checkpoint(tmp_path):
    config = stub_glucose_config(tmp_path)
    assert run_experiment(str(config), "evaluate", out=str(tmp_path / "missing")) == EXIT_CONFIG


def _write_zero_gains(out):
    out.mkdir(parents=True, exist_ok=True)
    basis = glucose_basis()
    zero = [LinearFeedback(basis, np.zeros((1, basis.state_feature_dim))) for _ in range(2)]
    write_policy_gains(out / "gains.csv", zero, basis)


def test_evaluate_constant_glucose_stub_is_fully_in_target(tmp_path):
    # no meals, basal at the setpoint, zero doses: every reading stays in range
    config = stub_glucose_config(tmp_path)
    out = tmp_path / "stub_run"
    _write_zero_gains(out)
    code = run_experiment(str(config), "evaluate", out=str(out))
    assert code == EXIT_OK
    rows = (out / "summary.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3
    for row in rows[1:]:
        fields = row.split(",")
        assert fields[1] == "evaluation"
        assert float(fields[6]) == 100.0  # pct_target column


def test_evaluate_workers_do_not_change_output(tmp_path):
    config = stub_glucose_config(tmp_path)
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    for out in (out1, out2):
        _write_zero_gains(out)
    assert run_experiment(str(config), "evaluate", out=str(out1), workers=1) == EXIT_OK
    assert run_experiment(str(config), "evaluate", out=str(out2), workers=3) == EXIT_OK
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_learn_runs_on_the_nonlinear_toy(tmp_path):
    config = {
        "plant": {"kind": "nonlinear-toy"},
        "learning": {
            "horizon": 2,
            "max_rounds": 3,
            "tol": 0.0,
            "restart_each_tuple": True,
            "noise_ranges": [[-0.5, 0.5], [-0.5, 0.5]],
            "q0": {"base": 50.0, "action_multipliers": [1.0, 1.0]},
        },
        "seed": 2,
    }
    path = tmp_path / "toy.yaml"
    path.write_text(yaml.safe_dump(config))
    out = tmp_path / "toy_run"
    code = run_experiment(str(path), "learn", out=str(out))
    assert code == EXIT_NONCONVERGENCE  # capped on purpose; artifacts still land
    assert (out / "gains.csv").exists()


# --- oracle-check ------------------------------------------------------------------

def test_oracle_check_small_sweep(tmp_path):
    config = {
        "learning": {
            "backend": "ls",
            "horizon": 3,
            "tol": 1.0e-10,
            "max_rounds": 400,
            "restart_each_tuple": True,
            "noise_ranges": [[-0.5, 0.5], [-0.5, 0.5]],
        },
        "oracle_check": {"seeds": [0, 1], "state_dim": 2, "action_dims": [1, 1]},
        "seed": 5,
    }
    path = tmp_path / "oc.yaml"
    path.write_text(yaml.safe_dump(config))
    out = tmp_path / "oc"
    assert run_experiment(str(path), "oracle-check", out=str(out)) == EXIT_OK
    rows = (out / "oracle_report.csv").read_text().strip().splitlines()
    assert rows[0] == "game_seed,rounds,converged,max_gain_error,pass"
    assert all(row.endswith("True") for row in rows[1:])


# --- argument parsing ----------------------------------------------------------------

def test_main_runs_a_subcommand(tmp_path):
    config = lq_config(tmp_path, max_rounds=2, tol=float("inf"))
    code = main(["learn", "--config", str(config), "--out", str(tmp_path / "m")])
    assert code == EXIT_OK


def test_main_rejects_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
