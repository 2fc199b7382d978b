import numpy as np
import pytest
from scipy import stats

from nashtrack.plants import generate_lq_game, make_toy_game, sample_scenario
from nashtrack.plants.scenario import INTENSITY_CLASSES, ScenarioConfig, scenario_to_csv
from nashtrack.plants.glucose import EXERCISE_FACTORS


# --- LQ generator -----------------------------------------------------------

def test_lq_step_is_exactly_linear(rng):
    lq, plant = generate_lq_game((2, (1, 1)), seed=4)
    x = rng.normal(size=2)
    u = (rng.normal(size=1), rng.normal(size=1))
    for alpha in (0.5, -2.0, 7.25):
        scaled = plant.step(alpha * x, (alpha * u[0], alpha * u[1]))
        assert np.array_equal(scaled, alpha * plant.step(x, u))


def test_lq_scalar_step_matches_drift():
    lq, plant = generate_lq_game((1, (1, 1)), seed=2)
    out = plant.step(np.ones(1), (np.zeros(1), np.zeros(1)))
    assert out == pytest.approx(lq.A[0])


def test_lq_generator_deterministic():
    lq1, _ = generate_lq_game((2, (1, 2)), seed=77)
    lq2, _ = generate_lq_game((2, (1, 2)), seed=77)
    assert np.array_equal(lq1.A, lq2.A)
    assert np.array_equal(lq1.B[1], lq2.B[1])
    assert np.array_equal(lq1.game.state_cost[0], lq2.game.state_cost[0])


def test_lq_generated_costs_are_spd():
    lq, _ = generate_lq_game((3, (2, 1)), seed=5)
    for i in range(2):
        assert np.linalg.eigvalsh(lq.game.state_cost[i]).min() > 0
        for j in range(2):
            assert np.linalg.eigvalsh(lq.game.action_cost[i][j]).min() > 0


def test_lq_one_step_map_capped():
    for seed in range(8):
        lq, _ = generate_lq_game((2, (1, 1)), seed=seed)
        sigma = np.linalg.svd(lq.one_step_map(), compute_uv=False).max()
        assert sigma <= 1.0 + 1e-9


# --- nonlinear toy -----------------------------------------------------------

def test_toy_drift_vanishes_at_origin():
    spec, plant = make_toy_game()
    assert np.allclose(plant.step(np.zeros(2), (np.zeros(1), np.zeros(1))), 0.0)


def test_toy_open_loop_is_bounded():
    spec, plant = make_toy_game()
    x = np.array([1.2, -0.8])
    for _ in range(300):
        x = plant.step(x, (np.zeros(1), np.zeros(1)))
    assert np.all(np.abs(x) < 2.0)


# --- scenarios ----------------------------------------------------------------

def zero_width_config():
    return ScenarioConfig(
        meal_time_jitter_min=0.0,
        meal_cho_jitter_frac=0.0,
        meal_duration_jitter_frac=0.0,
        exercise_time_jitter_min=0.0,
        exercise_duration_jitter_frac=0.0,
        randomize_intensity=False,
    )


def test_zero_width_variability_returns_nominal():
    scenario = sample_scenario(zero_width_config(), np.random.default_rng(0))
    assert np.array_equal(scenario.meal_times_min, [420, 600, 780, 900, 1080, 1380])
    assert np.array_equal(scenario.meal_cho_g, [70, 30, 90, 30, 90, 25])
    assert np.array_equal(scenario.meal_durations_min, [30, 15, 45, 15, 45, 20])
    assert scenario.exercise_start_min == 960.0
    assert scenario.exercise_intensity == "moderate"
    assert scenario.exercise_duration_min == 30.0


def test_realizations_stay_in_declared_ranges():
    config = ScenarioConfig()
    rng = np.random.default_rng(1)
    offsets, cho_fracs = [], []
    for _ in range(10_000):
        s = sample_scenario(config, rng)
        offsets.extend(s.meal_times_min - np.asarray(config.meal_times_min))
        cho_fracs.extend(s.meal_cho_g / np.asarray(config.meal_cho_g) - 1.0)
        assert abs(s.exercise_start_min - 960.0) <= 60.0
        assert 0.5 * 30.0 <= s.exercise_duration_min <= 1.5 * 30.0
    offsets = np.asarray(offsets)
    cho_fracs = np.asarray(cho_fracs)
    assert offsets.min() >= -60.0 and offsets.max() <= 60.0
    assert offsets.min() < -58.0 and offsets.max() > 58.0  # the range is actually used
    assert cho_fracs.min() >= -0.40 and cho_fracs.max() <= 0.40


def test_meal_offsets_look_uniform():
    config = ScenarioConfig()
    rng = np.random.default_rng(2)
    offsets = []
    for _ in range(2000):
        s = sample_scenario(config, rng)
        offsets.extend(s.meal_times_min - np.asarray(config.meal_times_min))
    result = stats.kstest(np.asarray(offsets), stats.uniform(loc=-60, scale=120).cdf)
    assert result.pvalue > 1e-3


def test_intensity_uniform_over_classes():
    rng = np.random.default_rng(3)
    counts = {c: 0 for c in INTENSITY_CLASSES}
    n = 3000
    for _ in range(n):
        counts[sample_scenario(ScenarioConfig(), rng).exercise_intensity] += 1
    for c in INTENSITY_CLASSES:
        assert abs(counts[c] / n - 1 / 3) < 0.04


def test_same_seed_same_scenario():
    s1 = sample_scenario(ScenarioConfig(), np.random.default_rng(9))
    s2 = sample_scenario(ScenarioConfig(), np.random.default_rng(9))
    assert np.array_equal(s1.meal_times_min, s2.meal_times_min)
    assert s1.exercise_intensity == s2.exercise_intensity


def test_cho_rate_integrates_to_total_grams():
    scenario = sample_scenario(zero_width_config(), np.random.default_rng(0))
    grid = np.arange(0.0, 1440.0, 0.5)
    total = sum(scenario.cho_rate_g_per_min(t) * 0.5 for t in grid)
    assert total == pytest.approx(np.sum(scenario.meal_cho_g), rel=1e-9)


def test_scenario_csv_export(tmp_path):
    scenario = sample_scenario(zero_width_config(), np.random.default_rng(0))
    path = tmp_path / "scenario.csv"
    scenario_to_csv(scenario, path, EXERCISE_FACTORS)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "time_min,cho_g_per_min,exercise_intensity"
    assert len(lines) == 1 + 288
    row_420 = lines[1 + 84].split(",")  # minute 420: first meal starts
    assert float(row_420[1]) == pytest.approx(70.0 / 30.0)
    row_965 = lines[1 + 193].split(",")  # minute 965: inside nominal exercise
    assert float(row_965[2]) == pytest.approx(EXERCISE_FACTORS["moderate"])
