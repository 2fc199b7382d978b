"""Randomized daily meal and exercise scenarios.

A scenario is one simulated day: six meals (time, carbohydrate grams,
duration) and one exercise bout (time, intensity class, duration).  Nominal
values are perturbed uniformly inside configurable ranges; realizations are
fully determined by the seed.  Scenarios are never announced to the
controllers: they only enter through the plant.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ..validation import frozen_array

INTENSITY_CLASSES = ("light", "moderate", "intense")

NOMINAL_MEAL_TIMES_MIN = (420.0, 600.0, 780.0, 900.0, 1080.0, 1380.0)  # 07:00 .. 23:00
NOMINAL_MEAL_CHO_G = (70.0, 30.0, 90.0, 30.0, 90.0, 25.0)
NOMINAL_MEAL_DURATIONS_MIN = (30.0, 15.0, 45.0, 15.0, 45.0, 20.0)
NOMINAL_EXERCISE_START_MIN = 960.0  # 16:00
NOMINAL_EXERCISE_DURATION_MIN = 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Nominal daily profile plus the width of each uniform perturbation."""

    meal_times_min: tuple = NOMINAL_MEAL_TIMES_MIN
    meal_cho_g: tuple = NOMINAL_MEAL_CHO_G
    meal_durations_min: tuple = NOMINAL_MEAL_DURATIONS_MIN
    exercise_start_min: float = NOMINAL_EXERCISE_START_MIN
    exercise_intensity: str = "moderate"
    exercise_duration_min: float = NOMINAL_EXERCISE_DURATION_MIN
    meal_time_jitter_min: float = 60.0
    meal_cho_jitter_frac: float = 0.40
    meal_duration_jitter_frac: float = 0.50
    exercise_time_jitter_min: float = 60.0
    exercise_duration_jitter_frac: float = 0.50
    randomize_intensity: bool = True

    def __post_init__(self):
        n = len(self.meal_times_min)
        if not (len(self.meal_cho_g) == len(self.meal_durations_min) == n):
            raise ValueError("meal fields must all have the same length")
        if self.exercise_intensity not in INTENSITY_CLASSES:
            raise ValueError(f"exercise_intensity must be one of {INTENSITY_CLASSES}")


@dataclass(frozen=True)
class RealizedScenario:
    """One concrete day, after perturbation."""

    meal_times_min: np.ndarray
    meal_cho_g: np.ndarray
    meal_durations_min: np.ndarray
    exercise_start_min: float
    exercise_intensity: str
    exercise_duration_min: float

    def __post_init__(self):
        object.__setattr__(self, "meal_times_min", frozen_array(self.meal_times_min))
        object.__setattr__(self, "meal_cho_g", frozen_array(self.meal_cho_g))
        object.__setattr__(self, "meal_durations_min", frozen_array(self.meal_durations_min))

    def cho_rate_g_per_min(self, t_min):
        """Carbohydrate ingestion rate at minute ``t_min`` of the day."""
        rate = 0.0
        for start, grams, duration in zip(
            self.meal_times_min, self.meal_cho_g, self.meal_durations_min
        ):
            if start <= t_min < start + duration:
                rate += grams / duration
        return rate

    def in_exercise(self, t_min):
        start = self.exercise_start_min
        return start <= t_min < start + self.exercise_duration_min


def sample_scenario(config, rng):
    """Draw one realized day; every field stays inside its declared range."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = len(config.meal_times_min)
    times = np.asarray(config.meal_times_min) + rng.uniform(
        -config.meal_time_jitter_min, config.meal_time_jitter_min, n
    )
    cho = np.asarray(config.meal_cho_g) * (
        1.0 + rng.uniform(-config.meal_cho_jitter_frac, config.meal_cho_jitter_frac, n)
    )
    durations = np.asarray(config.meal_durations_min) * (
        1.0
        + rng.uniform(-config.meal_duration_jitter_frac, config.meal_duration_jitter_frac, n)
    )
    ex_start = config.exercise_start_min + rng.uniform(
        -config.exercise_time_jitter_min, config.exercise_time_jitter_min
    )
    intensity = (
        INTENSITY_CLASSES[rng.integers(len(INTENSITY_CLASSES))]
        if config.randomize_intensity
        else config.exercise_intensity
    )
    ex_duration = config.exercise_duration_min * (
        1.0
        + rng.uniform(-config.exercise_duration_jitter_frac, config.exercise_duration_jitter_frac)
    )
    durations = np.maximum(durations, 1.0)
    ex_duration = max(ex_duration, 1.0)
    return RealizedScenario(
        meal_times_min=times,
        meal_cho_g=cho,
        meal_durations_min=durations,
        exercise_start_min=float(ex_start),
        exercise_intensity=intensity,
        exercise_duration_min=float(ex_duration),
    )


def scenario_to_csv(scenario, path, exercise_factors, step_min=5.0, day_minutes=1440.0):
    """Write the realized day on a fixed grid: time_min, cho_g_per_min, exercise_intensity."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time_min", "cho_g_per_min", "exercise_intensity"])
        t = 0.0
        while t < day_minutes:
            factor = (
                exercise_factors[scenario.exercise_intensity]
                if scenario.in_exercise(t)
                else 1.0
            )
            writer.writerow([f"{t:.0f}", f"{scenario.cho_rate_g_per_min(t):.6f}", f"{factor:.3f}"])
            t += step_min
