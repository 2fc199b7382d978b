"""Minimal glucose-insulin-glucagon metabolic model.

A deliberately small stand-in for a full clinical simulator: a Bergman-style
minimal model extended with one glucagon action compartment, a two-compartment
meal absorption chain, and a multiplicative exercise sensitivity factor.
Parameters are documented here and chosen so that open-loop meal responses
peak 60-120 minutes after the meal starts; clinical fidelity beyond that is a
non-goal.

Model states (continuous time, minutes):

    G    plasma glucose [mg/dL]
    Xi   insulin action [1/min]
    Xn   glucagon action [mg/dL/min]
    Q1   gut carbohydrate, first compartment [g]
    Q2   gut carbohydrate, second compartment [g]

    dG/dt  = -p1 (G - Gb) - ex(t) * Xi * G + Xn + carb_factor * Q2 / tau_meal
    dXi/dt = -p2 (Xi - si * uI)         uI: insulin rate [U/min]
    dXn/dt = -p4 (Xn - sn * uN)         uN: glucagon rate [mg/min]
    dQ1/dt = -Q1 / tau_meal + cho(t)    cho: ingestion rate [g/min]
    dQ2/dt = (Q1 - Q2) / tau_meal

Insulin action strictly lowers dG/dt (through -Xi*G, G > 0) and glucagon
action strictly raises it (+Xn); exercise multiplies insulin action.  With no
hormones and no meals the model sits exactly at basal.

The controller-facing state follows the two-signal convention: x1 is the CGM
reading [mg/dL] sampled every 5 minutes, x2 = (x1_k - x1_{k-6})/30 is the
30-minute rate of change [mg/dL/min], with the lagged reading taken as 0
until six samples exist.
"""

from dataclasses import dataclass

import numpy as np

from ..basis import BasisSpec
from ..errors import ModelBlowupError
from ..game import GameSpec, Plant
from .scenario import ScenarioConfig, sample_scenario

CGM_PERIOD_MIN = 5.0
MINUTES_PER_DAY = 1440.0

EXERCISE_FACTORS = {"light": 1.3, "moderate": 1.6, "intense": 2.0}


@dataclass(frozen=True)
class GlucosePatient:
    """Parameter record for the minimal metabolic model."""

    basal_glucose: float = 130.0  # Gb [mg/dL]
    glucose_effectiveness: float = 0.006  # p1 [1/min]
    insulin_action_rate: float = 0.025  # p2 [1/min]
    insulin_sensitivity: float = 0.36  # si [(1/min) per (U/min)]
    glucagon_action_rate: float = 0.03  # p4 [1/min]
    glucagon_sensitivity: float = 150.0  # sn [(mg/dL/min) per (mg/min)]
    meal_time_constant: float = 20.0  # tau_meal [min]
    carb_factor: float = 6.0  # [mg/dL per g CHO]
    exercise_factors: tuple = (
        ("light", EXERCISE_FACTORS["light"]),
        ("moderate", EXERCISE_FACTORS["moderate"]),
        ("intense", EXERCISE_FACTORS["intense"]),
    )
    cgm_noise_sd: float = 2.0  # [mg/dL]

    def exercise_factor(self, intensity):
        return dict(self.exercise_factors)[intensity]


@dataclass(frozen=True)
class GlucoseState:
    """Internal plant state: model compartments plus CGM bookkeeping."""

    model: tuple  # (G, Xi, Xn, Q1, Q2)
    step: int
    cgm: float  # current reading x1_k
    past: tuple  # (x1_{k-6}, ..., x1_{k-1}), zeros until measured


def _derivatives(patient, y, insulin_rate, glucagon_rate, cho_rate, ex_factor):
    G, Xi, Xn, Q1, Q2 = y
    dG = (
        -patient.glucose_effectiveness * (G - patient.basal_glucose)
        - ex_factor * Xi * G
        + Xn
        + patient.carb_factor * Q2 / patient.meal_time_constant
    )
    dXi = -patient.insulin_action_rate * (Xi - patient.insulin_sensitivity * insulin_rate)
    dXn = -patient.glucagon_action_rate * (Xn - patient.glucagon_sensitivity * glucagon_rate)
    dQ1 = -Q1 / patient.meal_time_constant + cho_rate
    dQ2 = (Q1 - Q2) / patient.meal_time_constant
    return np.array([dG, dXi, dXn, dQ1, dQ2])


def glucose_step(patient, model_state, insulin_u_per_5min, glucagon_mg_per_5min, scenario_input):
    """Advance the model five simulated minutes.

    ``scenario_input`` is the pair (cho ingestion rate [g/min], exercise
    factor) held constant over the window.  Doses are per-window totals and
    are floored at zero.  Returns ``(next_model_state, glucose_mg_dl)``; the
    returned glucose is the noiseless sensor input.
    """
    cho_rate, ex_factor = scenario_input
    insulin_rate = max(float(insulin_u_per_5min), 0.0) / CGM_PERIOD_MIN
    glucagon_rate = max(float(glucagon_mg_per_5min), 0.0) / CGM_PERIOD_MIN
    y = np.asarray(model_state, dtype=float)
    dt = 1.0
    for _ in range(int(CGM_PERIOD_MIN / dt)):
        k1 = _derivatives(patient, y, insulin_rate, glucagon_rate, cho_rate, ex_factor)
        k2 = _derivatives(patient, y + 0.5 * dt * k1, insulin_rate, glucagon_rate, cho_rate, ex_factor)
        k3 = _derivatives(patient, y + 0.5 * dt * k2, insulin_rate, glucagon_rate, cho_rate, ex_factor)
        k4 = _derivatives(patient, y + dt * k3, insulin_rate, glucagon_rate, cho_rate, ex_factor)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise ModelBlowupError(f"non-finite metabolic state: {y}")
    return tuple(float(v) for v in y), float(y[0])


class DailySchedule:
    """Per-day realized scenarios, sampled lazily and deterministically.

    Day ``d`` is drawn from a seed sequence keyed by (seed, d), so schedules
    are reproducible regardless of trial length or evaluation order.
    """

    def __init__(self, config, seed, exercise_factors=None):
        self.config = config
        self.seed = int(seed)
        self.exercise_factors = dict(exercise_factors or EXERCISE_FACTORS)
        self._days = {}

    def day(self, index):
        if index not in self._days:
            rng = np.random.default_rng(np.random.SeedSequence((self.seed, index)))
            self._days[index] = sample_scenario(self.config, rng)
        return self._days[index]

    def cho_rate(self, t_min):
        day, local = divmod(float(t_min), MINUTES_PER_DAY)
        return self.day(int(day)).cho_rate_g_per_min(local)

    def exercise_factor(self, t_min):
        day, local = divmod(float(t_min), MINUTES_PER_DAY)
        scenario = self.day(int(day))
        if scenario.in_exercise(local):
            return self.exercise_factors[scenario.exercise_intensity]
        return 1.0


def quiet_schedule(seed=0):
    """No meals, no exercise; the plant then sits at basal."""
    config = ScenarioConfig(
        meal_times_min=(),
        meal_cho_g=(),
        meal_durations_min=(),
        exercise_duration_min=0.0,
        randomize_intensity=False,
        exercise_duration_jitter_frac=0.0,
    )
    return DailySchedule(config, seed)


class GlucosePlant(Plant):
    """Dual-hormone patient plant: player 0 doses insulin, player 1 glucagon.

    The observed state is [x1, x2] as defined above; everything else
    (compartments, meal schedule, sensor noise) stays internal.  Sensor noise
    is drawn lazily per step index from a dedicated generator, so stepping the
    same state twice gives identical readings.
    """

    # commercial sensors clip; keeps readings positive for the risk indices
    CGM_RANGE = (20.0, 500.0)

    def __init__(self, patient, schedule, noise_seed=None, setpoint=120.0, suspend_below=80.0):
        self.patient = patient
        self.schedule = schedule
        self.setpoint = float(setpoint)
        # low-glucose suspend: the pump withholds insulin when the current
        # reading is below this threshold (None disables); standard infusion
        # pump hardware behavior, applied inside the plant, invisible to the
        # learner beyond its effect on the trajectory
        self.suspend_below = suspend_below
        self.state_dim = 2
        self.ref_dim = 2
        self._noise_rng = (
            None if noise_seed is None else np.random.default_rng(noise_seed)
        )
        self._noise_cache = []

    def _noise(self, step):
        if self._noise_rng is None:
            return 0.0
        while len(self._noise_cache) <= step:
            self._noise_cache.append(
                float(self._noise_rng.normal(0.0, self.patient.cgm_noise_sd))
            )
        return self._noise_cache[step]

    def _reading(self, glucose, step):
        lo, hi = self.CGM_RANGE
        return float(np.clip(glucose + self._noise(step), lo, hi))

    def initial(self, rng, x1_range=(70.0, 180.0)):
        """Fresh trial start: x1_0 uniform in ``x1_range``, empty compartments."""
        g0 = float(rng.uniform(*x1_range))
        state = GlucoseState(
            model=(g0, 0.0, 0.0, 0.0, 0.0),
            step=0,
            cgm=g0,
            past=(0.0,) * 6,
        )
        return state, np.array([self.setpoint, 0.0])

    def restart_state(self, rng):
        """Rich mid-trial state draw for restart-based data collection.

        Unlike :meth:`initial`, this samples time of day, gut carbohydrate
        load, hormone action levels and a glucose trend, so regression data
        anchored at these draws covers the state space a closed-loop trial
        actually visits.
        """
        g0 = float(rng.uniform(60.0, 320.0))
        trend = float(rng.uniform(-2.0, 2.0))  # mg/dL/min over 30 minutes
        state = GlucoseState(
            model=(
                g0,
                float(rng.uniform(0.0, 0.02)),
                float(rng.uniform(0.0, 0.3)),
                float(rng.uniform(0.0, 40.0)),
                float(rng.uniform(0.0, 40.0)),
            ),
            step=int(rng.integers(0, int(MINUTES_PER_DAY / CGM_PERIOD_MIN))),
            cgm=g0,
            past=(g0 - 30.0 * trend,) * 6,
        )
        return state, np.array([self.setpoint, 0.0])

    def observe(self, state):
        return np.array([state.cgm, (state.cgm - state.past[0]) / 30.0])

    def step(self, state, actions):
        t_min = state.step * CGM_PERIOD_MIN
        scenario_input = (self.schedule.cho_rate(t_min), self.schedule.exercise_factor(t_min))
        insulin = float(np.atleast_1d(actions[0])[0])
        glucagon = float(np.atleast_1d(actions[1])[0])
        if self.suspend_below is not None and state.cgm < self.suspend_below:
            insulin = 0.0
        model, glucose = glucose_step(self.patient, state.model, insulin, glucagon, scenario_input)
        return GlucoseState(
            model=model,
            step=state.step + 1,
            cgm=self._reading(glucose, state.step + 1),
            past=state.past[1:] + (state.cgm,),
        )

    def ref_step(self, reference):
        return np.asarray(reference, dtype=float)


def glucose_game_spec(
    discount=0.95,
    insulin_weight=1.0,
    glucagon_tracking_weight=1e-3,
    rate_weight=1e-6,
    insulin_cost=100.0,
    cross_cost=100.0,
    glucagon_cost=300.0,
    insulin_max_u_per_5min=0.5,
    glucagon_max_mg_per_5min=0.05,
):
    """Two-player game data for the dual-hormone problem.

    The stage cost penalizes only the glucose deviation (x1 - r); the rate
    signal x2 carries a vanishingly small weight purely to keep the state
    cost positive definite.  Doses are nonnegative and capped per 5-minute
    window, mirroring pump hardware.
    """
    state_cost = (
        np.diag([insulin_weight, rate_weight]),
        np.diag([glucagon_tracking_weight, rate_weight]),
    )
    action_cost = (
        (np.array([[insulin_cost]]), np.array([[cross_cost]])),
        (np.array([[cross_cost]]), np.array([[glucagon_cost]])),
    )
    bounds = (
        (np.zeros(1), np.array([insulin_max_u_per_5min])),
        (np.zeros(1), np.array([glucagon_max_mg_per_5min])),
    )
    return GameSpec(
        n_players=2,
        state_dim=2,
        action_dims=(1, 1),
        discount=discount,
        state_cost=state_cost,
        action_cost=action_cost,
        action_bounds=bounds,
        ref_dim=2,
        stable_reference=True,
    )


def glucose_basis():
    """Lift [x1, x2, x1^2, x2^2, r, r^2, a_own, a_other]: 36 monomials."""
    signals = (("x", 0), ("x", 1), ("x2", 0), ("x2", 1), ("r", 0), ("r2", 0))
    return BasisSpec(signals, (1, 1))
