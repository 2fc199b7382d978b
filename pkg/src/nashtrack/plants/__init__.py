from .lq import LinearGamePlant, LQGameSpec, generate_lq_game
from .toy import NonlinearToyPlant, make_toy_game
from .scenario import ScenarioConfig, RealizedScenario, sample_scenario, scenario_to_csv
from .glucose import (
    GlucosePatient,
    GlucosePlant,
    GlucoseState,
    glucose_basis,
    glucose_game_spec,
    glucose_step,
)

__all__ = [
    "LQGameSpec",
    "LinearGamePlant",
    "generate_lq_game",
    "NonlinearToyPlant",
    "make_toy_game",
    "ScenarioConfig",
    "RealizedScenario",
    "sample_scenario",
    "scenario_to_csv",
    "GlucosePatient",
    "GlucosePlant",
    "GlucoseState",
    "glucose_basis",
    "glucose_game_spec",
    "glucose_step",
]
