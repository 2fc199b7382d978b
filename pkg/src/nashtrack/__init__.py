"""Model-free equilibrium tracking control for N-player nonzero-sum games.

The package learns feedback controllers for unknown discrete-time games by
multi-step Q value iteration with linear function approximation, using either
a least-squares or a linear-programming policy-evaluation backend, and ships
exact oracles on linear-quadratic games plus a desk-scale dual-hormone
glucose-control simulation to exercise the pipeline end to end.
"""

__version__ = "0.1.0"

from .basis import (
    ORDER_VERSION,
    BasisSpec,
    QFunction,
    QuadraticFeatures,
    features,
    monomial_labels,
    q_eval,
    quadratic_tracking_basis,
)
from .game import (
    GameSpec,
    Plant,
    TrackingSample,
    discounted_cost,
    rollout,
    stage_cost,
    tracking_error,
)
from .learning import (
    EvalConfig,
    ExploreConfig,
    GameBuffer,
    IterationReport,
    MSQVIResult,
    MultiStepQLearner,
    Q0ScaleProfile,
    collect_buffer,
    explore_action,
    init_q0,
    lp_evaluate,
    ls_evaluate,
    poe_check,
    run_msqvi,
)
from .metrics import GlycaemicSummary, summarize_trace
from .oracle import ExactLQSolution, brute_force_dp, coupled_bellman_apply, exact_vi_lq
from .policies import LinearFeedback, NumericArgmin, ZeroPolicy, improve_policy

__all__ = [
    "__version__",
    "ORDER_VERSION",
    "BasisSpec",
    "QFunction",
    "QuadraticFeatures",
    "features",
    "monomial_labels",
    "q_eval",
    "quadratic_tracking_basis",
    "GameSpec",
    "Plant",
    "TrackingSample",
    "discounted_cost",
    "rollout",
    "stage_cost",
    "tracking_error",
    "EvalConfig",
    "ExploreConfig",
    "GameBuffer",
    "IterationReport",
    "MSQVIResult",
    "MultiStepQLearner",
    "Q0ScaleProfile",
    "collect_buffer",
    "explore_action",
    "init_q0",
    "lp_evaluate",
    "ls_evaluate",
    "poe_check",
    "run_msqvi",
    "GlycaemicSummary",
    "summarize_trace",
    "ExactLQSolution",
    "brute_force_dp",
    "coupled_bellman_apply",
    "exact_vi_lq",
    "LinearFeedback",
    "NumericArgmin",
    "ZeroPolicy",
    "improve_policy",
]
