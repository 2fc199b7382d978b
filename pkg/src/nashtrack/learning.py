"""Multi-step Q value iteration, driven entirely by observed data.

One game round: improve every player's policy against the opponents'
previous-round policies, collect a buffer of multi-step trajectory tuples
(one exploratory step, then the freshly improved policies for the rest of the
horizon), check excitation, and re-fit every player's Q-function by either
least squares or a linear program over the sampled multi-step backup targets.
Rounds repeat until the largest Q change over the buffer points drops to the
convergence threshold for every player in the same round.  A horizon of 1
reproduces classical value iteration through the identical code path.

Both backends fit the same targets: the least-squares route projects them
onto the feature span through a numerically stable factorization, while the
linear-programming route maximizes a moment-weighted integral of Q subject to
the sampled one-sided backup inequalities plus a large box on the weights.
Problem sizes depend only on the buffer size and the number of basis
functions, never on the horizon.
"""

import csv
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator

from .basis import (
    ORDER_VERSION,
    QFunction,
    features_from_lift,
    monomial_degrees,
    quadratic_tracking_basis,
    state_features,
)
from .errors import (
    ExcitationError,
    LPSolverError,
    SingularFeaturesError,
    TrajectoryDivergedError,
)
from .game import TrackingSample
from .policies import LinearFeedback, ZeroPolicy, improve_policy

DEFAULT_NOISE_RANGES = ((1e-3, 5e-3), (1e-5, 5e-5))
DEFAULT_STEPS_PER_ROUND = 144  # buffer_size * horizon, kept constant across horizons


@dataclass(frozen=True)
class ExploreConfig:
    """Exploration rule for one game round.

    The applied action is the current policy (round 0) or the average of the
    current and previous policies (later rounds), plus a uniform draw from
    the per-player noise interval.
    """

    noise_ranges: tuple = DEFAULT_NOISE_RANGES
    round_index: int = 0
    policies_prev: tuple = ()

    def noise(self, player, rng, dim):
        lo, hi = self.noise_ranges[player]
        return rng.uniform(lo, hi, dim)


def explore_action(policies_now, policies_prev, round_index, state, reference, player, rng, noise_range):
    """Exploratory action for one player at (state, reference), before clamping."""
    current = np.atleast_1d(policies_now[player](state, reference))
    if round_index == 0:
        base = current
    else:
        previous = np.atleast_1d(policies_prev[player](state, reference))
        base = 0.5 * (current + previous)
    lo, hi = noise_range
    return base + rng.uniform(lo, hi, base.shape[0])


@dataclass(frozen=True)
class GameBuffer:
    """One round of multi-step tuples, shared by all players.

    Tuple ``b`` holds the exploratory start (state, reference, applied
    exploratory actions of every player) followed by ``horizon`` observed
    steps with the applied on-policy actions at each.  ``raw_explore_actions``
    keeps the pre-clamp values for diagnostics; everything that touched the
    plant is clamped.
    """

    horizon: int
    size: int
    start_states: np.ndarray  # (B, n)
    start_refs: np.ndarray  # (B, n_r)
    explore_actions: tuple  # per player (B, m_i), as applied
    raw_explore_actions: tuple  # per player (B, m_i), before clamping
    step_states: np.ndarray  # (H, B, n)
    step_refs: np.ndarray  # (H, B, n_r)
    policy_actions: tuple  # per player (H, B, m_i), as applied

    def start_sample(self, b):
        return TrackingSample(
            self.start_states[b],
            self.start_refs[b],
            tuple(a[b] for a in self.explore_actions),
        )


def collect_buffer(plant, policies, explore, horizon, size, rng, spec, start, restart=None):
    """Run `size` multi-step tuples and return the buffer plus the end cursor.

    Each tuple consumes exactly ``horizon`` plant steps: one exploratory step
    followed by ``horizon - 1`` on-policy steps; the tuple's terminal state
    seeds the next tuple unless ``restart`` (an ``rng -> (state, ref)``
    sampler) is given.  Returns ``(buffer, (state, ref))`` so callers can
    chain rounds in simulated time.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n_players = spec.n_players
    state, reference = start
    starts_x = np.empty((size, plant.state_dim))
    starts_r = np.empty((size, plant.ref_dim))
    explore_cols = [np.empty((size, m)) for m in spec.action_dims]
    raw_cols = [np.empty((size, m)) for m in spec.action_dims]
    step_x = np.empty((horizon, size, plant.state_dim))
    step_r = np.empty((horizon, size, plant.ref_dim))
    policy_cols = [np.empty((horizon, size, m)) for m in spec.action_dims]

    for b in range(size):
        if restart is not None:
            state, reference = restart(rng)
        observed = plant.observe(state)
        _require_finite(observed, b, 0)
        starts_x[b] = observed
        starts_r[b] = reference
        applied = []
        for i in range(n_players):
            raw = explore_action(
                policies,
                explore.policies_prev,
                explore.round_index,
                observed,
                reference,
                i,
                rng,
                explore.noise_ranges[i],
            )
            raw_cols[i][b] = raw
            clamped = spec.clamp_action(i, raw)
            explore_cols[i][b] = clamped
            applied.append(clamped)
        state = plant.step(state, tuple(applied))
        reference = plant.ref_step(reference)

        for m in range(1, horizon + 1):
            observed = plant.observe(state)
            _require_finite(observed, b, m)
            step_x[m - 1, b] = observed
            step_r[m - 1, b] = reference
            actions = []
            for i in range(n_players):
                actions.append(spec.clamp_action(i, policies[i](observed, reference)))
                policy_cols[i][m - 1, b] = actions[-1]
            if m < horizon:
                state = plant.step(state, tuple(actions))
                reference = plant.ref_step(reference)

    buffer = GameBuffer(
        horizon=horizon,
        size=size,
        start_states=starts_x,
        start_refs=starts_r,
        explore_actions=tuple(explore_cols),
        raw_explore_actions=tuple(raw_cols),
        step_states=step_x,
        step_refs=step_r,
        policy_actions=tuple(policy_cols),
    )
    return buffer, (state, reference)


def _require_finite(observed, tuple_index, step):
    if not np.all(np.isfinite(observed)):
        raise TrajectoryDivergedError(
            f"non-finite state in buffer tuple {tuple_index}, step {step}",
            step_index=step,
            tuple_index=tuple_index,
        )


def _lift_matrix(basis, states, refs, action_columns, player):
    """(B, d) lifted vectors for a batch; action columns in global player order."""
    columns = []
    for kind, idx in basis.state_signals:
        if kind == "x":
            columns.append(states[:, idx])
        elif kind == "x2":
            columns.append(states[:, idx] ** 2)
        elif kind == "r":
            columns.append(refs[:, idx])
        elif kind == "r2":
            columns.append(refs[:, idx] ** 2)
        else:  # "one"
            columns.append(np.ones(states.shape[0]))
    for j in basis.action_order(player):
        for c in range(basis.action_dims[j]):
            columns.append(action_columns[j][:, c])
    return np.column_stack(columns)


def buffer_features(buffer, basis, player):
    """Feature matrix at the exploratory buffer points (the regression rows)."""
    lifts = _lift_matrix(
        basis, buffer.start_states, buffer.start_refs, buffer.explore_actions, player
    )
    return features_from_lift(lifts)


def _batch_stage_costs(spec, player, states, refs, action_columns):
    error = states - refs
    cost = np.einsum("bn,nm,bm->b", error, spec.state_cost[player], error)
    for j in range(spec.n_players):
        U = action_columns[j]
        cost = cost + np.einsum("bn,nm,bm->b", U, spec.action_cost[player][j], U)
    return cost


def evaluation_targets(buffer, q_prev, spec, horizon=None, discount=None):
    """Feature rows and multi-step backup targets for one player.

    Row b's target is the exploratory stage cost, plus the discounted
    on-policy stage costs up to the horizon, plus the discounted previous-Q
    value at the horizon's on-policy sample.  ``horizon`` may be any value up
    to the buffer's own, enabling like-for-like horizon comparisons on shared
    data.
    """
    player = q_prev.player
    basis = q_prev.basis
    gamma = spec.discount if discount is None else float(discount)
    horizon = buffer.horizon if horizon is None else int(horizon)
    if not 1 <= horizon <= buffer.horizon:
        raise ValueError(f"horizon must be in [1, {buffer.horizon}], got {horizon}")

    psi = buffer_features(buffer, basis, player)
    z = _batch_stage_costs(
        spec, player, buffer.start_states, buffer.start_refs, buffer.explore_actions
    )
    for m in range(1, horizon):
        actions_m = [buffer.policy_actions[j][m - 1] for j in range(spec.n_players)]
        z = z + gamma**m * _batch_stage_costs(
            spec, player, buffer.step_states[m - 1], buffer.step_refs[m - 1], actions_m
        )
    terminal_actions = [buffer.policy_actions[j][horizon - 1] for j in range(spec.n_players)]
    terminal_lift = _lift_matrix(
        basis,
        buffer.step_states[horizon - 1],
        buffer.step_refs[horizon - 1],
        terminal_actions,
        player,
    )
    z = z + gamma**horizon * features_from_lift(terminal_lift) @ q_prev.weights
    return psi, z


def poe_check(buffer, basis, delta, player, scaled=False):
    """Minimum eigenvalue of the feature Gram matrix and whether it clears delta.

    ``scaled=True`` equilibrates feature columns to unit norm first.  Rank
    deficiency is invariant under that scaling, but the raw Gram of features
    spanning many decades (e.g. glucose signals to the fourth power next to
    sub-milliunit doses) puts the honest minimum eigenvalue below float
    noise, so extreme-scale runs gate on the scaled variant instead.
    """
    psi = buffer_features(buffer, basis, player)
    if scaled:
        psi = psi / _column_scales(psi)
    gram = psi.T @ psi / buffer.size
    smallest = float(np.linalg.eigvalsh(gram).min())
    return smallest, smallest >= delta


def require_poe(buffer, basis, delta, player, scaled=False):
    """Excitation gate used by the driver before every evaluation."""
    smallest, ok = poe_check(buffer, basis, delta, player, scaled=scaled)
    if not ok:
        raise ExcitationError(
            f"persistence of excitation failed for player {player}: "
            f"min eigenvalue {smallest:.3e} < {delta:.3e}; enrich exploration",
            player=player,
            min_eigenvalue=smallest,
        )
    return smallest


def _column_scales(psi):
    scales = np.linalg.norm(psi, axis=0)
    scales[scales == 0.0] = 1.0
    return scales


def _own_diag_monomials(basis, player):
    """Feature indices of the player's own squared-action monomials."""
    d = basis.lift_dim
    iu = np.triu_indices(d)
    ds = basis.state_feature_dim
    own = np.arange(ds, ds + basis.action_dims[player])
    return np.flatnonzero((iu[0] == iu[1]) & np.isin(iu[0], own))


def _curvature_bounds(basis, player, cfg):
    """Per-weight lower bounds enforcing a floor on own-action curvature.

    Returns None when the floor is off.  The floor pins the own
    squared-action coefficients from below; it is an explicit deviation from
    the plain projection, meant for configurations whose dosing excitation is
    too small to identify those coefficients against state-aliasing residuals
    (the floor only binds when the data says nothing, and any Q consistent
    with the known stage cost has at least the stage's own-action curvature).
    """
    if cfg.curvature_floor is None:
        return None
    floor = cfg.curvature_floor
    floor = floor[player] if isinstance(floor, (tuple, list)) else float(floor)
    lower = np.full(basis.n_features, -np.inf)
    lower[_own_diag_monomials(basis, player)] = floor
    return lower


def ls_evaluate(buffer, q_prev, spec, cfg, horizon=None):
    """Least-squares policy evaluation: fit the multi-step targets exactly.

    Solves the normal problem through a rank-revealing factorization on
    column-equilibrated features rather than the literal inverse.  Rank
    deficiency is an error unless ``cfg.allow_rank_deficient`` opts into the
    minimum-norm solution; that is required when the basis is redundant on
    the reachable data by construction (a constant reference setpoint makes
    every reference-power monomial an exact multiple of a lower one), in
    which case the fitted values, and with them the improved policy on that
    data manifold, are still uniquely determined.
    """
    psi, z = evaluation_targets(buffer, q_prev, spec, horizon, cfg.discount)
    scales = _column_scales(psi)
    lower = _curvature_bounds(q_prev.basis, q_prev.player, cfg)
    if lower is None:
        solution, _, rank, _ = np.linalg.lstsq(psi / scales, z, rcond=cfg.lstsq_rcond)
        if rank < psi.shape[1] and not cfg.allow_rank_deficient:
            raise SingularFeaturesError(
                f"feature matrix rank {rank} < {psi.shape[1]} for player {q_prev.player}"
            )
    else:
        solution = _floored_min_norm_lstsq(psi / scales, z, lower * scales, cfg.lstsq_rcond)
    return QFunction(q_prev.basis, solution / scales, q_prev.player)


def _floored_min_norm_lstsq(A, y, lower, rcond=None):
    """Least squares with lower bounds on a handful of coordinates.

    Pin-and-resolve active set: solve unconstrained (minimum-norm, so
    null-space components stay zero on redundant bases), pin any coordinate
    below its floor to the floor, refit the rest, repeat.  Pinning is
    monotone, so this terminates after at most one pass per bounded
    coordinate; pinned coordinates are never released, which keeps the solve
    deterministic and stable at the price of exact optimality in corner
    cases where a floor stops binding after others activate.
    """
    bounded = np.flatnonzero(np.isfinite(lower))
    pinned = np.zeros(len(bounded), dtype=bool)
    while True:
        fixed = bounded[pinned]
        free = np.setdiff1d(np.arange(A.shape[1]), fixed)
        target = y - A[:, fixed] @ lower[fixed] if fixed.size else y
        free_solution, _, _, _ = np.linalg.lstsq(A[:, free], target, rcond=rcond)
        solution = np.zeros(A.shape[1])
        solution[fixed] = lower[fixed]
        solution[free] = free_solution
        violated = solution[bounded] < lower[bounded]
        if not np.any(violated & ~pinned):
            return solution
        pinned |= violated


def lp_moment_vector(basis, cfg, psi=None):
    """Objective coefficients for the LP backend, one per monomial.

    ``moments`` in the config selects all-ones weighting (the default), the
    empirical moments of the collected features, or an explicit per-degree
    table {degree: vector} matched against each monomial's raw degree.
    """
    moments = cfg.lp_moments
    if isinstance(moments, str):
        if moments == "ones":
            return np.ones(basis.n_features)
        if moments == "empirical":
            if psi is None:
                raise ValueError("empirical moments need collected features")
            return psi.mean(axis=0)
        raise ValueError(f"unknown lp_moments setting {moments!r}")
    if isinstance(moments, dict):
        degrees = monomial_degrees(basis)
        out = np.empty(basis.n_features)
        for degree in np.unique(degrees):
            block = np.asarray(moments[int(degree)], dtype=float)
            out[degrees == degree] = block
        return out
    vector = np.asarray(moments, dtype=float)
    if vector.shape != (basis.n_features,):
        raise ValueError(f"lp_moments: expected length {basis.n_features}")
    return vector


def lp_evaluate(buffer, q_prev, spec, cfg, horizon=None):
    """Linear-programming policy evaluation.

    Maximizes the moment-weighted sum of weights subject to the sampled
    backup inequalities (features' w <= target, per tuple) and the box
    |w_j| <= w_max.  A weight landing on the box means the relaxation, not
    the data, decided it; that is surfaced as a warning.
    """
    psi, z = evaluation_targets(buffer, q_prev, spec, horizon, cfg.discount)
    scales = _column_scales(psi)
    objective = lp_moment_vector(q_prev.basis, cfg, psi)
    lower = _curvature_bounds(q_prev.basis, q_prev.player, cfg)
    if lower is None:
        lower = np.full(psi.shape[1], -np.inf)
    result = linprog(
        c=-(objective / scales),
        A_ub=psi / scales,
        b_ub=z,
        bounds=[
            (max(-cfg.w_max, lb) * s, cfg.w_max * s) for lb, s in zip(lower, scales)
        ],
        method="highs",
    )
    if result.status != 0 or result.x is None:
        raise LPSolverError(
            f"policy-evaluation LP failed for player {q_prev.player}: "
            f"status {result.status} ({result.message})",
            status=result.status,
        )
    weights = result.x / scales
    binding = np.abs(weights) >= cfg.w_max * (1.0 - 1e-9)
    if np.any(binding):
        warnings.warn(
            f"player {q_prev.player}: {int(binding.sum())} LP weight(s) at the "
            f"box bound {cfg.w_max:g}; the relaxation, not the data, determined them",
            RuntimeWarning,
            stacklevel=2,
        )
    return QFunction(q_prev.basis, weights, q_prev.player)


@dataclass(frozen=True)
class Q0ScaleProfile:
    """Initialization profile: base magnitude plus own-action multipliers.

    ``seed_gains`` optionally embeds a starting feedback policy: per player,
    a gain row over the state features such that the very first improvement
    step returns exactly that feedback.  The gain norm must stay below
    1/sqrt(multiplier) or the embedded cross terms destroy positive
    definiteness (checked).
    """

    base: float = 1.0
    action_multipliers: tuple = (1e5, 1e8)
    seed_gains: tuple = None


def init_q0(basis, spec, profile):
    """Positive-definite starting Q for every player.

    Every squared-slot monomial gets the base weight; the player's own
    squared-action monomials get base * multiplier, which makes the very
    first improvement step cautious about that player's own action.  With
    seed gains, matching state-action cross weights are added so the first
    improvement reproduces the seed policy instead of the zero policy.
    """
    d = basis.lift_dim
    ds = basis.state_feature_dim
    iu = np.triu_indices(d)
    diagonal = iu[0] == iu[1]
    qs = []
    for player in range(spec.n_players):
        weights = np.zeros(basis.n_features)
        weights[diagonal] = profile.base
        m_own = basis.action_dims[player]
        own_slots = list(range(ds, ds + m_own))
        own_diag = diagonal & np.isin(iu[0], own_slots)
        curvature = profile.base * profile.action_multipliers[player]
        weights[own_diag] = curvature
        if profile.seed_gains is not None and profile.seed_gains[player] is not None:
            gain = np.atleast_2d(np.asarray(profile.seed_gains[player], dtype=float))
            # improve(Q0) = -W_uu^-1 W_su' phi; W is diagonal elsewhere, so
            # W_su = -curvature * gain, and cross monomials carry 2 W_offdiag
            for row, slot in enumerate(own_slots):
                for col in range(ds):
                    index = np.flatnonzero((iu[0] == col) & (iu[1] == slot))[0]
                    weights[index] = -2.0 * curvature * gain[row, col]
        q = QFunction(basis, weights, player)
        if np.linalg.eigvalsh(q.matrix()).min() <= 0.0:
            raise ValueError(f"constructed Q0 for player {player} is not positive definite")
        qs.append(q)
    return qs


@dataclass(frozen=True)
class EvalConfig:
    """Knobs of the learning driver; see the shipped configs for worked setups."""

    backend: str = "ls"
    horizon: object = 3  # int, or callable round -> int
    buffer_size: int = None
    tol: float = 1e-10
    max_rounds: int = 2000
    poe_delta: float = 1e-8  # None: skip the excitation gate (log the value only)
    discount: float = None  # None: use the game's discount
    noise_ranges: tuple = DEFAULT_NOISE_RANGES
    w_max: float = 1e9
    lp_moments: object = "ones"
    restart_each_tuple: bool = False
    record_trajectory: bool = False
    poe_scaled: bool = False
    allow_rank_deficient: bool = False
    curvature_floor: object = None  # None: plain projection; float or per-player floats
    lstsq_rcond: float = None  # SVD cutoff for the equilibrated solve; None: machine
    damping: float = 1.0  # evaluation update w <- (1-a) w_prev + a w_fit; 1 = literal

    def horizon_at(self, round_index):
        h = self.horizon(round_index) if callable(self.horizon) else self.horizon
        h = int(h)
        if h < 1:
            raise ValueError("horizon must be >= 1")
        return h

    def buffer_size_at(self, round_index, n_features):
        if self.buffer_size is not None:
            size = int(self.buffer_size)
        else:
            size = max(1, round(DEFAULT_STEPS_PER_ROUND / self.horizon_at(round_index)))
        if size < n_features:
            raise ValueError(
                f"buffer size {size} smaller than the number of basis functions "
                f"{n_features}; the excitation condition cannot hold"
            )
        return size


@dataclass
class IterationReport:
    """Per-round diagnostics; one entry per player in each tuple field."""

    round_index: int
    weights: tuple
    delta_sup: tuple
    residual_or_objective: tuple
    poe_lambda_min: tuple
    wall_clock_s: float


@dataclass
class MSQVIResult:
    q_functions: tuple
    policies: tuple
    reports: list
    converged: bool
    rounds: int
    final_buffer: object = None
    trajectory: list = None


def run_msqvi(plant, spec, basis, cfg, q0_list, rng, initial=None):
    """Run multi-step Q value iteration to convergence (or the round cap).

    Policy improvement uses the opponents' previous-round policies, the
    buffer is collected under the freshly improved policies with exploratory
    first steps, and each player's evaluation runs through the configured
    backend.  Terminates when every player's largest Q change over the
    current buffer points is at most ``cfg.tol`` in the same round; the
    returned policies are improved once more from the final Q-functions.
    A horizon of 1 is classical value iteration.
    """
    n_players = spec.n_players
    if len(q0_list) != n_players:
        raise ValueError(f"expected {n_players} initial Q-functions, got {len(q0_list)}")
    evaluate = {"ls": ls_evaluate, "lp": lp_evaluate}[cfg.backend]

    q_current = list(q0_list)
    policies_prev = tuple(ZeroPolicy(m) for m in spec.action_dims)
    cursor = plant.initial(rng) if initial is None else initial
    restart = None
    if cfg.restart_each_tuple:
        restart = getattr(plant, "restart_state", plant.initial)

    reports = []
    trajectory = [] if cfg.record_trajectory else None
    converged = False
    buffer = None
    policies = policies_prev

    for round_index in range(cfg.max_rounds):
        clock = time.perf_counter()
        policies = tuple(
            improve_policy(q_current[i], [policies_prev[j] for j in spec.opponents(i)], i)
            for i in range(n_players)
        )
        horizon = cfg.horizon_at(round_index)
        size = cfg.buffer_size_at(round_index, basis.n_features)
        explore = ExploreConfig(
            noise_ranges=cfg.noise_ranges,
            round_index=round_index,
            policies_prev=policies_prev,
        )
        buffer, cursor = collect_buffer(
            plant, policies, explore, horizon, size, rng, spec, cursor, restart=restart
        )
        if trajectory is not None:
            trajectory.extend(_applied_steps(buffer))

        weights, deltas, diagnostics, poe_values = [], [], [], []
        for i in range(n_players):
            if cfg.poe_delta is None:
                poe_values.append(poe_check(buffer, basis, -np.inf, i, scaled=cfg.poe_scaled)[0])
            else:
                poe_values.append(require_poe(buffer, basis, cfg.poe_delta, i, scaled=cfg.poe_scaled))
            q_next = evaluate(buffer, q_current[i], spec, cfg)
            if cfg.damping != 1.0:
                blended = (1.0 - cfg.damping) * q_current[i].weights + cfg.damping * q_next.weights
                q_next = QFunction(basis, blended, i)
            psi = buffer_features(buffer, basis, i)
            deltas.append(float(np.abs(psi @ (q_next.weights - q_current[i].weights)).max()))
            if cfg.backend == "ls":
                _, z = evaluation_targets(buffer, q_current[i], spec, None, cfg.discount)
                diagnostics.append(float(np.linalg.norm(psi @ q_next.weights - z)))
            else:
                diagnostics.append(float(lp_moment_vector(basis, cfg, psi) @ q_next.weights))
            weights.append(q_next.weights)
            q_current[i] = q_next

        reports.append(
            IterationReport(
                round_index=round_index,
                weights=tuple(weights),
                delta_sup=tuple(deltas),
                residual_or_objective=tuple(diagnostics),
                poe_lambda_min=tuple(poe_values),
                wall_clock_s=time.perf_counter() - clock,
            )
        )
        policies_prev = policies
        if all(delta <= cfg.tol for delta in deltas):
            converged = True
            break

    final_policies = tuple(
        improve_policy(q_current[i], [policies_prev[j] for j in spec.opponents(i)], i)
        for i in range(n_players)
    )
    return MSQVIResult(
        q_functions=tuple(q_current),
        policies=final_policies,
        reports=reports,
        converged=converged,
        rounds=len(reports),
        final_buffer=buffer,
        trajectory=trajectory,
    )


def _applied_steps(buffer):
    """The plant steps actually applied during a buffer, in simulated order."""
    samples = []
    for b in range(buffer.size):
        samples.append(buffer.start_sample(b))
        for m in range(1, buffer.horizon):
            samples.append(
                TrackingSample(
                    buffer.step_states[m - 1, b],
                    buffer.step_refs[m - 1, b],
                    tuple(buffer.policy_actions[j][m - 1, b] for j in range(len(buffer.policy_actions))),
                )
            )
    return samples


class MultiStepQLearner(BaseEstimator):
    """Estimator facade over :func:`run_msqvi`.

    ``fit`` consumes a plant and its game spec; afterwards ``predict`` maps
    rows of ``[state, reference]`` to the clamped equilibrium actions of all
    players.  All constructor arguments are plain values so ``get_params`` /
    ``set_params`` compose with parameter sweeps.
    """

    def __init__(
        self,
        backend="ls",
        horizon=3,
        buffer_size=None,
        tol=1e-10,
        max_rounds=2000,
        poe_delta=1e-8,
        noise_ranges=DEFAULT_NOISE_RANGES,
        q0_base=1.0,
        q0_action_multipliers=(1e5, 1e8),
        w_max=1e9,
        lp_moments="ones",
        restart_each_tuple=False,
        random_state=None,
    ):
        self.backend = backend
        self.horizon = horizon
        self.buffer_size = buffer_size
        self.tol = tol
        self.max_rounds = max_rounds
        self.poe_delta = poe_delta
        self.noise_ranges = noise_ranges
        self.q0_base = q0_base
        self.q0_action_multipliers = q0_action_multipliers
        self.w_max = w_max
        self.lp_moments = lp_moments
        self.restart_each_tuple = restart_each_tuple
        self.random_state = random_state

    def fit(self, plant, game, basis=None):
        basis = basis or quadratic_tracking_basis(
            game.state_dim, game.ref_dim, game.action_dims
        )
        cfg = EvalConfig(
            backend=self.backend,
            horizon=self.horizon,
            buffer_size=self.buffer_size,
            tol=self.tol,
            max_rounds=self.max_rounds,
            poe_delta=self.poe_delta,
            noise_ranges=tuple(self.noise_ranges),
            w_max=self.w_max,
            lp_moments=self.lp_moments,
            restart_each_tuple=self.restart_each_tuple,
        )
        profile = Q0ScaleProfile(
            base=self.q0_base, action_multipliers=tuple(self.q0_action_multipliers)
        )
        rng = np.random.default_rng(self.random_state)
        result = run_msqvi(plant, game, basis, cfg, init_q0(basis, game, profile), rng)
        self.game_ = game
        self.basis_ = basis
        self.result_ = result
        self.policies_ = result.policies
        self.weights_ = np.vstack([q.weights for q in result.q_functions])
        self.converged_ = result.converged
        self.n_rounds_ = result.rounds
        return self

    def predict(self, X):
        if not hasattr(self, "policies_"):
            raise RuntimeError("fit must run before predict")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, nr = self.game_.state_dim, self.game_.ref_dim
        if X.shape[1] != n + nr:
            raise ValueError(f"expected rows of length {n + nr}, got {X.shape[1]}")
        rows = []
        for row in X:
            actions = [
                self.game_.clamp_action(i, policy(row[:n], row[n:]))
                for i, policy in enumerate(self.policies_)
            ]
            rows.append(np.concatenate(actions))
        return np.vstack(rows)


def write_iteration_log(path, reports, n_players):
    """CSV log: round, player, delta_sup, residual_or_objective, poe_lambda_min, w_1..w_K."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        n_features = len(reports[0].weights[0]) if reports else 0
        writer.writerow(
            ["round", "player", "delta_sup", "residual_or_objective", "poe_lambda_min"]
            + [f"w_{k + 1}" for k in range(n_features)]
        )
        for report in reports:
            for i in range(n_players):
                writer.writerow(
                    [
                        report.round_index,
                        i,
                        f"{report.delta_sup[i]:.17g}",
                        f"{report.residual_or_objective[i]:.17g}",
                        f"{report.poe_lambda_min[i]:.17g}",
                    ]
                    + [f"{w:.17g}" for w in report.weights[i]]
                )


def write_weights_checkpoint(path, q_functions):
    """Weight checkpoint CSV; the header names the monomial order version."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["monomial_order", ORDER_VERSION])
        writer.writerow(["player"] + [f"w_{k + 1}" for k in range(len(q_functions[0].weights))])
        for q in q_functions:
            writer.writerow([q.player] + [f"{w:.17g}" for w in q.weights])


def read_weights_checkpoint(path, basis):
    """Rebuild per-player Q-functions from a checkpoint written by this package."""
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][0] != "monomial_order":
        raise ValueError(f"{path}: not a weight checkpoint")
    if rows[0][1] != ORDER_VERSION:
        raise ValueError(
            f"{path}: monomial order {rows[0][1]!r} does not match {ORDER_VERSION!r}"
        )
    qs = []
    for row in rows[2:]:
        player = int(row[0])
        weights = np.array([float(v) for v in row[1:]])
        qs.append(QFunction(basis, weights, player))
    return sorted(qs, key=lambda q: q.player)


def write_policy_gains(path, policies, basis):
    """Serialize linear-feedback gains, one row per (player, output coordinate)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["monomial_order", ORDER_VERSION])
        writer.writerow(
            ["player", "row"] + [f"g_{k + 1}" for k in range(basis.state_feature_dim)]
        )
        for i, policy in enumerate(policies):
            if not isinstance(policy, LinearFeedback):
                raise ValueError(f"player {i}: only linear-feedback policies serialize")
            for row_index, row in enumerate(policy.gain):
                writer.writerow([i, row_index] + [f"{g:.17g}" for g in row])


def read_policy_gains(path, basis):
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][0] != "monomial_order" or rows[0][1] != ORDER_VERSION:
        raise ValueError(f"{path}: not a policy-gain file in the current monomial order")
    by_player = {}
    for row in rows[2:]:
        by_player.setdefault(int(row[0]), []).append([float(v) for v in row[2:]])
    return [
        LinearFeedback(basis, np.array(by_player[i])) for i in sorted(by_player)
    ]
