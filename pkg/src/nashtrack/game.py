"""Domain types for N-player discrete-time tracking games.

A game couples a black-box plant (system step plus reference exosystem) with
per-player quadratic stage costs.  The learner only ever observes plant
outputs; plant internals stay behind the :class:`Plant` interface.  All types
are immutable value objects after construction and safe to share across
threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GameDimensionError, TrajectoryDivergedError
from .validation import as_vector, check_positive_int, check_spd, check_unit_interval, frozen_array


@dataclass(frozen=True)
class GameSpec:
    """Dimensions, discount and cost data for an N-player tracking game.

    ``state_cost[i]`` is player i's n-by-n weight on the tracking error and
    ``action_cost[i][j]`` is the m_j-by-m_j weight player i places on player
    j's action.  All cost matrices must be symmetric positive definite.
    ``action_bounds[i]`` is a pair of vectors (lower, upper) describing the
    compact per-coordinate action box of player i; actions are clamped to it
    wherever they are physically applied.

    A discount of exactly 1 is admitted only when ``stable_reference`` is set
    by whoever constructed the plant; stability is declared, never detected.
    """

    n_players: int
    state_dim: int
    action_dims: tuple
    discount: float
    state_cost: tuple
    action_cost: tuple
    action_bounds: tuple
    ref_dim: int = 0
    stable_reference: bool = False

    def __post_init__(self):
        n_players = check_positive_int(self.n_players, "n_players")
        state_dim = check_positive_int(self.state_dim, "state_dim")
        ref_dim = self.ref_dim or state_dim
        check_positive_int(ref_dim, "ref_dim")
        dims = tuple(check_positive_int(m, f"action_dims[{i}]") for i, m in enumerate(self.action_dims))
        if len(dims) != n_players:
            raise GameDimensionError(
                f"action_dims: expected {n_players} entries, got {len(dims)}",
                field="action_dims",
            )
        discount = check_unit_interval(self.discount, "discount")
        if discount == 1.0 and not self.stable_reference:
            raise ValueError(
                "discount=1 requires a plant that declares an asymptotically "
                "stable reference (stable_reference=True)"
            )

        if len(self.state_cost) != n_players:
            raise GameDimensionError(
                f"state_cost: expected {n_players} matrices, got {len(self.state_cost)}",
                field="state_cost",
            )
        state_cost = tuple(
            frozen_array(check_spd(np.asarray(S, float), f"state_cost[{i}]", player=i))
            for i, S in enumerate(self.state_cost)
        )
        for i, S in enumerate(state_cost):
            if S.shape != (state_dim, state_dim):
                raise GameDimensionError(
                    f"state_cost[{i}]: expected shape {(state_dim, state_dim)}, got {S.shape}",
                    field="state_cost",
                    player=i,
                )

        if len(self.action_cost) != n_players:
            raise GameDimensionError(
                f"action_cost: expected {n_players} rows, got {len(self.action_cost)}",
                field="action_cost",
            )
        rows = []
        for i, row in enumerate(self.action_cost):
            if len(row) != n_players:
                raise GameDimensionError(
                    f"action_cost[{i}]: expected {n_players} entries, got {len(row)}",
                    field="action_cost",
                    player=i,
                )
            entries = []
            for j, R in enumerate(row):
                R = check_spd(np.atleast_2d(np.asarray(R, float)), f"action_cost[{i}][{j}]", player=i)
                if R.shape != (dims[j], dims[j]):
                    raise GameDimensionError(
                        f"action_cost[{i}][{j}]: expected shape {(dims[j], dims[j])}, got {R.shape}",
                        field="action_cost",
                        player=i,
                    )
                entries.append(frozen_array(R))
            rows.append(tuple(entries))

        bounds = []
        if len(self.action_bounds) != n_players:
            raise GameDimensionError(
                f"action_bounds: expected {n_players} entries, got {len(self.action_bounds)}",
                field="action_bounds",
            )
        for i, (lo, hi) in enumerate(self.action_bounds):
            lo = as_vector(lo, dims[i], f"action_bounds[{i}].lower", player=i)
            hi = as_vector(hi, dims[i], f"action_bounds[{i}].upper", player=i)
            if np.any(lo >= hi):
                raise ValueError(f"action_bounds[{i}]: lower bound must be strictly below upper")
            bounds.append((frozen_array(lo), frozen_array(hi)))

        object.__setattr__(self, "n_players", n_players)
        object.__setattr__(self, "state_dim", state_dim)
        object.__setattr__(self, "ref_dim", ref_dim)
        object.__setattr__(self, "action_dims", dims)
        object.__setattr__(self, "discount", discount)
        object.__setattr__(self, "state_cost", state_cost)
        object.__setattr__(self, "action_cost", tuple(rows))
        object.__setattr__(self, "action_bounds", tuple(bounds))

    @property
    def total_action_dim(self):
        return sum(self.action_dims)

    def clamp_action(self, player, action):
        """Clamp an action to player's box; returns the clamped copy."""
        lo, hi = self.action_bounds[player]
        return np.clip(np.asarray(action, dtype=float), lo, hi)

    def opponents(self, player):
        """Indices of the other players, in ascending order."""
        return tuple(j for j in range(self.n_players) if j != player)


class Plant:
    """Black-box system plus reference exosystem.

    ``step`` advances the plant's internal state one tick under the given
    per-player actions; ``ref_step`` advances the reference.  Both are
    deterministic functions of their arguments.  ``observe`` maps the internal
    state to the learner-visible state vector; for fully observed plants it is
    the identity.  The learner never reads anything else.
    """

    state_dim = None
    ref_dim = None

    def step(self, state, actions):
        raise NotImplementedError

    def ref_step(self, reference):
        raise NotImplementedError

    def observe(self, state):
        return np.asarray(state, dtype=float)

    def initial(self, rng):
        """Draw an initial (internal state, reference) pair."""
        raise NotImplementedError


@dataclass(frozen=True)
class TrackingSample:
    """One observed (state, reference, actions) tuple."""

    state: np.ndarray
    reference: np.ndarray
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "state", frozen_array(self.state))
        object.__setattr__(self, "reference", frozen_array(self.reference))
        object.__setattr__(self, "actions", tuple(frozen_array(a) for a in self.actions))


def tracking_error(state, reference):
    """Componentwise difference state - reference."""
    state = np.atleast_1d(np.asarray(state, dtype=float))
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    if state.shape != reference.shape:
        raise GameDimensionError(
            f"tracking_error: state shape {state.shape} != reference shape {reference.shape}",
            field="reference",
        )
    return state - reference


def stage_cost(spec, player, sample):
    """Quadratic stage cost of `player` at one sample.

    Returns (x-r)' S_ii (x-r) + sum_j u_j' R_ij u_j, which is strictly
    positive unless the tracking error and every action vanish.
    """
    if not 0 <= player < spec.n_players:
        raise GameDimensionError(f"player index {player} out of range", field="player")
    x = as_vector(sample.state, spec.state_dim, "sample.state", player=player)
    r = as_vector(sample.reference, spec.ref_dim, "sample.reference", player=player)
    if len(sample.actions) != spec.n_players:
        raise GameDimensionError(
            f"sample.actions: expected {spec.n_players} action vectors, got {len(sample.actions)}",
            field="actions",
            player=player,
        )
    err = tracking_error(x, r)
    cost = float(err @ spec.state_cost[player] @ err)
    for j, action in enumerate(sample.actions):
        u = as_vector(action, spec.action_dims[j], f"sample.actions[{j}]", player=j)
        cost += float(u @ spec.action_cost[player][j] @ u)
    return cost


def rollout(plant, policies, x0, r0, steps, spec):
    """Run the closed loop for `steps` ticks under fixed policies.

    Returns a list of ``steps + 1`` samples.  Actions are clamped to the
    spec's bounds before they reach the plant; the final entry records the
    policies evaluated at the terminal state without applying them.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = x0
    reference = np.asarray(r0, dtype=float)
    trajectory = []
    for k in range(steps + 1):
        observed = plant.observe(state)
        if not np.all(np.isfinite(observed)):
            raise TrajectoryDivergedError(
                f"non-finite state at step {k}", step_index=k
            )
        actions = tuple(
            spec.clamp_action(i, policy(observed, reference))
            for i, policy in enumerate(policies)
        )
        trajectory.append(TrackingSample(observed, reference, actions))
        if k < steps:
            state = plant.step(state, actions)
            reference = plant.ref_step(reference)
    return trajectory


def discounted_cost(spec, player, trajectory):
    """Discounted sum of stage costs along a trajectory (cost-to-go estimate)."""
    total = 0.0
    for k, sample in enumerate(trajectory):
        total += spec.discount**k * stage_cost(spec, player, sample)
    return total
