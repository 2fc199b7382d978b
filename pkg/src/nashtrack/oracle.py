"""Model-based ground truth, used only by tests and validation.

Everything here reads plant internals (the linear matrices, or a steppable
model on a grid), which the learner never does.  Three routes to the same
equilibria: the coupled Bellman operator applied through the true dynamics,
exact value iteration on quadratic forms for linear games, and a brute-force
tabular sweep on discretized grids.
"""

from dataclasses import dataclass

import numpy as np

from .basis import QFunction, quadratic_tracking_basis, weights_from_matrix
from .errors import OracleNonConvergence
from .game import stage_cost
from .policies import minimize_over_own_action
from .validation import frozen_array


@dataclass(frozen=True)
class ExactLQSolution:
    """Converged quadratic Q matrices over [x; r; u_1..u_N] and feedback gains.

    ``gains[i]`` maps [x; r] directly to player i's action (sign included):
    u_i = gains[i] @ [x; r].
    """

    q_matrices: tuple
    gains: tuple
    iterations: int
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "q_matrices", tuple(frozen_array(P) for P in self.q_matrices))
        object.__setattr__(self, "gains", tuple(frozen_array(K) for K in self.gains))

    def q_function(self, lq, player):
        """The same Q as a learner-side QFunction over the raw quadratic basis."""
        game = lq.game
        basis = quadratic_tracking_basis(game.state_dim, game.ref_dim, game.action_dims)
        P = self.q_matrices[player]
        perm = _lift_permutation(game, player)
        return QFunction(basis, weights_from_matrix(basis, P[np.ix_(perm, perm)]), player)


def _lift_permutation(game, player):
    """Map player `player`'s lift order to global [x; r; u_1..u_N] coordinates."""
    n, nr = game.state_dim, game.ref_dim
    offsets = np.cumsum([0] + list(game.action_dims)) + n + nr
    order = list(range(n + nr))
    for j in (player, *game.opponents(player)):
        order.extend(range(offsets[j], offsets[j + 1]))
    return np.array(order)


def _stage_cost_matrix(game, player):
    """Quadratic form of l_i over the global vector [x; r; u_1..u_N]."""
    n, nr = game.state_dim, game.ref_dim
    total = n + nr + game.total_action_dim
    L = np.zeros((total, total))
    S = game.state_cost[player]
    L[:n, :n] = S
    L[n : n + nr, n : n + nr] = S
    L[:n, n : n + nr] = -S
    L[n : n + nr, :n] = -S
    offset = n + nr
    for j, m in enumerate(game.action_dims):
        L[offset : offset + m, offset : offset + m] = game.action_cost[player][j]
        offset += m
    return L


def _gain_from_q(P, game, player, opponent_gains):
    """Greedy feedback gain for `player` given opponents' gains over [x; r]."""
    n2 = game.state_dim + game.ref_dim
    offsets = np.cumsum([0] + list(game.action_dims)) + n2
    own = slice(offsets[player], offsets[player + 1])
    P_uu = P[own, own]
    rhs = P[own, :n2].copy()
    for j in game.opponents(player):
        other = slice(offsets[j], offsets[j + 1])
        rhs += P[own, other] @ opponent_gains[j]
    return -np.linalg.solve(P_uu, rhs)


def remark_one_scale(lq, discount=None, margin=2.0):
    """A quadratic-initialization scale that provably dominates one backup.

    With sigma the largest singular value of the one-step map and kappa the
    largest eigenvalue of any player's stage-cost form, any
    alpha >= kappa / (1 - discount * sigma^2) makes alpha*I satisfy
    alpha ||z||^2 >= l(z) + discount * alpha ||next||^2 under zero policies.
    Requires discount * sigma^2 < 1.
    """
    game = lq.game
    gamma = game.discount if discount is None else float(discount)
    sigma = np.linalg.svd(lq.one_step_map(), compute_uv=False).max()
    if gamma * sigma**2 >= 1.0:
        raise ValueError(
            f"discount * sigma^2 = {gamma * sigma ** 2:.3f} >= 1; no dominating "
            "identity-scale initialization exists for this instance"
        )
    kappa = max(
        np.linalg.eigvalsh(_stage_cost_matrix(game, i)).max() for i in range(game.n_players)
    )
    return margin * kappa / (1.0 - gamma * sigma**2)


def exact_vi_lq(lq, discount=None, tol=1e-12, max_iter=100_000, initial_scale=None):
    """Exact value iteration on quadratic forms for a linear game.

    Iterates simultaneous (Jacobi) greedy-gain extraction and one-step
    quadratic backups through the true matrices until the sup-norm change of
    every player's Q matrix is at most ``tol``.  The starting point is a
    large multiple of the identity (see :func:`remark_one_scale`), which
    dominates one backup step by construction.
    """
    game = lq.game
    gamma = game.discount if discount is None else float(discount)
    n2 = game.state_dim + game.ref_dim
    total = n2 + game.total_action_dim
    M = lq.one_step_map()
    L = [_stage_cost_matrix(game, i) for i in range(game.n_players)]

    if initial_scale is None:
        try:
            scale = remark_one_scale(lq, gamma)
        except ValueError:
            # outside the certifiable regime: fall back to a generically
            # large start; convergence is then checked, not guaranteed
            kappa = max(
                np.linalg.eigvalsh(_stage_cost_matrix(game, i)).max()
                for i in range(game.n_players)
            )
            scale = 100.0 * kappa / (1.0 - gamma) if gamma < 1.0 else 100.0 * kappa
    else:
        scale = float(initial_scale)
    P = [scale * np.eye(total) for _ in range(game.n_players)]
    gains = [np.zeros((m, n2)) for m in game.action_dims]

    residual = np.inf
    for iteration in range(1, max_iter + 1):
        new_gains = [_gain_from_q(P[i], game, i, gains) for i in range(game.n_players)]
        TM = np.vstack([np.eye(n2), np.vstack(new_gains)]) @ M
        new_P = []
        deltas = []
        for i in range(game.n_players):
            candidate = L[i] + gamma * TM.T @ P[i] @ TM
            candidate = 0.5 * (candidate + candidate.T)
            deltas.append(np.abs(candidate - P[i]).max())
            new_P.append(candidate)
        P, gains = new_P, new_gains
        residual = max(deltas)
        if residual <= tol:
            final_gains = [_gain_from_q(P[i], game, i, gains) for i in range(game.n_players)]
            return ExactLQSolution(
                q_matrices=tuple(P),
                gains=tuple(final_gains),
                iterations=iteration,
                residual=residual,
            )
    raise OracleNonConvergence(
        f"exact value iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {residual:.3e}); game is outside the guarantee class",
        residual=residual,
    )


def coupled_bellman_apply(q, opponents, plant, spec, sample):
    """One application of the coupled Bellman operator at a sample.

    Stage cost plus the discounted exact minimum of ``q`` over the player's
    own action at the true next state, opponents following their policies.
    Needs a model-visible plant (observe must be the identity).
    """
    next_state = plant.observe(plant.step(sample.state, sample.actions))
    next_ref = plant.ref_step(sample.reference)
    opponent_actions = [op(next_state, next_ref) for op in opponents]
    _, minimum = minimize_over_own_action(q, next_state, next_ref, opponent_actions)
    return stage_cost(spec, q.player, sample) + spec.discount * minimum


def brute_force_dp(plant, spec, state_grids, ref_grids, action_grids, sweeps, memory_cap=100_000):
    """Tabular coupled value iteration on discretized grids.

    ``state_grids``/``ref_grids`` are per-coordinate sorted arrays;
    ``action_grids[i]`` lists player i's per-coordinate grids.  Next states
    snap to the nearest grid cell.  Returns ``(q_tables, policy_tables,
    sup_deltas)``: ``q_tables[i]`` is indexed by (state cell, ref cell,
    action cell of each player) and ``policy_tables[i]`` maps (state cell,
    ref cell) to player i's greedy action-cell index.
    """
    state_points = _grid_points(state_grids)
    ref_points = _grid_points(ref_grids)
    action_points = [_grid_points(grids) for grids in action_grids]
    n_s, n_r = len(state_points), len(ref_points)
    n_a = [len(pts) for pts in action_points]
    n_players = spec.n_players
    shape = (n_s, n_r, *n_a)
    if int(np.prod(shape)) > memory_cap:
        raise MemoryError(f"grid has {int(np.prod(shape))} cells, cap is {memory_cap}")

    # stage costs decompose into a (state, ref) part plus per-player action parts
    error = state_points[:, None, :] - ref_points[None, :, :]
    cost_tables = []
    for i in range(n_players):
        cost = np.einsum("srn,nm,srm->sr", error, spec.state_cost[i], error)
        cost = cost.reshape(n_s, n_r, *([1] * n_players))
        for j in range(n_players):
            a_cost = np.einsum("an,nm,am->a", action_points[j], spec.action_cost[i][j], action_points[j])
            cost = cost + a_cost.reshape([1, 1] + [n_a[j] if k == j else 1 for k in range(n_players)])
        cost_tables.append(np.broadcast_to(cost, shape).copy())

    # snapped transitions: states depend on (state, joint action), refs on ref only
    next_r_idx = np.array([_nearest(ref_points, plant.ref_step(r)) for r in ref_points])
    next_s_idx = np.empty(shape[:1] + shape[2:], dtype=np.intp)
    for index in np.ndindex(*next_s_idx.shape):
        x = state_points[index[0]]
        actions = tuple(action_points[j][index[1 + j]] for j in range(n_players))
        next_s_idx[index] = _nearest(state_points, plant.observe(plant.step(x, actions)))
    next_s_full = np.broadcast_to(next_s_idx[:, None, ...], shape)
    next_r_full = np.broadcast_to(next_r_idx.reshape([1, n_r] + [1] * n_players), shape)

    # dominating start: the flat worst-case cost-to-go is >= Q* everywhere and
    # satisfies the one-backup dominance inequality, so sweeps descend
    q_tables = [
        np.full(shape, tab.max() / (1.0 - spec.discount)) if spec.discount < 1.0 else tab.copy()
        for tab in cost_tables
    ]
    policies = [np.zeros((n_s, n_r), dtype=np.intp) for _ in range(n_players)]
    sup_deltas = []
    for _ in range(sweeps):
        policies = [
            np.argmin(_pin_opponents(q_tables[i], policies, i), axis=2)
            for i in range(n_players)
        ]
        delta = 0.0
        new_tables = []
        for i in range(n_players):
            value = _policy_value(q_tables[i], policies)
            backed = cost_tables[i] + spec.discount * value[next_s_full, next_r_full]
            delta = max(delta, float(np.abs(backed - q_tables[i]).max()))
            new_tables.append(backed)
        q_tables = new_tables
        sup_deltas.append(delta)

    return q_tables, policies, sup_deltas


def _grid_points(grids):
    """Cartesian product of per-coordinate grids, as an array of points."""
    grids = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grids]
    mesh = np.meshgrid(*grids, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _nearest(points, value):
    return int(np.argmin(np.sum((points - np.asarray(value)) ** 2, axis=1)))


def _gather_action_axis(table, index_sr, axis):
    """Pin one action axis of (S, R, A_0..) `table` to per-(s, r) indices."""
    idx = index_sr.reshape(index_sr.shape + (1,) * (table.ndim - 2))
    idx = np.broadcast_to(idx, table.shape[:axis] + (1,) + table.shape[axis + 1 :])
    return np.take_along_axis(table, idx, axis=axis).squeeze(axis=axis)


def _pin_opponents(table, policies, player):
    """Q with opponents at their policy indices: (S, R, A_player) array."""
    out = table
    for j in reversed(range(len(policies))):
        if j != player:
            out = _gather_action_axis(out, policies[j], axis=2 + j)
    return out


def _policy_value(table, policies):
    """V(s, r): every player pinned to its policy index."""
    out = table
    for j in reversed(range(len(policies))):
        out = _gather_action_axis(out, policies[j], axis=2 + j)
    return out
