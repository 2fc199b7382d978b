"""Control policies and closed-form policy improvement for quadratic bases.

Policies are callables ``policy(state, reference) -> action``; they return the
*unclamped* minimizer, and clamping to the action box happens wherever actions
are physically applied.  Because every basis keeps own-action coordinates
linear in the lift, the argmin over a player's action is the solution of a
small linear system, and improving against linear-feedback opponents yields
another linear feedback in closed form.
"""

from dataclasses import dataclass

import numpy as np

from .basis import state_features, weight_matrix
from .errors import CurvatureError
from .validation import frozen_array


@dataclass(frozen=True)
class ZeroPolicy:
    """Always returns the zero action."""

    action_dim: int

    def __call__(self, state, reference):
        return np.zeros(self.action_dim)


@dataclass(frozen=True)
class LinearFeedback:
    """Action = gain @ state_features(state, reference).

    With a basis that has no constant slot, the feedback vanishes at the
    origin, matching the stationarity requirement on equilibrium policies.
    """

    basis: object
    gain: np.ndarray

    def __post_init__(self):
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
        if gain.shape[1] != self.basis.state_feature_dim:
            raise ValueError(
                f"gain: expected {self.basis.state_feature_dim} columns, got {gain.shape[1]}"
            )
        object.__setattr__(self, "gain", frozen_array(gain))

    def __call__(self, state, reference):
        return self.gain @ state_features(self.basis, state, reference)


@dataclass(frozen=True)
class NumericArgmin:
    """Pointwise minimizer of a Q-function against arbitrary opponent policies.

    Evaluates the opponents at (state, reference) and solves the stationarity
    system once per call; no fixed-point iteration.  Used when an opponent is
    not a linear feedback, at the price of per-call opponent evaluation.
    """

    q: object
    opponents: tuple

    def __call__(self, state, reference):
        opponent_actions = [op(state, reference) for op in self.opponents]
        action, _ = minimize_over_own_action(self.q, state, reference, opponent_actions)
        return action


def _partition(q):
    """Split the reconstructed weight matrix into state/own/other blocks."""
    basis = q.basis
    W = weight_matrix(basis, q.weights)
    ds = basis.state_feature_dim
    m_own = basis.action_dims[q.player]
    s = slice(0, ds)
    own = slice(ds, ds + m_own)
    other = slice(ds + m_own, basis.lift_dim)
    return W, s, own, other


def _own_curvature(W, own, player):
    """Cholesky factor of the own-action block, or a curvature error."""
    block = W[own, own]
    try:
        return np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        raise CurvatureError(
            f"own-action curvature of player {player} is not positive definite",
            player=player,
        ) from None


def _solve_chol(L, rhs):
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def minimize_over_own_action(q, state, reference, opponent_actions):
    """Exact minimum of Q over the player's own action, opponents fixed.

    Returns ``(action, value)``.  If Q does not depend on the own action at
    all (every own-action row is exactly zero) the minimum is attained
    trivially and the zero action is returned; otherwise the own-action block
    must be strictly positive definite.
    """
    basis = q.basis
    W, s, own, other = _partition(q)
    phi = state_features(basis, state, reference)
    v = np.concatenate([np.atleast_1d(a) for a in opponent_actions]) if opponent_actions else np.zeros(0)
    other_width = other.stop - other.start
    if v.shape[0] != other_width:
        if other_width == 0:
            v = np.zeros(0)  # the basis reads no opponent coordinates
        else:
            raise ValueError(
                f"expected {other_width} opponent action coordinates, got {v.shape[0]}"
            )

    own_rows = np.concatenate([W[own, s], W[own, own], W[own, other]], axis=1)
    if not own_rows.any():
        action = np.zeros(basis.action_dims[q.player])
    else:
        L = _own_curvature(W, own, q.player)
        rhs = W[own, s] @ phi + W[own, other] @ v
        action = -_solve_chol(L, rhs)

    z = np.concatenate([phi, action, v])
    return action, float(z @ W @ z)


def improve_policy(q, opponents, player):
    """One-step greedy policy for `player` against fixed opponent policies.

    ``opponents`` lists the other players' policies in ascending player
    order.  When every opponent is a linear feedback (or zero), the composite
    argmin stays linear in the state features and is returned symbolically as
    a :class:`LinearFeedback`; otherwise a :class:`NumericArgmin` handle is
    returned.  The minimizer is exact for the quadratic basis; clamping to
    action bounds happens at execution time, not inside the policy.
    """
    if player != q.player:
        raise ValueError(f"q belongs to player {q.player}, not {player}")
    basis = q.basis
    W, s, own, other = _partition(q)
    L = _own_curvature(W, own, player)

    gains = []
    symbolic = True
    for op in opponents:
        if isinstance(op, LinearFeedback):
            gains.append(op.gain)
        elif isinstance(op, ZeroPolicy):
            gains.append(np.zeros((op.action_dim, basis.state_feature_dim)))
        else:
            symbolic = False
            break

    if symbolic:
        opponent_gain = (
            np.vstack(gains) if gains else np.zeros((0, basis.state_feature_dim))
        )
        rhs = W[own, s] + W[own, other] @ opponent_gain
        return LinearFeedback(basis, -_solve_chol(L, rhs))
    return NumericArgmin(q, tuple(opponents))
