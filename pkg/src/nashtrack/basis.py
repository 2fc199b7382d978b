"""Polynomial feature maps and linear-in-features Q-functions.

A Q-function is a quadratic form over a *lifted* signal vector.  The lift
concatenates a configurable list of state/reference signals (raw coordinates
or their squares) with the players' action coordinates; the feature vector is
the upper triangle of the lift's outer product, row-major, with every cross
monomial appearing exactly once.  That monomial order is normative: weight
vectors are only meaningful together with :data:`ORDER_VERSION`, which is
recorded in every serialized checkpoint.

For player ``i`` the action part of the lift is ordered own-coordinates
first, then the remaining players' coordinates in ascending player order, so
one :class:`BasisSpec` serves every player.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import GameDimensionError
from .validation import as_samples_2d, frozen_array

ORDER_VERSION = "lift-ut-rowmajor-v1"

# (kind, coordinate) signal kinds and their raw polynomial degree
_SIGNAL_DEGREE = {"x": 1, "x2": 2, "r": 1, "r2": 2, "one": 0}


@dataclass(frozen=True)
class BasisSpec:
    """Layout of the lifted vector feeding the quadratic feature map.

    ``state_signals`` lists the (kind, coordinate) scalar signals built from
    the state and reference, in order; kinds are ``x``, ``x2``, ``r``, ``r2``
    and ``one`` (a constant slot, used by degenerate test bases).  Action
    coordinates are appended automatically from ``action_dims``.
    """

    state_signals: tuple
    action_dims: tuple

    def __post_init__(self):
        signals = tuple((str(kind), int(idx)) for kind, idx in self.state_signals)
        for kind, _ in signals:
            if kind not in _SIGNAL_DEGREE:
                raise ValueError(f"unknown signal kind {kind!r}")
        object.__setattr__(self, "state_signals", signals)
        object.__setattr__(self, "action_dims", tuple(int(m) for m in self.action_dims))

    @property
    def state_feature_dim(self):
        return len(self.state_signals)

    @property
    def lift_dim(self):
        return len(self.state_signals) + sum(self.action_dims)

    @property
    def n_features(self):
        d = self.lift_dim
        return d * (d + 1) // 2

    def action_order(self, player):
        """Players in lift order for `player`: own first, then the rest ascending."""
        others = [j for j in range(len(self.action_dims)) if j != player]
        return (player, *others)

    def slot_degrees(self):
        """Raw polynomial degree of each lift slot."""
        state = [_SIGNAL_DEGREE[kind] for kind, _ in self.state_signals]
        return np.array(state + [1] * sum(self.action_dims))


def quadratic_tracking_basis(state_dim, ref_dim, action_dims):
    """All raw state and reference coordinates: exact for linear-quadratic games."""
    signals = [("x", i) for i in range(state_dim)] + [("r", i) for i in range(ref_dim)]
    return BasisSpec(tuple(signals), tuple(action_dims))


def state_features(basis, state, reference):
    """Evaluate the state/reference part of the lift."""
    x = np.atleast_1d(np.asarray(state, dtype=float))
    r = np.atleast_1d(np.asarray(reference, dtype=float))
    out = np.empty(len(basis.state_signals))
    for k, (kind, idx) in enumerate(basis.state_signals):
        if kind == "x":
            out[k] = x[idx]
        elif kind == "x2":
            out[k] = x[idx] ** 2
        elif kind == "r":
            out[k] = r[idx]
        elif kind == "r2":
            out[k] = r[idx] ** 2
        else:  # "one"
            out[k] = 1.0
    return out


def lift(basis, sample, player):
    """Lifted signal vector for `player` at one sample."""
    actions = sample.actions
    if len(actions) != len(basis.action_dims):
        raise GameDimensionError(
            f"expected {len(basis.action_dims)} action vectors, got {len(actions)}",
            field="actions",
            player=player,
        )
    parts = [state_features(basis, sample.state, sample.reference)]
    for j in basis.action_order(player):
        a = np.atleast_1d(np.asarray(actions[j], dtype=float))
        if a.shape[0] != basis.action_dims[j]:
            raise GameDimensionError(
                f"actions[{j}]: expected length {basis.action_dims[j]}, got {a.shape[0]}",
                field="actions",
                player=j,
            )
        parts.append(a)
    return np.concatenate(parts)


def _triu_indices(d):
    return np.triu_indices(d)


def features(basis, sample, player):
    """Monomial feature vector: upper triangle of lift(z) lift(z)', row-major."""
    z = lift(basis, sample, player)
    iu = _triu_indices(z.shape[0])
    return np.outer(z, z)[iu]


def features_from_lift(lifts):
    """Feature matrix from a (B, d) batch of lifted vectors."""
    lifts = np.asarray(lifts, dtype=float)
    iu = _triu_indices(lifts.shape[1])
    outer = lifts[:, :, None] * lifts[:, None, :]
    return outer[:, iu[0], iu[1]]


def monomial_degrees(basis):
    """Raw polynomial degree of each monomial, in feature order."""
    slot = basis.slot_degrees()
    iu = _triu_indices(basis.lift_dim)
    return slot[iu[0]] + slot[iu[1]]


def monomial_labels(basis, player):
    """Human-readable monomial names for `player`'s feature order."""
    names = [f"{kind}{idx}" for kind, idx in basis.state_signals]
    for j in basis.action_order(player):
        names.extend(f"a{j}_{c}" for c in range(basis.action_dims[j]))
    iu = _triu_indices(basis.lift_dim)
    return [f"{names[i]}*{names[j]}" for i, j in zip(*iu)]


def weight_matrix(basis, weights):
    """Symmetric lift-space matrix W with lift' W lift == features' weights."""
    d = basis.lift_dim
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.n_features,):
        raise GameDimensionError(
            f"weights: expected length {basis.n_features}, got shape {weights.shape}",
            field="weights",
        )
    W = np.zeros((d, d))
    iu = _triu_indices(d)
    W[iu] = weights
    W = 0.5 * (W + W.T)  # halves the off-diagonal monomials, keeps the diagonal
    return W


def weights_from_matrix(basis, W):
    """Inverse of :func:`weight_matrix` for symmetric W."""
    W = np.asarray(W, dtype=float)
    iu = _triu_indices(basis.lift_dim)
    scale = np.where(iu[0] == iu[1], 1.0, 2.0)
    return W[iu] * scale


@dataclass(frozen=True)
class QFunction:
    """Linear-in-features Q: evaluation is exactly features(z)' weights."""

    basis: BasisSpec
    weights: np.ndarray
    player: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.basis.n_features,):
            raise GameDimensionError(
                f"weights: expected length {self.basis.n_features}, got shape {w.shape}",
                field="weights",
                player=self.player,
            )
        object.__setattr__(self, "weights", frozen_array(w))

    def matrix(self):
        return weight_matrix(self.basis, self.weights)


def q_eval(q, sample, player=None):
    """Evaluate a Q-function at one sample."""
    player = q.player if player is None else player
    return float(features(q.basis, sample, player) @ q.weights)


class QuadraticFeatures(TransformerMixin, BaseEstimator):
    """Stateless transformer from raw sample rows to quadratic monomials.

    Rows of ``X`` are ``[state, reference, action_1, ..., action_N]`` in
    global player order; ``transform`` reorders actions for ``player`` and
    returns the (n_samples, n_features) monomial matrix.
    """

    def __init__(self, state_signals=(), action_dims=(), state_dim=1, ref_dim=1, player=0):
        self.state_signals = state_signals
        self.action_dims = action_dims
        self.state_dim = state_dim
        self.ref_dim = ref_dim
        self.player = player

    def _basis(self):
        return BasisSpec(tuple(self.state_signals), tuple(self.action_dims))

    def fit(self, X=None, y=None):
        self._basis()  # validates the layout
        return self

    def transform(self, X):
        basis = self._basis()
        width = self.state_dim + self.ref_dim + sum(basis.action_dims)
        X = as_samples_2d(X, width, "X")
        starts = np.cumsum([self.state_dim + self.ref_dim] + list(basis.action_dims))
        rows = np.empty((X.shape[0], basis.n_features))
        for b, row in enumerate(X):
            x, r = row[: self.state_dim], row[self.state_dim : self.state_dim + self.ref_dim]
            actions = tuple(
                row[starts[j] : starts[j + 1]] for j in range(len(basis.action_dims))
            )
            rows[b] = features(basis, _RawSample(x, r, actions), self.player)
        return rows

    def get_feature_names_out(self, input_features=None):
        return np.asarray(monomial_labels(self._basis(), self.player), dtype=object)


class _RawSample:
    """Duck-typed sample used by the transformer to avoid copy overhead."""

    __slots__ = ("state", "reference", "actions")

    def __init__(self, state, reference, actions):
        self.state = state
        self.reference = reference
        self.actions = actions
