"""Input validation helpers.

Small checks shared by the domain types and the estimator facade. They raise
:class:`~nashtrack.errors.GameDimensionError` (shape problems) or plain
``ValueError`` (value problems) with messages naming the offending field.
"""

import numpy as np

from .errors import GameDimensionError


def as_vector(value, dim, field, player=None):
    """Coerce to a float vector of length ``dim``."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise GameDimensionError(
            f"{field}: expected vector of length {dim}, got shape {arr.shape}",
            field=field,
            player=player,
        )
    return arr


def as_matrix(value, shape, field, player=None):
    """Coerce to a float matrix of the given shape."""
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape != tuple(shape):
        raise GameDimensionError(
            f"{field}: expected matrix of shape {tuple(shape)}, got {arr.shape}",
            field=field,
            player=player,
        )
    return arr


def check_spd(matrix, field, player=None, tol=0.0):
    """Require a symmetric matrix with strictly positive eigenvalues."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise GameDimensionError(
            f"{field}: expected a square matrix, got shape {arr.shape}",
            field=field,
            player=player,
        )
    if not np.allclose(arr, arr.T, atol=1e-10 * (1.0 + np.abs(arr).max())):
        raise ValueError(f"{field}: matrix is not symmetric")
    smallest = np.linalg.eigvalsh(arr).min()
    if smallest <= tol:
        raise ValueError(
            f"{field}: matrix is not positive definite (min eigenvalue {smallest:.3e})"
        )
    return arr


def check_positive_int(value, field):
    if not isinstance(value, (int, np.integer)) or value <= 0:
        raise ValueError(f"{field}: expected a positive integer, got {value!r}")
    return int(value)


def check_unit_interval(value, field, closed_right=True):
    """Require a real in (0, 1] (or (0, 1) when ``closed_right`` is False)."""
    value = float(value)
    upper_ok = value <= 1.0 if closed_right else value < 1.0
    if not (value > 0.0 and upper_ok):
        raise ValueError(f"{field}: expected a value in (0, 1], got {value}")
    return value


def as_samples_2d(X, n_columns, field):
    """Coerce a batch of row samples to a (n_rows, n_columns) float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n_columns:
        raise GameDimensionError(
            f"{field}: expected rows of length {n_columns}, got shape {arr.shape}",
            field=field,
        )
    return arr


def frozen_array(value, dtype=float):
    """Copy to a read-only array so frozen dataclasses stay immutable."""
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr
