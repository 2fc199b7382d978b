"""Synthetic linear-quadratic game generator.

Linear dynamics are the one class where the exact equilibrium is computable
in closed form, so randomly generated LQ games are the oracle test-bed for
everything the learner does.  The generator keeps instances *weakly coupled*
(small cross-input gains and small cross action costs) and bounds the
one-step map so that a sufficiently large quadratic initialization dominates
one backup step; both are the empirically calibrated regime in which value
iteration decreases monotonically.
"""

from dataclasses import dataclass

import numpy as np

from ..game import GameSpec, Plant
from ..validation import frozen_array


@dataclass(frozen=True)
class LQGameSpec:
    """Linear instance: x+ = A x + sum_i B_i u_i, r+ = F r, quadratic costs."""

    A: np.ndarray
    B: tuple
    F: np.ndarray
    game: GameSpec

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.game.state_dim
        if A.shape != (n, n):
            raise ValueError(f"A: expected shape {(n, n)}, got {A.shape}")
        rho = max(abs(np.linalg.eigvals(A)))
        if rho > 1.2:
            raise ValueError(
                f"A: spectral radius {rho:.3f} exceeds 1.2; desk-scale rollouts would diverge"
            )
        B = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B)
        for i, b in enumerate(B):
            if b.shape != (n, self.game.action_dims[i]):
                raise ValueError(f"B[{i}]: expected shape {(n, self.game.action_dims[i])}, got {b.shape}")
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if F.shape != (n, n):
            raise ValueError(f"F: expected shape {(n, n)}, got {F.shape}")
        if self.game.discount == 1.0 and max(abs(np.linalg.eigvals(F))) >= 1.0:
            raise ValueError("discount=1 requires a strictly stable reference matrix F")
        object.__setattr__(self, "A", frozen_array(A))
        object.__setattr__(self, "B", tuple(frozen_array(b) for b in B))
        object.__setattr__(self, "F", frozen_array(F))

    def one_step_map(self):
        """Matrix sending [x; r; u_1..u_N] to [x+; r+]."""
        n = self.game.state_dim
        top = np.concatenate([self.A, np.zeros((n, n)), *self.B], axis=1)
        bottom = np.concatenate(
            [np.zeros((n, n)), self.F, np.zeros((n, self.game.total_action_dim))], axis=1
        )
        return np.vstack([top, bottom])


class LinearGamePlant(Plant):
    """Plant wrapper around an LQ instance; fully observed (observe = identity)."""

    def __init__(self, lq, state_box=2.0, ref_box=2.0):
        self.lq = lq
        self.state_dim = lq.game.state_dim
        self.ref_dim = lq.game.ref_dim
        self.state_box = float(state_box)
        self.ref_box = float(ref_box)

    def step(self, state, actions):
        x = np.asarray(state, dtype=float)
        out = self.lq.A @ x
        for B_i, u_i in zip(self.lq.B, actions):
            out = out + B_i @ np.atleast_1d(np.asarray(u_i, dtype=float))
        return out

    def ref_step(self, reference):
        return self.lq.F @ np.asarray(reference, dtype=float)

    def initial(self, rng):
        x0 = rng.uniform(-self.state_box, self.state_box, self.state_dim)
        r0 = rng.uniform(-self.ref_box, self.ref_box, self.ref_dim)
        return x0, r0


def _random_spd(rng, dim, scale=0.3):
    M = scale * rng.standard_normal((dim, dim))
    return M.T @ M + np.eye(dim)


def generate_lq_game(
    dims,
    seed,
    discount=0.95,
    drift_gain=0.7,
    input_gain=0.35,
    coupling=0.1,
    ref_gain=0.9,
    one_step_cap=1.0,
    action_bound=1e3,
):
    """Random weakly coupled LQ game plus its plant.

    ``dims`` is ``(state_dim, action_dims)``.  ``coupling`` scales the cross
    action costs R_ij (i != j) relative to identity-sized own costs, and
    ``input_gain`` scales every input matrix; together they are the weak
    coupling knob.  After sampling, the input matrices are shrunk if needed so
    the one-step map [x; r; a] -> [x+; r+] has largest singular value at most
    ``one_step_cap``, which keeps discount * sigma_max^2 < 1 and therefore
    admits a dominating quadratic initialization.

    Same seed, same game.
    """
    state_dim, action_dims = dims
    action_dims = tuple(int(m) for m in action_dims)
    n_players = len(action_dims)
    rng = np.random.default_rng(seed)

    A = rng.standard_normal((state_dim, state_dim))
    A *= drift_gain / max(np.linalg.svd(A, compute_uv=False).max(), 1e-12)
    B = [input_gain * rng.uniform(-1.0, 1.0, (state_dim, m)) for m in action_dims]
    F = np.diag(rng.uniform(0.8, 1.0, state_dim)) * ref_gain

    # sigma(stack)^2 <= max(sigma(A), sigma(F))^2 + sigma([B_1..B_N])^2, so
    # shrinking the inputs under the residual budget enforces the cap exactly
    sigma_drift = max(
        np.linalg.svd(A, compute_uv=False).max(), np.linalg.svd(F, compute_uv=False).max()
    )
    if sigma_drift >= one_step_cap:
        raise ValueError("drift_gain/ref_gain leave no budget under one_step_cap")
    budget = np.sqrt(one_step_cap**2 - sigma_drift**2)
    sigma_inputs = np.linalg.svd(np.concatenate(B, axis=1), compute_uv=False).max()
    if sigma_inputs > budget:
        B = [b * (budget / sigma_inputs) for b in B]

    state_cost = [_random_spd(rng, state_dim) for _ in range(n_players)]
    action_cost = []
    for i in range(n_players):
        row = []
        for j in range(n_players):
            R = _random_spd(rng, action_dims[j], scale=0.2)
            row.append(R if i == j else coupling * R)
        action_cost.append(tuple(row))
    bounds = [
        (-action_bound * np.ones(m), action_bound * np.ones(m)) for m in action_dims
    ]

    game = GameSpec(
        n_players=n_players,
        state_dim=state_dim,
        action_dims=action_dims,
        discount=discount,
        state_cost=tuple(state_cost),
        action_cost=tuple(action_cost),
        action_bounds=tuple(bounds),
        ref_dim=state_dim,
        stable_reference=bool(max(abs(np.linalg.eigvals(F))) < 1.0),
    )
    lq = LQGameSpec(A=A, B=tuple(B), F=F, game=game)
    return lq, LinearGamePlant(lq)
