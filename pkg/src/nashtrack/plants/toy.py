"""A small nonlinear control-affine two-player game.

Smooth saturating drift with constant input maps; the drift vanishes at the
origin and the open loop is contracting on the unit box, so desk-scale
rollouts stay bounded.  Used to exercise the learner off the linear oracle
class; no convergence guarantee is claimed here.
"""

import numpy as np

from ..game import GameSpec, Plant


class NonlinearToyPlant(Plant):
    def __init__(self, state_box=1.5, ref_box=1.0):
        self.state_dim = 2
        self.ref_dim = 2
        self.state_box = float(state_box)
        self.ref_box = float(ref_box)
        self._B = (np.array([[0.30], [0.05]]), np.array([[0.05], [0.25]]))
        self._F = np.diag([0.92, 0.85])

    def step(self, state, actions):
        x = np.asarray(state, dtype=float)
        drift = np.array(
            [
                0.7 * x[0] + 0.2 * np.tanh(x[1]),
                0.8 * x[1] - 0.1 * np.sin(x[0]),
            ]
        )
        for B_i, u_i in zip(self._B, actions):
            drift = drift + B_i @ np.atleast_1d(np.asarray(u_i, dtype=float))
        return drift

    def ref_step(self, reference):
        return self._F @ np.asarray(reference, dtype=float)

    def initial(self, rng):
        x0 = rng.uniform(-self.state_box, self.state_box, self.state_dim)
        r0 = rng.uniform(-self.ref_box, self.ref_box, self.ref_dim)
        return x0, r0


def make_toy_game(discount=0.95, action_bound=50.0):
    """Toy plant plus a matching two-player game spec."""
    plant = NonlinearToyPlant()
    spec = GameSpec(
        n_players=2,
        state_dim=2,
        action_dims=(1, 1),
        discount=discount,
        state_cost=(np.eye(2), 0.5 * np.eye(2)),
        action_cost=(
            (np.array([[1.0]]), np.array([[0.1]])),
            (np.array([[0.1]]), np.array([[1.5]])),
        ),
        action_bounds=(
            (np.array([-action_bound]), np.array([action_bound])),
            (np.array([-action_bound]), np.array([action_bound])),
        ),
        ref_dim=2,
        stable_reference=True,
    )
    return spec, plant
