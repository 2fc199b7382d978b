import numpy as np
import pytest

from nashtrack.basis import BasisSpec, quadratic_tracking_basis
from nashtrack.game import GameSpec
from nashtrack.plants import LinearGamePlant, LQGameSpec, generate_lq_game

SEED = 12345


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def lq_benchmark():
    """Weakly coupled two-player LQ game, n=2, the default oracle test-bed."""
    return generate_lq_game((2, (1, 1)), seed=0)


@pytest.fixture
def lq_basis():
    return quadratic_tracking_basis(2, 2, (1, 1))


def scalar_game(a=0.9, b1=0.5, b2=0.5, discount=0.95, s=1.0, r_own=1.0, r_cross=0.1, f=0.9):
    """The scalar two-player benchmark used by the oracle tests."""
    game = GameSpec(
        n_players=2,
        state_dim=1,
        action_dims=(1, 1),
        discount=discount,
        state_cost=(np.array([[s]]), np.array([[s]])),
        action_cost=(
            (np.array([[r_own]]), np.array([[r_cross]])),
            (np.array([[r_cross]]), np.array([[r_own]])),
        ),
        action_bounds=(
            (np.array([-1e3]), np.array([1e3])),
            (np.array([-1e3]), np.array([1e3])),
        ),
        ref_dim=1,
        stable_reference=True,
    )
    lq = LQGameSpec(
        A=np.array([[a]]),
        B=(np.array([[b1]]), np.array([[b2]])),
        F=np.array([[f]]),
        game=game,
    )
    return lq, LinearGamePlant(lq)


@pytest.fixture
def scalar_benchmark():
    return scalar_game()


def constant_cost_rig(cost=3.0, discount=0.95):
    """Plant frozen at x=1, r=0 so every stage cost equals `cost` when actions are zero.

    Paired with the one-constant-monomial basis this gives closed-form
    regression targets for the evaluation backends.
    """
    game = GameSpec(
        n_players=2,
        state_dim=1,
        action_dims=(1, 1),
        discount=discount,
        state_cost=(np.array([[cost]]), np.array([[cost]])),
        action_cost=(
            (np.array([[1.0]]), np.array([[1.0]])),
            (np.array([[1.0]]), np.array([[1.0]])),
        ),
        action_bounds=(
            (np.array([-1.0]), np.array([1.0])),
            (np.array([-1.0]), np.array([1.0])),
        ),
        ref_dim=1,
        stable_reference=False,
    )
    lq = LQGameSpec(
        A=np.array([[1.0]]),
        B=(np.array([[0.0]]), np.array([[0.0]])),
        F=np.array([[1.0]]),
        game=game,
    )
    basis = BasisSpec((("one", 0),), (0, 0))
    return lq, LinearGamePlant(lq), basis
