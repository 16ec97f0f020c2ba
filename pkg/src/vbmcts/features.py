"""State/action types and the feature map used by the GP world model.

The decision problem is a short-horizon intervention schedule: at each
timestep the agent picks a pair of coverage levels (ITN, IRS), each on a
discrete grid in (0, 1].  The Markov state is deliberately small --
``(previous reward, previous action, timestep)`` -- and the world model
regresses reward on a fixed 14-dimensional encoding of (state, action).

The encoding captures the structure that matters for planning: seasonality
proxies of the timestep, the previous outcome, current and previous
coverages, and interaction terms for persistence/switching between
consecutive actions.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

#: Number of entries in the feature encoding of a (state, action) pair.
FEATURE_DIM = 14

#: Grid resolution of each action component.
GRID_STEP = 0.1


class ActionPair(NamedTuple):
    """One intervention decision: ITN and IRS coverage levels."""

    itn: float
    irs: float


class State(NamedTuple):
    """Markov state: previous reward, previous action, 1-based timestep."""

    prev_reward: float
    prev_action: ActionPair
    timestep: int


#: All 100 grid actions, ITN-major: (0.1,0.1), (0.1,0.2), ..., (1.0,1.0).
ACTION_GRID: tuple[ActionPair, ...] = tuple(
    ActionPair(i / 10.0, j / 10.0) for i in range(1, 11) for j in range(1, 11)
)


def start_state() -> State:
    """Initial state of every episode: no history, timestep 1."""
    return State(0.0, ActionPair(0.0, 0.0), 1)


def action_index(action: ActionPair) -> int:
    """Index of ``action`` in :data:`ACTION_GRID` (ITN-major order).

    Raises ``ValueError`` if either component is off-grid.
    """
    i = _grid_coord(action[0])
    j = _grid_coord(action[1])
    return (i - 1) * 10 + (j - 1)


def _grid_coord(x: float) -> int:
    k = round(x * 10.0)
    if not 1 <= k <= 10 or abs(x * 10.0 - k) > 1e-9:
        raise ValueError(f"action component {x!r} is not on the grid (0,1] with step 0.1")
    return k


def phi(state: State, action: ActionPair) -> np.ndarray:
    """Encode a (state, action) pair as a length-14 float vector.

    Entries, in order:

    ==  =======================================
     0  timestep t (raw, 1-based)
     1  t mod 2
     2  t mod 3
     3  previous reward
     4  previous ITN coverage
     5  previous IRS coverage
     6  candidate ITN coverage
     7  candidate IRS coverage
     8  itn * irs
     9  prev_itn * prev_irs
    10  itn * prev_itn
    11  irs * prev_irs
    12  itn * (1 - prev_itn)   (scale-up term)
    13  irs * (1 - prev_irs)
    ==  =======================================
    """
    prev_reward, prev_action, t = state
    if t < 1:
        raise ValueError(f"timestep must be >= 1, got {t}")
    p_itn, p_irs = float(prev_action[0]), float(prev_action[1])
    itn, irs = float(action[0]), float(action[1])
    for name, v in (("itn", itn), ("irs", irs), ("prev itn", p_itn), ("prev irs", p_irs)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"action component {name}={v} outside [0, 1]")
    return np.array(
        [
            float(t),
            float(t % 2),
            float(t % 3),
            float(prev_reward),
            p_itn,
            p_irs,
            itn,
            irs,
            itn * irs,
            p_itn * p_irs,
            itn * p_itn,
            irs * p_irs,
            itn * (1.0 - p_itn),
            irs * (1.0 - p_irs),
        ],
        dtype=np.float64,
    )


def phi_batch(state: State, actions: "list[ActionPair] | tuple[ActionPair, ...]") -> np.ndarray:
    """Stack :func:`phi` rows for many candidate actions at one state."""
    return np.stack([phi(state, a) for a in actions])
