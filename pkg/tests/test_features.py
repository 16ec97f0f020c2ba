import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbmcts.features import (
    ACTION_GRID,
    FEATURE_DIM,
    ActionPair,
    State,
    action_index,
    phi,
    phi_batch,
    start_state,
)


def test_feature_dim_constant():
    assert FEATURE_DIM == 14
    assert phi(start_state(), ActionPair(0.5, 0.5)).shape == (14,)


def test_start_state():
    s = start_state()
    assert s.prev_reward == 0.0
    assert s.prev_action == ActionPair(0.0, 0.0)
    assert s.timestep == 1


def test_encoding_at_episode_start():
    v = phi(State(0.0, ActionPair(0.0, 0.0), 1), ActionPair(0.5, 0.6))
    expected = [1, 1, 1, 0, 0, 0, 0.5, 0.6, 0.30, 0, 0, 0, 0.5, 0.6]
    np.testing.assert_allclose(v, expected, rtol=0, atol=1e-12)


def test_encoding_mid_episode():
    v = phi(State(10.0, ActionPair(0.5, 0.6), 2), ActionPair(0.2, 0.4))
    expected = [2, 0, 2, 10, 0.5, 0.6, 0.2, 0.4, 0.08, 0.30, 0.10, 0.24, 0.10, 0.16]
    np.testing.assert_allclose(v, expected, rtol=0, atol=1e-12)


def test_encoding_extreme_actions():
    v = phi(State(0.0, ActionPair(0.0, 0.0), 3), ActionPair(1.0, 1.0))
    expected = [3, 1, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1]
    np.testing.assert_allclose(v, expected, rtol=0, atol=1e-12)


def test_dtype_and_contiguity():
    v = phi(start_state(), ActionPair(0.3, 0.7))
    assert v.dtype == np.float64
    assert v.flags["C_CONTIGUOUS"]


@given(
    r_prev=st.floats(-100, 100),
    p_itn=st.floats(0, 1),
    p_irs=st.floats(0, 1),
    itn=st.floats(0, 1),
    irs=st.floats(0, 1),
    t=st.integers(1, 10),
)
def test_interaction_identity(r_prev, p_itn, p_irs, itn, irs, t):
    # cur-vs-prev and cur-vs-(1-prev) interaction terms always sum to the
    # current component
    v = phi(State(r_prev, ActionPair(p_itn, p_irs), t), ActionPair(itn, irs))
    assert v[10] + v[12] == pytest.approx(v[6] * 1.0)
    assert v[11] + v[13] == pytest.approx(v[7] * 1.0)
    assert v[10] == pytest.approx(itn * p_itn)
    assert v[12] == pytest.approx(itn * (1.0 - p_itn))


def test_timestep_must_be_positive():
    with pytest.raises(ValueError):
        phi(State(0.0, ActionPair(0.0, 0.0), 0), ActionPair(0.5, 0.5))


@pytest.mark.parametrize("bad", [-0.1, 1.2])
def test_action_components_bounded(bad):
    with pytest.raises(ValueError):
        phi(start_state(), ActionPair(bad, 0.5))
    with pytest.raises(ValueError):
        phi(State(0.0, ActionPair(bad, 0.0), 2), ActionPair(0.5, 0.5))


def test_action_grid_layout():
    assert len(ACTION_GRID) == 100
    assert ACTION_GRID[0] == ActionPair(0.1, 0.1)
    assert ACTION_GRID[1] == ActionPair(0.1, 0.2)  # irs varies fastest
    assert ACTION_GRID[10] == ActionPair(0.2, 0.1)
    assert ACTION_GRID[-1] == ActionPair(1.0, 1.0)
    assert len(set(ACTION_GRID)) == 100


def test_action_index_roundtrip():
    for idx, a in enumerate(ACTION_GRID):
        assert action_index(a) == idx


def test_action_index_rejects_off_grid():
    with pytest.raises(ValueError):
        action_index(ActionPair(0.15, 0.1))
    with pytest.raises(ValueError):
        action_index(ActionPair(0.0, 0.1))  # zero is not on the grid


def test_phi_batch_matches_single():
    state = State(3.0, ActionPair(0.2, 0.9), 4)
    actions = [ActionPair(0.1, 1.0), ActionPair(0.7, 0.3), ActionPair(1.0, 1.0)]
    batch = phi_batch(state, actions)
    assert batch.shape == (3, FEATURE_DIM)
    for i, a in enumerate(actions):
        np.testing.assert_array_equal(batch[i], phi(state, a))
