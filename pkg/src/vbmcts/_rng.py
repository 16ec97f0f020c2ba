"""Tiny counter-based RNG shared bit-for-bit by both planner backends.

splitmix64: every simulation gets its own stream derived from
(seed, simulation index), so rollout randomness is independent of tree
traversal order and identical across the pure-Python and compiled cores.
The Cython implementation in ``_mcts_core.pyx`` mirrors this exactly.
"""

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def stream_state(seed: int, sim: int) -> int:
    """Initial splitmix64 state for one simulation's rollout stream."""
    return (seed + GAMMA * (sim + 1)) & MASK


def next_u64(state: int) -> tuple[int, int]:
    """Advance the stream; returns (new_state, 64-bit output)."""
    state = (state + GAMMA) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, (z ^ (z >> 31)) & MASK
