"""Monte-Carlo tree search over a learned reward model.

The planner searches the deterministic belief-MDP induced by a world
model: child states are built from the model's mean reward predictions,
and edge rewards are scored in one of three modes --

* ``"mean"``            the posterior mean (exploitation / final policy),
* ``"variance_bonus"``  mean + (beta1 + beta2) * variance (optimistic
                        exploration while training),
* ``"rmax"``            a fixed optimistic value wherever the model is
                        still uncertain (variance above a threshold).

Selection maximizes  Q + (c_puct / |A|) * sqrt(sum_b N_b) / (1 + N),
where |A| is the node's candidate count.  Expansion scores every grid
action and keeps the ``top_k`` best under the configured reward; leaves
are evaluated by model rollouts (uniformly random actions by default).
Backed-up values are discounted sums of edge rewards, so the final
root-level choice is simply the child with the highest Q.

Two interchangeable backends implement the same search: this pure-Python
reference (works with any model object) and a Cython core used
automatically for GP-backed models when the compiled extension is
available.  They share the counter-based rollout RNG in ``_rng`` and give
matching results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng
from .env import MDPConfig
from .features import ActionPair, State, phi
from .gp import FittedGP, GPRewardModel, predict

try:  # compiled search core is optional
    from . import _mcts_core

    _HAVE_NATIVE = True
except ImportError:  # pragma: no cover - depends on build environment
    _mcts_core = None
    _HAVE_NATIVE = False


def native_available() -> bool:
    """True when the compiled search core was built and imported."""
    return _HAVE_NATIVE


REWARD_MODES = ("mean", "variance_bonus", "rmax")
_MODE_CODES = {"mean": 0, "variance_bonus": 1, "rmax": 2}


@dataclass
class PlannerConfig:
    """Search settings; defaults match the training configuration."""

    c_puct: float = 5.0
    max_iterations: int = 100_000
    expansion_top_k: int = 50
    reward_mode: str = "variance_bonus"
    beta1: float = 3.5
    beta2: float = 0.0
    rollout_policy: str = "random"  # or "greedy"
    rollouts_per_leaf: int = 1
    rng_seed: int = 0
    backend: str = "auto"  # "auto" | "python" | "native"
    rmax_value: float | None = None
    sigma_threshold: float | None = None
    trace_path: str | None = None  # debug: one JSON line per simulation

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.rollout_policy not in ("random", "greedy"):
            raise ValueError("rollout_policy must be 'random' or 'greedy'")
        if self.backend not in ("auto", "python", "native"):
            raise ValueError("backend must be 'auto', 'python', or 'native'")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.expansion_top_k < 1:
            raise ValueError("expansion_top_k must be >= 1")
        if self.rollouts_per_leaf < 1:
            raise ValueError("rollouts_per_leaf must be >= 1")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("betas must be >= 0")
        if self.reward_mode == "rmax" and (
            self.rmax_value is None or self.sigma_threshold is None
        ):
            raise ValueError("rmax mode needs rmax_value and sigma_threshold")


@dataclass
class EdgeStats:
    q_value: float = 0.0
    visit_count: int = 0


class Edge:
    __slots__ = ("action_index", "action", "reward", "child_mean", "stats", "child")

    def __init__(self, action_index: int, action: ActionPair, reward: float, child_mean: float):
        self.action_index = action_index
        self.action = action
        self.reward = reward  # edge reward under the configured mode
        self.child_mean = child_mean  # mean prediction -> child's prev_reward
        self.stats = EdgeStats()
        self.child: "Node | None" = None


class Node:
    __slots__ = ("state", "edges")

    def __init__(self, state: State):
        self.state = state
        self.edges: list[Edge] | None = None  # None until expanded


class LookupRewardModel:
    """Exact tabular model for planning against a known environment.

    Maps (state, action) keys to rewards with zero predictive variance;
    useful for oracle checks of the search itself.
    """

    def __init__(self, table: dict):
        self.table = table

    @staticmethod
    def make_key(state: State, action: ActionPair) -> tuple:
        return (
            state.timestep,
            round(float(state.prev_reward), 9),
            round(float(state.prev_action[0]), 6),
            round(float(state.prev_action[1]), 6),
            round(float(action[0]), 6),
            round(float(action[1]), 6),
        )

    def predict_reward(self, state: State, action: ActionPair):
        key = self.make_key(state, action)
        try:
            return self.table[key], 0.0
        except KeyError:
            raise KeyError(
                f"lookup model has no entry for t={state.timestep}, "
                f"prev_reward={state.prev_reward!r}, action={tuple(action)}"
            ) from None

    def predict_rewards_batch(self, state: State, actions: Sequence[ActionPair]):
        pairs = [self.predict_reward(state, a) for a in actions]
        return (
            np.array([p[0] for p in pairs]),
            np.array([p[1] for p in pairs]),
        )


class _FittedGPModel:
    """Adapter giving a bare :class:`FittedGP` the reward-model interface."""

    def __init__(self, gp: FittedGP):
        self.gp = gp

    def predict_reward(self, state: State, action: ActionPair):
        return predict(self.gp, phi(state, action))

    def predict_rewards_batch(self, state: State, actions: Sequence[ActionPair]):
        from .gp import predict_batch
        from .features import phi_batch

        return predict_batch(self.gp, phi_batch(state, list(actions)))

    def core_arrays(self) -> dict:
        gp = self.gp
        return {
            "X": np.ascontiguousarray(gp.data.inputs),
            "weights": np.ascontiguousarray(gp.weights),
            "chol": np.ascontiguousarray(gp.chol),
            "alpha2": float(gp.hyperparams.signal_variance),
            "ell2": np.ascontiguousarray(gp.hyperparams.length_scales**2),
            "omega2": float(gp.hyperparams.noise_variance),
            "y_shift": 0.0,
            "y_scale": 1.0,
        }


def _edge_rewards(
    means: np.ndarray, variances: np.ndarray, config: PlannerConfig
) -> np.ndarray:
    if config.reward_mode == "mean":
        return means
    if config.reward_mode == "variance_bonus":
        return means + (config.beta1 + config.beta2) * variances
    # rmax: optimistic wherever the model is still uncertain
    return np.where(variances > config.sigma_threshold, config.rmax_value, means)


def select_action(node: Node, c_puct: float) -> ActionPair:
    """Tree-policy choice at an expanded node (ties go to the first edge)."""
    return _select_edge(node, c_puct).action


def _select_edge(node: Node, c_puct: float) -> Edge:
    edges = node.edges
    if not edges:
        raise ValueError("cannot select at an unexpanded node")
    total = 0
    for e in edges:
        total += e.stats.visit_count
    scale = (c_puct / len(edges)) * (total**0.5)
    best, best_score = edges[0], -float("inf")
    for e in edges:
        score = e.stats.q_value + scale / (1.0 + e.stats.visit_count)
        if score > best_score:
            best, best_score = e, score
    return best


def expand(
    node: Node,
    model,
    config: PlannerConfig,
    actions: Sequence[ActionPair],
    mdp: MDPConfig,
) -> None:
    """Score every candidate action at ``node`` and keep the best ``top_k``.

    Edges are stored sorted by grid index, and boundary ties in the scores
    keep the lower-index action, so behaviour is deterministic.
    """
    if node.state.timestep > mdp.horizon:
        raise ValueError("cannot expand a terminal node")
    if node.edges is not None:
        raise ValueError("node is already expanded")
    means, variances = model.predict_rewards_batch(node.state, actions)
    scores = _edge_rewards(np.asarray(means, dtype=float), np.asarray(variances, dtype=float), config)
    k = min(config.expansion_top_k, len(actions))
    chosen: list[int] = []
    taken = np.zeros(len(actions), dtype=bool)
    for _ in range(k):
        best_i, best_s = -1, -float("inf")
        for i in range(len(actions)):
            if not taken[i] and scores[i] > best_s:
                best_i, best_s = i, scores[i]
        taken[best_i] = True
        chosen.append(best_i)
    chosen.sort()
    node.edges = [
        Edge(i, ActionPair(*actions[i]), float(scores[i]), float(means[i])) for i in chosen
    ]


def rollout_value(
    state: State,
    model,
    config: PlannerConfig,
    actions: Sequence[ActionPair],
    mdp: MDPConfig,
    rng_state: int,
) -> tuple[float, int]:
    """Model rollout from ``state`` to the horizon; returns (value, rng state).

    A terminal state (timestep past the horizon) is worth exactly 0.  The
    rollout picks actions uniformly from the full candidate set (or
    greedily under the configured reward), accumulating discounted edge
    rewards; predicted means feed the successive states.
    """
    total_over_rollouts = 0.0
    for _ in range(config.rollouts_per_leaf):
        s = state
        total, disc = 0.0, 1.0
        while s.timestep <= mdp.horizon:
            if config.rollout_policy == "random":
                rng_state, z = _rng.next_u64(rng_state)
                idx = z % len(actions)
                a = actions[idx]
                mean, var = model.predict_reward(s, a)
                r = float(
                    _edge_rewards(np.array([mean]), np.array([var]), config)[0]
                )
            else:
                means, variances = model.predict_rewards_batch(s, actions)
                rewards = _edge_rewards(
                    np.asarray(means, dtype=float), np.asarray(variances, dtype=float), config
                )
                idx = 0
                for i in range(1, len(actions)):
                    if rewards[i] > rewards[idx]:
                        idx = i
                a = actions[idx]
                mean, r = float(means[idx]), float(rewards[idx])
            total += disc * r
            disc *= mdp.gamma
            s = State(float(mean), ActionPair(*a), s.timestep + 1)
        total_over_rollouts += total
    return total_over_rollouts / config.rollouts_per_leaf, rng_state


def backup(path: list[Edge], leaf_value: float, gamma: float) -> None:
    """Propagate a leaf evaluation up the followed path.

    Walking from the leaf back to the root, the value becomes
    ``v <- gamma * v + edge_reward``; each edge's Q absorbs the value as a
    running average and its visit count increments.
    """
    if not path:
        raise ValueError("cannot back up an empty path")
    v = leaf_value
    for edge in reversed(path):
        v = gamma * v + edge.reward
        st = edge.stats
        st.q_value = (st.visit_count * st.q_value + v) / (st.visit_count + 1)
        st.visit_count += 1


def plan_tree(
    root: State,
    model,
    config: PlannerConfig,
    mdp: MDPConfig,
    actions: Sequence[ActionPair] | None = None,
) -> Node:
    """Run the full search (pure-Python backend) and return the root node."""
    if root.timestep > mdp.horizon:
        raise ValueError(f"root timestep {root.timestep} is past the horizon {mdp.horizon}")
    acts = list(actions if actions is not None else mdp.action_grid)
    if not acts:
        raise ValueError("empty action set")
    trace = open(config.trace_path, "a") if config.trace_path else None
    root_node = Node(root)
    expand(root_node, model, config, acts, mdp)
    for sim in range(config.max_iterations):
        node = root_node
        path: list[Edge] = []
        while True:
            if node.state.timestep > mdp.horizon:
                break  # terminal
            if node.edges is None:
                break  # fresh leaf
            edge = _select_edge(node, config.c_puct)
            path.append(edge)
            if edge.child is None:
                edge.child = Node(
                    State(edge.child_mean, edge.action, node.state.timestep + 1)
                )
            node = edge.child
        if node.state.timestep <= mdp.horizon:
            expand(node, model, config, acts, mdp)
            value, _ = rollout_value(
                node.state, model, config, acts, mdp, _rng.stream_state(config.rng_seed, sim)
            )
        else:
            value = 0.0
        backup(path, value, mdp.gamma)
        if trace is not None:
            import json

            trace.write(
                json.dumps(
                    {
                        "sim": sim,
                        "path": [e.action_index for e in path],
                        "leaf_value": value,
                    }
                )
                + "\n"
            )
    if trace is not None:
        trace.close()
    return root_node


def _best_root_action(edges: list[Edge]) -> ActionPair:
    best = edges[0]
    for e in edges[1:]:
        if e.stats.q_value > best.stats.q_value:
            best = e
    return best.action


def plan(
    root: State,
    model,
    config: PlannerConfig,
    mdp: MDPConfig,
    actions: Sequence[ActionPair] | None = None,
) -> ActionPair:
    """Search from ``root`` and return the highest-Q root action."""
    action, _ = plan_with_stats(root, model, config, mdp, actions)
    return action


def plan_with_stats(
    root: State,
    model,
    config: PlannerConfig,
    mdp: MDPConfig,
    actions: Sequence[ActionPair] | None = None,
) -> tuple[ActionPair, list[tuple[ActionPair, EdgeStats]]]:
    """Like :func:`plan` but also returns per-edge root statistics."""
    if isinstance(model, FittedGP):
        model = _FittedGPModel(model)
    acts = list(actions if actions is not None else mdp.action_grid)
    backend = _resolve_backend(model, config)
    if backend == "native":
        return _plan_native(root, model, config, mdp, acts)
    root_node = plan_tree(root, model, config, mdp, acts)
    stats = [(e.action, e.stats) for e in root_node.edges]
    return _best_root_action(root_node.edges), stats


def _model_feature_dim(model) -> int | None:
    if isinstance(model, GPRewardModel):
        return model.dim
    if isinstance(model, _FittedGPModel):
        return int(model.gp.hyperparams.length_scales.shape[0])
    return None


def _resolve_backend(model, config: PlannerConfig) -> str:
    from .features import FEATURE_DIM

    gp_backed = hasattr(model, "core_arrays") and _model_feature_dim(model) == FEATURE_DIM
    if config.backend == "python" or config.trace_path is not None:
        return "python"  # search tracing is a pure-Python feature
    if config.backend == "native":
        if not _HAVE_NATIVE:
            raise RuntimeError(
                "native backend requested but the compiled search core is not "
                "available (build the package with Cython and a C compiler)"
            )
        if not gp_backed:
            raise RuntimeError(
                "native backend requested but the model is not a GP over the "
                "standard feature encoding; use the python backend instead"
            )
        return "native"
    return "native" if (_HAVE_NATIVE and gp_backed) else "python"


def _plan_native(
    root: State,
    model,
    config: PlannerConfig,
    mdp: MDPConfig,
    acts: list[ActionPair],
) -> tuple[ActionPair, list[tuple[ActionPair, EdgeStats]]]:
    if root.timestep > mdp.horizon:
        raise ValueError(f"root timestep {root.timestep} is past the horizon {mdp.horizon}")
    if not acts:
        raise ValueError("empty action set")
    arrays = model.core_arrays()
    act_itn = np.ascontiguousarray([a[0] for a in acts], dtype=np.float64)
    act_irs = np.ascontiguousarray([a[1] for a in acts], dtype=np.float64)
    best_idx, q, n, edge_actions = _mcts_core.run_search(
        arrays["X"],
        arrays["weights"],
        arrays["chol"],
        arrays["alpha2"],
        arrays["ell2"],
        arrays["omega2"],
        arrays["y_shift"],
        arrays["y_scale"],
        float(root.prev_reward),
        float(root.prev_action[0]),
        float(root.prev_action[1]),
        int(root.timestep),
        int(mdp.horizon),
        float(mdp.gamma),
        act_itn,
        act_irs,
        float(config.c_puct),
        int(min(config.expansion_top_k, len(acts))),
        int(config.max_iterations),
        _MODE_CODES[config.reward_mode],
        float(config.beta1 + config.beta2),
        float(config.rmax_value if config.rmax_value is not None else 0.0),
        float(config.sigma_threshold if config.sigma_threshold is not None else 0.0),
        1 if config.rollout_policy == "greedy" else 0,
        int(config.rollouts_per_leaf),
        config.rng_seed & _rng.MASK,
    )
    stats = [
        (acts[int(edge_actions[i])], EdgeStats(float(q[i]), int(n[i])))
        for i in range(len(edge_actions))
    ]
    return acts[int(best_idx)], stats
