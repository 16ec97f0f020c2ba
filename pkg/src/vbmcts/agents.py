"""Agents: variance-bonus MCTS training and the comparison baselines.

The headline agent interleaves environment steps with world-model updates:
one random initialization episode, then planned episodes where every
action comes from tree search under the variance-bonus reward and the GP
is refit after every single transition (hyperparameter search once per
episode by default).  The final decision is planned offline against the
learned model with the plain mean reward, rolling the state forward under
mean predictions -- no environment access.

Baselines: best-of-budget random search, per-year independent Gaussian
Thompson sampling, cross-entropy search over the flattened policy vector,
GP-Rmax (optimistic substitution wherever the model is uncertain), and
GP-MC (posterior-sampling sequence selection).  Every agent runs behind a
step-counting wrapper that enforces the episode budget.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .env import EpisodeRecord, MDPConfig, Transition, episode_return
from .features import ActionPair, State, start_state
from .gp import FittedGP, GPRewardModel, SearchConfig
from .planner import PlannerConfig, _FittedGPModel, plan

BASELINE_KINDS = ("random", "smab_thompson", "cem", "gp_rmax", "gp_mc")
AGENT_KINDS = ("vbmcts",) + BASELINE_KINDS


@dataclass
class AgentConfig:
    """Shared agent settings; baselines reuse the budget/mdp/seed fields."""

    episodes_budget: int = 20  # includes the initialization episode
    # Returns here run ~200, so exploration terms are scaled to match:
    # c_puct competes with raw Q values and beta with standardized
    # variance (see train_vbmcts).
    planner: PlannerConfig = field(
        default_factory=lambda: PlannerConfig(
            max_iterations=5000, c_puct=2000.0, expansion_top_k=50
        )
    )
    beta1: float = 1.0
    beta2: float = 0.0
    mdp: MDPConfig = field(default_factory=MDPConfig)
    rng_seed: int = 0
    gp_search: SearchConfig = field(default_factory=SearchConfig)
    hyperopt_every_step: bool = False
    rmax_sigma_fraction: float = 0.5  # "unknown" = variance above this * alpha^2
    mc_train_pool: int = 256
    mc_train_samples: int = 32
    mc_final_pool: int = 2000
    mc_final_samples: int = 200

    def __post_init__(self):
        if self.episodes_budget < 1:
            raise ValueError("episodes_budget must be >= 1")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("betas must be >= 0")


class BudgetExceededError(RuntimeError):
    """An agent tried to use more environment steps than the budget allows."""


class BudgetedEnv:
    """Counting wrapper: hard-fails past episodes_budget * horizon steps."""

    def __init__(self, env, episodes_budget: int, horizon: int):
        self.env = env
        self.max_steps = episodes_budget * horizon
        self.steps_used = 0
        self.episodes_started = 0

    def reset(self) -> State:
        self.episodes_started += 1
        return self.env.reset()

    def step(self, action: ActionPair):
        if self.steps_used >= self.max_steps:
            raise BudgetExceededError(
                f"environment budget exhausted ({self.max_steps} steps)"
            )
        self.steps_used += 1
        return self.env.step(action)


def validate_policy(policy, mdp: MDPConfig) -> None:
    if len(policy) != mdp.horizon:
        raise ValueError(f"policy length {len(policy)} != horizon {mdp.horizon}")
    grid = set(mdp.action_grid)
    for a in policy:
        key = ActionPair(round(a[0], 10), round(a[1], 10))
        if key not in grid:
            raise ValueError(f"policy action {tuple(a)} is off the grid")


def _plan_seed(seed: int, episode: int, step: int) -> int:
    # distinct, reproducible stream per planning call
    return (seed * 1_000_003 + episode * 1_009 + step) & ((1 << 63) - 1)


def _play_episode(env, actions) -> list[Transition]:
    s = env.reset()
    out = []
    for a in actions:
        s2, r, _ = env.step(a)
        out.append(Transition(s, a, r, s2))
        s = s2
    return out


def _record(config: AgentConfig, agent: str, episode: int, phase: str, transitions) -> EpisodeRecord:
    return EpisodeRecord(
        seed=config.rng_seed,
        agent_name=agent,
        episode=episode,
        phase=phase,
        transitions=list(transitions),
        total_return=episode_return(transitions, config.mdp.gamma),
    )


def evaluate_policy(env, policy, config: AgentConfig, agent: str, episode: int) -> EpisodeRecord:
    """Run a fixed policy once and record it (phase='final')."""
    transitions = _play_episode(env, policy)
    return _record(config, agent, episode, "final", transitions)


# ---------------------------------------------------------------------------
# variance-bonus MCTS agent
# ---------------------------------------------------------------------------


def train_vbmcts(env, config: AgentConfig) -> tuple[GPRewardModel, list[EpisodeRecord]]:
    """Train the world model under the episode budget; returns (model, records).

    Episode 1 is a uniformly random policy (the model needs data before
    planning means anything); episodes 2..budget plan every step with the
    variance-bonus reward and refit the GP after every transition.
    Hyperparameters are re-selected at each episode boundary (and after
    every step too if ``config.hyperopt_every_step``).
    """
    mdp = config.mdp
    grid = mdp.action_grid
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng = random.Random(config.rng_seed)
    model = GPRewardModel(search=config.gp_search)
    records: list[EpisodeRecord] = []

    transitions = _play_episode(wrapped, [rng.choice(grid) for _ in range(mdp.horizon)])
    for tr in transitions:
        model.add_observation(tr.state, tr.action, tr.reward)
    model.refit(optimize=True)
    records.append(_record(config, "vbmcts", 1, "train", transitions))

    for ep in range(2, config.episodes_budget + 1):
        model.refit(optimize=True)  # hyperparameter search once per episode
        s = wrapped.reset()
        transitions = []
        for t in range(1, mdp.horizon + 1):
            # Optimism lives in the standardized space the GP models, so
            # the bonus tracks the reward scale instead of its square:
            # mu + beta * var_std, mapped back to raw units, divides beta
            # by the target scale.  (Refits change the scale, hence per
            # step.)
            beta_scale = model.y_scale or 1.0
            pconf = replace(
                config.planner,
                reward_mode="variance_bonus",
                beta1=config.beta1 / beta_scale,
                beta2=config.beta2 / beta_scale,
                rng_seed=_plan_seed(config.rng_seed, ep, t),
            )
            a = plan(s, model, pconf, mdp)
            s2, r, _ = wrapped.step(a)
            transitions.append(Transition(s, a, r, s2))
            model.add_observation(s, a, r)
            model.refit(optimize=config.hyperopt_every_step)
            s = s2
        records.append(_record(config, "vbmcts", ep, "train", transitions))
    return model, records


def final_policy(model, config: AgentConfig) -> list[ActionPair]:
    """Plan the deployment policy offline with the mean reward.

    Each step is planned by full tree search; the state then advances under
    the model's mean reward prediction.  Deterministic given (model,
    config) -- the environment is never touched.
    """
    if isinstance(model, FittedGP):
        model = _FittedGPModel(model)
    mdp = config.mdp
    s = start_state()
    policy: list[ActionPair] = []
    for t in range(1, mdp.horizon + 1):
        pconf = replace(
            config.planner,
            reward_mode="mean",
            rng_seed=_plan_seed(config.rng_seed, 0, t),
        )
        a = plan(s, model, pconf, mdp)
        mean, _ = model.predict_reward(s, a)
        policy.append(a)
        s = State(float(mean), a, t + 1)
    return policy


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def baseline_policy(kind: str, env, config: AgentConfig):
    """Train a comparison agent; returns (policy, records)."""
    try:
        fn = _BASELINES[kind]
    except KeyError:
        raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINE_KINDS}") from None
    return fn(env, config)


def _random_search(env, config: AgentConfig):
    mdp = config.mdp
    grid = mdp.action_grid
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng = random.Random(config.rng_seed)
    records = []
    best_ret, best_actions = -math.inf, None
    for ep in range(1, config.episodes_budget + 1):
        actions = [rng.choice(grid) for _ in range(mdp.horizon)]
        transitions = _play_episode(wrapped, actions)
        rec = _record(config, "random", ep, "train", transitions)
        records.append(rec)
        if rec.total_return > best_ret:
            best_ret, best_actions = rec.total_return, actions
    return list(best_actions), records


class GaussianBandit:
    """Known-variance Gaussian Thompson sampling over a fixed arm set."""

    def __init__(self, n_arms: int, prior_var: float = 100.0**2, obs_var: float = 10.0**2):
        self.n_arms = n_arms
        self.prior_var = prior_var
        self.obs_var = obs_var
        self.counts = [0] * n_arms
        self.sums = [0.0] * n_arms

    def posterior(self, arm: int) -> tuple[float, float]:
        v = 1.0 / (1.0 / self.prior_var + self.counts[arm] / self.obs_var)
        return v * self.sums[arm] / self.obs_var, v

    def update(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward

    def sample_argmax(self, rng: random.Random) -> int:
        best, best_v = 0, -math.inf
        for a in range(self.n_arms):
            mean, var = self.posterior(a)
            v = rng.gauss(mean, math.sqrt(var))
            if v > best_v:
                best, best_v = a, v
        return best

    def best_arm(self) -> int:
        best, best_m = 0, -math.inf
        for a in range(self.n_arms):
            mean, _ = self.posterior(a)
            if mean > best_m:
                best, best_m = a, mean
        return best


def _smab_thompson(env, config: AgentConfig):
    """One independent bandit per year; ignores all cross-year structure."""
    mdp = config.mdp
    grid = mdp.action_grid
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng = random.Random(config.rng_seed)
    bandits = [GaussianBandit(len(grid)) for _ in range(mdp.horizon)]
    records = []
    for ep in range(1, config.episodes_budget + 1):
        s = wrapped.reset()
        transitions = []
        for t in range(mdp.horizon):
            arm = bandits[t].sample_argmax(rng)
            s2, r, _ = wrapped.step(grid[arm])
            transitions.append(Transition(s, grid[arm], r, s2))
            bandits[t].update(arm, r)
            s = s2
        records.append(_record(config, "smab_thompson", ep, "train", transitions))
    policy = [grid[b.best_arm()] for b in bandits]
    return policy, records


def _snap_to_grid(x: float) -> float:
    # deterministic half-up rounding onto the 0.1 grid, clipped to (0, 1]
    c = math.floor(x * 10.0 + 0.5) / 10.0
    return min(1.0, max(0.1, c))


def _cem(env, config: AgentConfig, population: int = 30, elite_frac: float = 0.2,
         max_iters: int = 6):
    """Cross-entropy search over the 2T-dim policy vector, env-evaluated.

    Candidates are sampled from an independent Gaussian, snapped to the
    grid for evaluation.  Evaluation spends real episodes, so the budget
    usually truncates the first population; the final policy is the best
    candidate actually evaluated.
    """
    mdp = config.mdp
    dim = 2 * mdp.horizon
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng = np.random.default_rng(config.rng_seed)
    mean = np.full(dim, 0.55)
    std = np.full(dim, 0.3)
    n_elite = max(1, int(round(population * elite_frac)))
    records = []
    best_ret, best_policy = -math.inf, None
    budget_left = config.episodes_budget
    ep = 0
    for _ in range(max_iters):
        if budget_left == 0:
            break
        raw = rng.normal(mean, std, size=(population, dim))
        gen_scores = []
        for cand in raw:
            if budget_left == 0:
                break
            actions = [
                ActionPair(_snap_to_grid(cand[2 * t]), _snap_to_grid(cand[2 * t + 1]))
                for t in range(mdp.horizon)
            ]
            ep += 1
            transitions = _play_episode(wrapped, actions)
            rec = _record(config, "cem", ep, "train", transitions)
            records.append(rec)
            budget_left -= 1
            gen_scores.append(rec.total_return)
            if rec.total_return > best_ret:
                best_ret, best_policy = rec.total_return, actions
        if len(gen_scores) < population:
            break  # truncated generation: no distribution update possible
        order = np.argsort(-np.asarray(gen_scores), kind="stable")[:n_elite]
        elite = raw[order]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), 0.05)
    return list(best_policy), records


def _gp_rmax(env, config: AgentConfig):
    """Optimistic substitution: uncertain (state, action)s score R_max.

    Same training skeleton as the variance-bonus agent, but the planner
    replaces the reward with the MDP's upper reward bound wherever the
    posterior variance exceeds the threshold, so fully-unknown regions are
    worth R_max per remaining step.
    """
    mdp = config.mdp
    grid = mdp.action_grid
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng = random.Random(config.rng_seed)
    model = GPRewardModel(search=config.gp_search)
    records = []

    transitions = _play_episode(wrapped, [rng.choice(grid) for _ in range(mdp.horizon)])
    for tr in transitions:
        model.add_observation(tr.state, tr.action, tr.reward)
    model.refit(optimize=True)
    records.append(_record(config, "gp_rmax", 1, "train", transitions))

    for ep in range(2, config.episodes_budget + 1):
        model.refit(optimize=True)
        s = wrapped.reset()
        transitions = []
        for t in range(1, mdp.horizon + 1):
            pconf = replace(
                config.planner,
                reward_mode="rmax",
                rmax_value=mdp.reward_bounds[1],
                sigma_threshold=model.sigma_threshold(config.rmax_sigma_fraction),
                rng_seed=_plan_seed(config.rng_seed, ep, t),
            )
            a = plan(s, model, pconf, mdp)
            s2, r, _ = wrapped.step(a)
            transitions.append(Transition(s, a, r, s2))
            model.add_observation(s, a, r)
            model.refit(optimize=config.hyperopt_every_step)
            s = s2
        records.append(_record(config, "gp_rmax", ep, "train", transitions))
    policy = final_policy(model, config)
    return policy, records


def _gp_mc(env, config: AgentConfig):
    """Posterior-sampling sequence selection on the GP world model.

    Each episode draws a pool of random action sequences, scores each by
    the mean of Monte-Carlo posterior-sample returns, and executes the
    best.  The final decision uses a larger pool and sample count.
    """
    mdp = config.mdp
    grid = mdp.action_grid
    grid_arr = np.array([[a[0], a[1]] for a in grid])
    wrapped = BudgetedEnv(env, config.episodes_budget, mdp.horizon)
    rng_py = random.Random(config.rng_seed)
    rng = np.random.default_rng(config.rng_seed)
    model = GPRewardModel(search=config.gp_search)
    records = []

    transitions = _play_episode(wrapped, [rng_py.choice(grid) for _ in range(mdp.horizon)])
    for tr in transitions:
        model.add_observation(tr.state, tr.action, tr.reward)
    records.append(_record(config, "gp_mc", 1, "train", transitions))

    def pick_sequence(pool: int, samples: int):
        idx = rng.integers(0, len(grid), size=(pool, mdp.horizon))
        seqs = grid_arr[idx]  # (pool, T, 2)
        scores = _chunked_sample_returns(model, seqs, samples, rng, mdp.gamma)
        best = int(np.argmax(scores))  # first max wins
        return [ActionPair(float(a[0]), float(a[1])) for a in seqs[best]]

    for ep in range(2, config.episodes_budget + 1):
        model.refit(optimize=True)
        actions = pick_sequence(config.mc_train_pool, config.mc_train_samples)
        transitions = _play_episode(wrapped, actions)
        for tr in transitions:
            model.add_observation(tr.state, tr.action, tr.reward)
        records.append(_record(config, "gp_mc", ep, "train", transitions))

    model.refit(optimize=True)
    policy = pick_sequence(config.mc_final_pool, config.mc_final_samples)
    return policy, records


def _chunked_sample_returns(model: GPRewardModel, seqs: np.ndarray, samples: int,
                            rng: np.random.Generator, gamma: float) -> np.ndarray:
    chunk = max(1, 65536 // max(1, samples))
    parts = [
        model.sample_returns(seqs[lo : lo + chunk], samples, rng, gamma)
        for lo in range(0, seqs.shape[0], chunk)
    ]
    return np.concatenate(parts)


_BASELINES = {
    "random": _random_search,
    "smab_thompson": _smab_thompson,
    "cem": _cem,
    "gp_rmax": _gp_rmax,
    "gp_mc": _gp_mc,
}
