import random

import pytest

from vbmcts.agents import (
    AGENT_KINDS,
    AgentConfig,
    BASELINE_KINDS,
    BudgetExceededError,
    BudgetedEnv,
    GaussianBandit,
    baseline_policy,
    evaluate_policy,
    final_policy,
    train_vbmcts,
    validate_policy,
)
from vbmcts.env import MDPConfig, SurrogateEnv, SurrogateParams
from vbmcts.features import ACTION_GRID, ActionPair
from vbmcts.planner import PlannerConfig

MDP = MDPConfig()


def fresh_env():
    return SurrogateEnv(SurrogateParams(), MDP)


def quick_config(seed=0, budget=3, iterations=500):
    return AgentConfig(
        episodes_budget=budget,
        planner=PlannerConfig(max_iterations=iterations, c_puct=2000.0,
                              expansion_top_k=50),
        mdp=MDP,
        rng_seed=seed,
        mc_train_pool=32, mc_train_samples=8, mc_final_pool=64, mc_final_samples=16,
    )


# ---------------------------------------------------------------------------
# budget accounting
# ---------------------------------------------------------------------------


def test_budgeted_env_blocks_step_past_budget():
    env = BudgetedEnv(fresh_env(), episodes_budget=1, horizon=5)
    env.reset()
    for _ in range(5):
        env.step(ActionPair(0.1, 0.1))
    env.reset()
    with pytest.raises(BudgetExceededError):
        env.step(ActionPair(0.1, 0.1))


def test_budgeted_env_tracks_episodes():
    env = BudgetedEnv(fresh_env(), episodes_budget=3, horizon=5)
    env.reset()
    env.reset()
    assert env.episodes_started == 2
    assert env.steps_used == 0


@pytest.mark.parametrize("kind", BASELINE_KINDS)
def test_baselines_respect_step_budget(kind):
    config = quick_config(budget=2, iterations=200)
    policy, records = baseline_policy(kind, fresh_env(), config)
    train_steps = sum(len(r.transitions) for r in records)
    assert train_steps <= config.episodes_budget * MDP.horizon
    validate_policy(policy, MDP)
    assert all(r.phase == "train" for r in records)


def test_vbmcts_respects_step_budget():
    config = quick_config(budget=3, iterations=300)
    model, records = train_vbmcts(fresh_env(), config)
    assert sum(len(r.transitions) for r in records) == 15
    assert model.n == 15  # every transition becomes a training point
    assert [r.episode for r in records] == [1, 2, 3]


def test_vbmcts_initial_episode_fills_model():
    config = quick_config(budget=1)
    model, records = train_vbmcts(fresh_env(), config)
    assert len(records) == 1
    assert model.n == 5  # exactly the random initialization episode


def test_vbmcts_observation_count_grows_per_step():
    # after k full episodes the model holds k * horizon transitions
    config = quick_config(budget=4, iterations=200)
    model, records = train_vbmcts(fresh_env(), config)
    assert model.n == 4 * MDP.horizon
    for k, rec in enumerate(records, start=1):
        assert len(rec.transitions) == MDP.horizon
        assert rec.agent_name == "vbmcts"


# ---------------------------------------------------------------------------
# final policies
# ---------------------------------------------------------------------------


def test_final_policy_shape_and_grid():
    config = quick_config(budget=2, iterations=300)
    model, _ = train_vbmcts(fresh_env(), config)
    policy = final_policy(model, config)
    assert len(policy) == MDP.horizon
    validate_policy(policy, MDP)


def test_final_policy_is_deterministic():
    config = quick_config(budget=2, iterations=300)
    model, _ = train_vbmcts(fresh_env(), config)
    assert final_policy(model, config) == final_policy(model, config)


def test_evaluate_policy_records_final_phase():
    config = quick_config()
    policy = [ActionPair(0.5, 0.5)] * 5
    rec = evaluate_policy(fresh_env(), policy, config, "random", episode=21)
    assert rec.phase == "final"
    assert rec.episode == 21
    assert len(rec.transitions) == 5
    assert rec.total_return == pytest.approx(sum(t.reward for t in rec.transitions))


def test_validate_policy_rejects_bad_shapes():
    with pytest.raises(ValueError):
        validate_policy([ActionPair(0.5, 0.5)] * 4, MDP)
    with pytest.raises(ValueError):
        validate_policy([ActionPair(0.55, 0.5)] * 5, MDP)


# ---------------------------------------------------------------------------
# random search
# ---------------------------------------------------------------------------


def test_random_search_returns_best_training_episode():
    config = quick_config(budget=5)
    policy, records = baseline_policy("random", fresh_env(), config)
    best = max(records, key=lambda r: r.total_return)
    assert policy == [t.action for t in best.transitions]


def test_random_search_is_seeded():
    p1, _ = baseline_policy("random", fresh_env(), quick_config(seed=3))
    p2, _ = baseline_policy("random", fresh_env(), quick_config(seed=3))
    p3, _ = baseline_policy("random", fresh_env(), quick_config(seed=4))
    assert p1 == p2
    assert p1 != p3


# ---------------------------------------------------------------------------
# bandit baseline
# ---------------------------------------------------------------------------


def test_gaussian_bandit_posterior_update():
    b = GaussianBandit(3)
    b.update(0, 50.0)
    mean, var = b.posterior(0)
    v = 1.0 / (1.0 / 100.0**2 + 1.0 / 10.0**2)
    assert var == pytest.approx(v)
    assert mean == pytest.approx(v * 50.0 / 10.0**2)
    # untouched arm keeps the prior
    mean1, var1 = b.posterior(1)
    assert (mean1, var1) == (0.0, 100.0**2)


def test_gaussian_bandit_best_arm_prefers_evidence():
    b = GaussianBandit(5)
    for _ in range(3):
        b.update(2, 80.0)
    b.update(4, 20.0)
    assert b.best_arm() == 2


def test_gaussian_bandit_sample_argmax_finds_dominant_arm():
    b = GaussianBandit(4)
    for _ in range(50):
        b.update(1, 1000.0)
    rng = random.Random(0)
    assert all(b.sample_argmax(rng) == 1 for _ in range(20))


def test_smab_policy_uses_per_step_bandits():
    config = quick_config(budget=4)
    policy, records = baseline_policy("smab_thompson", fresh_env(), config)
    assert len(policy) == 5
    validate_policy(policy, MDP)
    assert len(records) == 4


# ---------------------------------------------------------------------------
# cross-entropy baseline
# ---------------------------------------------------------------------------


def test_cem_final_policy_was_actually_evaluated():
    config = quick_config(budget=4)
    policy, records = baseline_policy("cem", fresh_env(), config)
    evaluated = {tuple(t.action for t in r.transitions) for r in records}
    assert tuple(policy) in evaluated
    best = max(records, key=lambda r: r.total_return)
    assert tuple(policy) == tuple(t.action for t in best.transitions)


def test_cem_never_leaves_the_grid():
    for seed in range(3):
        policy, records = baseline_policy("cem", fresh_env(), quick_config(seed=seed))
        validate_policy(policy, MDP)
        for r in records:
            for t in r.transitions:
                validate_policy([t.action] * 5, MDP)


# ---------------------------------------------------------------------------
# model-based baselines
# ---------------------------------------------------------------------------


def test_gp_rmax_trains_and_returns_valid_policy():
    config = quick_config(budget=3, iterations=300)
    policy, records = baseline_policy("gp_rmax", fresh_env(), config)
    validate_policy(policy, MDP)
    assert sum(len(r.transitions) for r in records) == 15


def test_gp_mc_trains_and_returns_valid_policy():
    config = quick_config(budget=3)
    policy, records = baseline_policy("gp_mc", fresh_env(), config)
    validate_policy(policy, MDP)
    assert sum(len(r.transitions) for r in records) == 15


def test_gp_mc_is_seeded():
    p1, _ = baseline_policy("gp_mc", fresh_env(), quick_config(seed=5))
    p2, _ = baseline_policy("gp_mc", fresh_env(), quick_config(seed=5))
    assert p1 == p2


def test_unknown_baseline_rejected():
    with pytest.raises(ValueError, match="unknown"):
        baseline_policy("alphazero", fresh_env(), quick_config())


def test_agent_kind_listing():
    assert "vbmcts" in AGENT_KINDS
    assert set(BASELINE_KINDS) == {"random", "smab_thompson", "cem", "gp_rmax", "gp_mc"}


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def test_agent_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(episodes_budget=0)
    with pytest.raises(ValueError):
        AgentConfig(beta1=-1.0)
