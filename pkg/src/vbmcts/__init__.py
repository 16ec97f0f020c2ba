"""Data-efficient model-based planning for staged intervention scheduling.

A Gaussian-process reward model learned online, a Monte Carlo tree search
planner whose tree policy can add a posterior-variance bonus to rewards
(optimism about what the model hasn't seen), baseline agents, a
deterministic surrogate environment, and sample-complexity calculators.

The planner has two interchangeable backends: a pure-Python tree and a
compiled core (built at install time when a C toolchain is available).
``planner.native_available()`` reports which one you got; results agree
bit-for-bit either way.
"""

from .complexity import (
    ComplexityInputs,
    beta_from_lipschitz,
    covering_bound,
    repeated_point_variance,
    sigma_tol,
    step_bound,
    zeta_bound,
)
from .env import (
    EpisodeRecord,
    ExternalEnv,
    MDPConfig,
    SurrogateEnv,
    SurrogateParams,
    Transition,
    episode_return,
    read_records,
    serve,
    write_records,
)
from .features import ACTION_GRID, FEATURE_DIM, ActionPair, State, action_index, phi, phi_batch, start_state
from .gp import (
    FittedGP,
    GPHyperParams,
    GPRewardModel,
    Prediction,
    SearchConfig,
    TrainingSet,
    default_hyperparams,
    fit,
    gp_from_json,
    gp_to_json,
    kernel,
    log_marginal_likelihood,
    predict,
    predict_batch,
    select_hyperparams,
    variance_bonus_reward,
)
from .agents import (
    AGENT_KINDS,
    BASELINE_KINDS,
    AgentConfig,
    BudgetExceededError,
    BudgetedEnv,
    baseline_policy,
    evaluate_policy,
    final_policy,
    train_vbmcts,
    validate_policy,
)
from .harness import (
    ResultsTable,
    RunConfig,
    build_lookup_model,
    exhaustive_oracle,
    greedy_policy,
    learning_curve,
    run_config_from_json,
    run_experiment,
)
from .planner import (
    LookupRewardModel,
    Node,
    PlannerConfig,
    backup,
    expand,
    native_available,
    plan,
    plan_with_stats,
    plan_tree,
    rollout_value,
    select_action,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_GRID",
    "AGENT_KINDS",
    "ActionPair",
    "AgentConfig",
    "BASELINE_KINDS",
    "BudgetExceededError",
    "BudgetedEnv",
    "ComplexityInputs",
    "EpisodeRecord",
    "ExternalEnv",
    "FEATURE_DIM",
    "FittedGP",
    "GPHyperParams",
    "GPRewardModel",
    "LookupRewardModel",
    "MDPConfig",
    "Node",
    "PlannerConfig",
    "Prediction",
    "ResultsTable",
    "RunConfig",
    "SearchConfig",
    "State",
    "SurrogateEnv",
    "SurrogateParams",
    "TrainingSet",
    "Transition",
    "action_index",
    "backup",
    "baseline_policy",
    "beta_from_lipschitz",
    "build_lookup_model",
    "covering_bound",
    "default_hyperparams",
    "episode_return",
    "evaluate_policy",
    "exhaustive_oracle",
    "expand",
    "final_policy",
    "fit",
    "gp_from_json",
    "gp_to_json",
    "greedy_policy",
    "kernel",
    "learning_curve",
    "log_marginal_likelihood",
    "native_available",
    "phi",
    "phi_batch",
    "plan",
    "plan_tree",
    "plan_with_stats",
    "predict",
    "predict_batch",
    "read_records",
    "repeated_point_variance",
    "rollout_value",
    "run_config_from_json",
    "run_experiment",
    "select_action",
    "select_hyperparams",
    "serve",
    "sigma_tol",
    "start_state",
    "step_bound",
    "train_vbmcts",
    "validate_policy",
    "variance_bonus_reward",
    "write_records",
    "zeta_bound",
]
