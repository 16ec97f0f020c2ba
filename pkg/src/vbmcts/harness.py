"""Experiment harness: seed sweeps, summary tables, curves, and oracles.

``run_experiment`` fans (agent, seed) cells out over a process pool (cap
via the VBMCTS_WORKERS environment variable), each cell owning its own
environment instance; all file writes happen in the parent.  Summaries
are median/max/min of final-policy returns per agent; every number in the
table is recomputable from the persisted episode records.

Also here: the exhaustive enumeration oracle used to calibrate planner
tests, the greedy-per-step probe that demonstrates the surrogate's
delayed-effect trap, a lookup-model builder for planning against a known
environment, and dependency-free CSV/JSON/SVG reporting.
"""

from __future__ import annotations

import copy
import itertools
import json
import math
import os
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

from .agents import (
    AGENT_KINDS,
    AgentConfig,
    baseline_policy,
    evaluate_policy,
    final_policy,
    train_vbmcts,
    validate_policy,
)
from .env import (
    EpisodeRecord,
    ExternalEnv,
    MDPConfig,
    SurrogateEnv,
    SurrogateParams,
    write_records,
)
from .features import ActionPair
from .planner import LookupRewardModel, PlannerConfig


@dataclass
class RunConfig:
    """One benchmark run: which agents, which seeds, which environment."""

    agents: list[str] = field(default_factory=lambda: list(AGENT_KINDS))
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    episodes_budget: int = 20
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)
    external_command: list[str] | None = None
    mdp: MDPConfig = field(default_factory=MDPConfig)
    out_dir: str = "results"
    emit: tuple[str, ...] = ("csv", "json")
    planner_iterations: int = 5000
    planner_c_puct: float = 2000.0
    expansion_top_k: int = 50
    planner_backend: str = "auto"
    workers: int | None = None
    external_timeout: float = 30.0

    def __post_init__(self):
        if not self.agents:
            raise ValueError("need at least one agent")
        if not self.seeds:
            raise ValueError("need at least one seed")
        unknown = [a for a in self.agents if a not in AGENT_KINDS]
        if unknown:
            raise ValueError(f"unknown agents {unknown}; choose from {AGENT_KINDS}")
        bad = [e for e in self.emit if e not in ("csv", "json", "svg")]
        if bad:
            raise ValueError(f"unknown emit flags {bad}")


@dataclass
class ResultsTable:
    """Median/max/min of final-policy return per agent, plus failed seeds."""

    rows: dict[str, tuple[float, float, float]]  # agent -> (median, max, min)
    failures: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        for agent, (med, mx, mn) in self.rows.items():
            if not (mn <= med <= mx):
                raise ValueError(f"row {agent}: min {mn} <= median {med} <= max {mx} fails")


def run_config_from_json(doc: "dict | str | Path") -> RunConfig:
    """Build a RunConfig from a JSON document (dict, JSON text, or path)."""
    if isinstance(doc, (str, Path)):
        p = Path(doc)
        doc = json.loads(p.read_text() if p.exists() else str(doc))
    kwargs = dict(doc)
    if "surrogate" in kwargs and isinstance(kwargs["surrogate"], dict):
        kwargs["surrogate"] = SurrogateParams(**kwargs["surrogate"])
    if "mdp" in kwargs and isinstance(kwargs["mdp"], dict):
        kwargs["mdp"] = MDPConfig(**{
            k: tuple(v) if k == "reward_bounds" else v for k, v in kwargs["mdp"].items()
        })
    if "emit" in kwargs:
        kwargs["emit"] = tuple(kwargs["emit"])
    return RunConfig(**kwargs)


def _make_env(config: RunConfig):
    if config.external_command:
        return ExternalEnv(config.external_command, timeout=config.external_timeout)
    return SurrogateEnv(config.surrogate, config.mdp)


def _agent_config(config: RunConfig, seed: int) -> AgentConfig:
    return AgentConfig(
        episodes_budget=config.episodes_budget,
        planner=PlannerConfig(
            max_iterations=config.planner_iterations,
            c_puct=config.planner_c_puct,
            expansion_top_k=config.expansion_top_k,
            backend=config.planner_backend,
        ),
        mdp=config.mdp,
        rng_seed=seed,
    )


def _run_cell(config: RunConfig, agent: str, seed: int) -> dict:
    """Train + evaluate one (agent, seed); exceptions come back as data."""
    env = None
    final_env = None
    try:
        cfg = _agent_config(config, seed)
        env = _make_env(config)
        if agent == "vbmcts":
            model, records = train_vbmcts(env, cfg)
            policy = final_policy(model, cfg)
        else:
            policy, records = baseline_policy(agent, env, cfg)
        validate_policy(policy, config.mdp)
        final_env = _make_env(config)  # fresh instance for the held-out episode
        final_rec = evaluate_policy(final_env, policy, cfg, agent, config.episodes_budget + 1)
        return {
            "agent": agent,
            "seed": seed,
            "records": records + [final_rec],
            "final_return": final_rec.total_return,
            "policy": [[a[0], a[1]] for a in policy],
        }
    except Exception as exc:
        return {
            "agent": agent,
            "seed": seed,
            "error": f"{type(exc).__name__}: {exc}",
            "traceback": traceback.format_exc(),
        }
    finally:
        for e in (env, final_env):
            if e is not None and hasattr(e, "close"):
                e.close()


def _worker_cap(config: RunConfig) -> int:
    if config.workers:
        return config.workers
    env_cap = os.environ.get("VBMCTS_WORKERS")
    if env_cap:
        return max(1, int(env_cap))
    return max(1, os.cpu_count() or 1)


def run_experiment(config: RunConfig) -> ResultsTable:
    """Run the full sweep; writes records + requested reports to out_dir."""
    cells = [(agent, seed) for agent in config.agents for seed in config.seeds]
    outcomes: dict[tuple[str, int], dict] = {}
    workers = min(_worker_cap(config), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_cell, config, agent, seed): (agent, seed)
                for agent, seed in cells
            }
            for fut in as_completed(futures):
                outcomes[futures[fut]] = fut.result()
    else:
        for agent, seed in cells:
            outcomes[(agent, seed)] = _run_cell(config, agent, seed)

    rows: dict[str, tuple[float, float, float]] = {}
    failures: dict[str, list[int]] = {}
    all_records: list[EpisodeRecord] = []
    for agent in config.agents:
        finals = []
        for seed in config.seeds:
            out = outcomes[(agent, seed)]
            if "error" in out:
                failures.setdefault(agent, []).append(seed)
                continue
            finals.append(out["final_return"])
            all_records.extend(out["records"])
        if finals:
            rows[agent] = (statistics.median(finals), max(finals), min(finals))
    if not rows:
        details = "; ".join(
            f"{a}/{s}: {outcomes[(a, s)]['error']}" for a, s in cells if "error" in outcomes[(a, s)]
        )
        raise RuntimeError(f"every (agent, seed) cell failed: {details}")

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records(out_dir / "records.jsonl", all_records, append=False)
    table = ResultsTable(rows, failures)
    if "csv" in config.emit:
        write_results_csv(table, out_dir / "results.csv", agent_order=config.agents)
        write_records_csv(all_records, out_dir / "records.csv", gamma=config.mdp.gamma)
    if "json" in config.emit:
        (out_dir / "results.json").write_text(results_json(table, config))
    if "svg" in config.emit:
        curves = learning_curve(all_records)
        write_curves_csv(curves, out_dir / "curves.csv")
        render_curves_svg(curves, out_dir / "curves.svg")
    return table


def results_json(table: ResultsTable, config: RunConfig | None = None) -> str:
    doc = {
        "agents": {
            agent: {"median": med, "max": mx, "min": mn}
            for agent, (med, mx, mn) in table.rows.items()
        },
        "failures": table.failures,
    }
    if config is not None:
        echo = asdict(config)
        echo["emit"] = list(config.emit)
        doc["config"] = echo
    return json.dumps(doc, indent=2)


def write_results_csv(table: ResultsTable, path, agent_order: Sequence[str] | None = None):
    agents = [a for a in (agent_order or table.rows) if a in table.rows]
    with open(path, "w") as fh:
        fh.write("agent,median,max,min\n")
        for agent in agents:
            med, mx, mn = table.rows[agent]
            fh.write(f"{agent},{med!r},{mx!r},{mn!r}\n")


def write_records_csv(records: Sequence[EpisodeRecord], path, gamma: float = 1.0):
    with open(path, "w") as fh:
        fh.write("agent,seed,episode,step,itn,irs,reward,cumulative\n")
        for rec in records:
            cum, disc = 0.0, 1.0
            for step, tr in enumerate(rec.transitions, start=1):
                cum += disc * tr.reward
                disc *= gamma
                fh.write(
                    f"{rec.agent_name},{rec.seed},{rec.episode},{step},"
                    f"{tr.action[0]!r},{tr.action[1]!r},{tr.reward!r},{cum!r}\n"
                )


# ---------------------------------------------------------------------------
# learning curves
# ---------------------------------------------------------------------------


def learning_curve(records: Sequence[EpisodeRecord]) -> dict:
    """Per-episode and best-so-far series, per run and cross-seed mean.

    Only training episodes count (the held-out final evaluation is not a
    trial).  Returns ``{"per_run": {(agent, seed): {...}}, "mean": {agent:
    {...}}}``; when the records are a single run, the top level also
    carries that run's ``per_episode`` / ``best_so_far`` lists directly.
    Both series are emitted because "performance after k episodes" is
    ambiguous; ``best_so_far`` is the data-efficiency diagnostic.
    """
    if not records:
        raise ValueError("no records to build a learning curve from")
    runs: dict[tuple[str, int], list[EpisodeRecord]] = {}
    for rec in records:
        if rec.phase != "train":
            continue
        runs.setdefault((rec.agent_name, rec.seed), []).append(rec)
    if not runs:
        raise ValueError("records contain no training episodes")
    per_run = {}
    for key, recs in runs.items():
        recs = sorted(recs, key=lambda r: r.episode)
        returns = [r.total_return for r in recs]
        best = list(itertools.accumulate(returns, max))
        per_run[key] = {
            "episodes": [r.episode for r in recs],
            "per_episode": returns,
            "best_so_far": best,
        }
    mean: dict[str, dict] = {}
    agents = sorted({agent for agent, _ in per_run})
    for agent in agents:
        series = [v for (a, _), v in per_run.items() if a == agent]
        n_ep = min(len(s["per_episode"]) for s in series)
        mean[agent] = {
            "episodes": list(range(1, n_ep + 1)),
            "per_episode_mean": [
                sum(s["per_episode"][i] for s in series) / len(series) for i in range(n_ep)
            ],
            "best_so_far_mean": [
                sum(s["best_so_far"][i] for s in series) / len(series) for i in range(n_ep)
            ],
        }
    out = {"per_run": per_run, "mean": mean}
    if len(per_run) == 1:
        only = next(iter(per_run.values()))
        out["per_episode"] = only["per_episode"]
        out["best_so_far"] = only["best_so_far"]
    return out


def write_curves_csv(curves: dict, path):
    with open(path, "w") as fh:
        fh.write("agent,seed,episode,per_episode,best_so_far\n")
        for (agent, seed), s in sorted(curves["per_run"].items()):
            for i, ep in enumerate(s["episodes"]):
                fh.write(
                    f"{agent},{seed},{ep},{s['per_episode'][i]!r},{s['best_so_far'][i]!r}\n"
                )
        for agent, s in curves["mean"].items():
            for i, ep in enumerate(s["episodes"]):
                fh.write(
                    f"{agent},mean,{ep},{s['per_episode_mean'][i]!r},"
                    f"{s['best_so_far_mean'][i]!r}\n"
                )


_SVG_COLORS = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
)


def render_curves_svg(curves: dict, path, width: int = 720, height: int = 440):
    """Hand-rolled SVG line chart of the cross-seed mean best-so-far curves."""
    margin = 56
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    mean = curves["mean"]
    xs = [ep for s in mean.values() for ep in s["episodes"]]
    ys = [v for s in mean.values() for v in s["best_so_far_mean"]]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">episode</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.1f})">best return so far (mean)</text>',
    ]
    for i in range(5):
        yv = y_lo + (y_hi - y_lo) * i / 4
        parts.append(
            f'<text x="{margin - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
            f'font-size="11">{yv:.1f}</text>'
        )
        parts.append(
            f'<line x1="{margin}" y1="{sy(yv):.1f}" x2="{width - margin}" '
            f'y2="{sy(yv):.1f}" stroke="#dddddd"/>'
        )
    for ep in range(x_lo, x_hi + 1, max(1, (x_hi - x_lo) // 10 or 1)):
        parts.append(
            f'<text x="{sx(ep):.1f}" y="{height - margin + 16}" text-anchor="middle" '
            f'font-size="11">{ep}</text>'
        )
    for i, (agent, s) in enumerate(sorted(mean.items())):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(
            f"{sx(ep):.1f},{sy(v):.1f}"
            for ep, v in zip(s["episodes"], s["best_so_far_mean"])
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        ly = margin + 16 * i
        parts.append(
            f'<line x1="{width - margin - 130}" y1="{ly}" x2="{width - margin - 106}" '
            f'y2="{ly}" stroke="{color}" stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{width - margin - 100}" y="{ly + 4}" font-size="12">{agent}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# ---------------------------------------------------------------------------
# oracles and probes
# ---------------------------------------------------------------------------

_ORACLE_CAP = 10**6


def exhaustive_oracle(
    params: SurrogateParams,
    reduced_grid: Sequence[ActionPair],
    horizon: int,
    gamma: float = 1.0,
) -> tuple[list[ActionPair], float]:
    """Brute-force optimum over every action sequence on the surrogate.

    Enumerates ``|grid|^horizon`` sequences (capped at 1e6), each on a
    fresh environment; ties resolve to the lexicographically first
    sequence in grid order.  Refuses a noisy environment -- the oracle is
    only meaningful for the deterministic surrogate.
    """
    if params.obs_noise_std != 0:
        raise ValueError("exhaustive oracle requires a deterministic environment (obs_noise_std = 0)")
    n_seq = len(reduced_grid) ** horizon
    if n_seq > _ORACLE_CAP:
        raise ValueError(f"{len(reduced_grid)}^{horizon} = {n_seq} sequences exceeds the {_ORACLE_CAP} cap")
    mdp = MDPConfig(horizon=horizon, gamma=gamma)
    best_value, best_seq = -math.inf, None
    for seq in itertools.product(reduced_grid, repeat=horizon):
        env = SurrogateEnv(params, mdp)
        env.reset()
        total, disc = 0.0, 1.0
        for a in seq:
            _, r, _ = env.step(a)
            total += disc * r
            disc *= gamma
        if total > best_value:
            best_value, best_seq = total, seq
    return list(best_seq), best_value


def greedy_policy(
    params: SurrogateParams,
    grid: Sequence[ActionPair],
    horizon: int,
    gamma: float = 1.0,
) -> tuple[list[ActionPair], float]:
    """Myopic per-step argmax on the live environment (probe via cloning).

    This is the policy a perfect one-step model would follow; on the
    default surrogate it is strictly worse than the exhaustive optimum
    because it never pays for carryover or rations resistance.
    """
    mdp = MDPConfig(horizon=horizon, gamma=gamma)
    env = SurrogateEnv(params, mdp)
    env.reset()
    policy, total, disc = [], 0.0, 1.0
    for _ in range(horizon):
        best_a, best_r = None, -math.inf
        for a in grid:
            probe = copy.deepcopy(env)
            _, r, _ = probe.step(a)
            if r > best_r:
                best_a, best_r = a, r
        _, r, _ = env.step(best_a)
        policy.append(best_a)
        total += disc * r
        disc *= gamma
    return policy, total


def build_lookup_model(
    params: SurrogateParams,
    grid: Sequence[ActionPair],
    horizon: int,
) -> LookupRewardModel:
    """Tabulate exact rewards for every reachable (state, action) prefix.

    Walks the full prefix tree of grid actions (so the table covers every
    state the planner can construct from exact mean predictions) and
    records the environment's reward under the lookup model's key scheme.
    A key collision with a different reward is a state-aliasing bug and
    raises.
    """
    if params.obs_noise_std != 0:
        raise ValueError("lookup model requires a deterministic environment")
    n_entries = sum(len(grid) ** d for d in range(1, horizon + 1))
    if n_entries > _ORACLE_CAP:
        raise ValueError(f"prefix tree has {n_entries} entries, over the {_ORACLE_CAP} cap")
    mdp = MDPConfig(horizon=horizon)
    table: dict = {}

    def visit(env: SurrogateEnv, state, depth: int):
        if depth > horizon:
            return
        for a in grid:
            probe = copy.deepcopy(env)
            next_state, r, _ = probe.step(a)
            key = LookupRewardModel.make_key(state, a)
            if key in table and abs(table[key] - r) > 1e-9:
                raise ValueError(f"state aliasing at key {key}: {table[key]} vs {r}")
            table[key] = r
            visit(probe, next_state, depth + 1)

    root_env = SurrogateEnv(params, mdp)
    root_state = root_env.reset()
    visit(root_env, root_state, 1)
    return LookupRewardModel(table)
