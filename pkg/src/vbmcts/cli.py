"""Command-line entry point.

Subcommands:
  run        benchmark agents on the surrogate (or an external env command)
  curve      learning curves from a records.jsonl file
  oracle     exhaustive optimum on a reduced action grid
  bound      evaluate the sample-complexity calculators
  serve-env  expose the surrogate over the JSON-lines stdio protocol
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys

from .complexity import (
    ComplexityInputs,
    beta_from_lipschitz,
    covering_bound,
    sigma_tol,
    step_bound,
    zeta_bound,
)
from .env import MDPConfig, SurrogateEnv, SurrogateParams, read_records, serve
from .features import ActionPair
from .harness import (
    RunConfig,
    exhaustive_oracle,
    learning_curve,
    run_config_from_json,
    run_experiment,
    write_curves_csv,
    render_curves_svg,
)


def _add_run(sub):
    p = sub.add_parser("run", help="benchmark agents over seeds")
    p.add_argument("--config", help="JSON file mirroring RunConfig; flags override it")
    p.add_argument("--agents", nargs="+", help="agents to run (default: all)")
    p.add_argument("--seeds", type=int, nargs="+", help="seeds (default: 0..9)")
    p.add_argument("--episodes", type=int, help="episode budget per run (default 20)")
    p.add_argument("--iterations", type=int, help="planner iterations per step")
    p.add_argument("--backend", choices=("auto", "python", "native"))
    p.add_argument("--env", metavar="CMD",
                   help="external env command, one shell-quoted string "
                        "(JSON-lines stdio); default: built-in surrogate")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--emit", nargs="+", choices=("csv", "json", "svg"),
                   help="report formats (default: csv json)")
    p.add_argument("--workers", type=int, help="process pool size (default: VBMCTS_WORKERS or CPU count)")


def _run_config(args) -> RunConfig:
    cfg = run_config_from_json(args.config) if args.config else RunConfig()
    if args.agents:
        cfg.agents = args.agents
    if args.seeds is not None:
        cfg.seeds = args.seeds
    if args.episodes is not None:
        cfg.episodes_budget = args.episodes
    if args.iterations is not None:
        cfg.planner_iterations = args.iterations
    if args.backend:
        cfg.planner_backend = args.backend
    if args.env:
        cfg.external_command = tuple(shlex.split(args.env))
    if args.out:
        cfg.out_dir = args.out
    if args.emit:
        cfg.emit = tuple(args.emit)
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.__post_init__()  # re-validate after overrides
    return cfg


def _cmd_run(args) -> int:
    cfg = _run_config(args)
    table = run_experiment(cfg)
    width = max(len(a) for a in table.rows)
    print(f"{'agent':<{width}}  {'median':>10}  {'max':>10}  {'min':>10}")
    for agent in cfg.agents:
        if agent not in table.rows:
            print(f"{agent:<{width}}  (all seeds failed)")
            continue
        med, mx, mn = table.rows[agent]
        print(f"{agent:<{width}}  {med:>10.3f}  {mx:>10.3f}  {mn:>10.3f}")
    for agent, seeds in table.failures.items():
        print(f"note: {agent} failed on seeds {seeds}; excluded from the table")
    print(f"reports written to {cfg.out_dir}/")
    return 0


def _cmd_curve(args) -> int:
    records = read_records(args.records)
    curves = learning_curve(records)
    if args.csv:
        write_curves_csv(curves, args.csv)
        print(f"wrote {args.csv}")
    if args.svg:
        render_curves_svg(curves, args.svg)
        print(f"wrote {args.svg}")
    if not args.csv and not args.svg:
        for agent, s in curves["mean"].items():
            tail = s["best_so_far_mean"][-1]
            print(f"{agent}: best-so-far mean after {len(s['episodes'])} episodes = {tail:.3f}")
    return 0


def _parse_grid(spec: str) -> list[ActionPair]:
    grid = []
    for token in spec.split(";"):
        itn, irs = token.split(",")
        grid.append(ActionPair(float(itn), float(irs)))
    return grid


def _cmd_oracle(args) -> int:
    if args.grid:
        grid = _parse_grid(args.grid)
    else:
        levels = [0.1, 0.5, 1.0]
        grid = [ActionPair(i, j) for i in levels for j in levels]
    policy, value = exhaustive_oracle(SurrogateParams(), grid, args.horizon)
    print(f"oracle value: {value!r}")
    print("oracle policy:")
    for t, a in enumerate(policy, start=1):
        print(f"  t={t}: itn={a[0]:.1f} irs={a[1]:.1f}")
    return 0


def _cmd_bound(args) -> int:
    inputs = ComplexityInputs(
        v_max=args.v_max,
        epsilon=args.epsilon,
        delta=args.delta,
        epsilon1=args.epsilon1,
        delta1=args.delta1,
        gamma=args.gamma,
        noise_variance=args.noise_variance,
        dims=args.dims,
        side_lengths=tuple(args.side_lengths) if args.side_lengths else None,
        lipschitz_r=args.lipschitz_r,
        lipschitz_p=args.lipschitz_p,
    )
    out = {"sigma_tol": sigma_tol(inputs)}
    if inputs.side_lengths is not None:
        cover = covering_bound(inputs.side_lengths, args.d_max, inputs.dims)
        out["covering"] = cover
        out["zeta"] = zeta_bound(inputs, cover)
        out["steps"] = step_bound(inputs, cover)
    if inputs.lipschitz_r is not None and inputs.lipschitz_p is not None:
        b1, b2 = beta_from_lipschitz(inputs)
        out["beta1"], out["beta2"] = b1, b2
    print(json.dumps(out, indent=2))
    return 0


def _cmd_serve_env(args) -> int:
    params = SurrogateParams(obs_noise_std=args.noise)
    env = SurrogateEnv(params, MDPConfig(horizon=args.horizon), seed=args.seed)
    serve(env, sys.stdin, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vbmcts",
        description="model-based planning agents for 5-step intervention scheduling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run(sub)

    p = sub.add_parser("curve", help="learning curves from saved records")
    p.add_argument("records", help="records.jsonl written by `vbmcts run`")
    p.add_argument("--csv", help="write the curve table here")
    p.add_argument("--svg", help="write an SVG chart here")

    p = sub.add_parser("oracle", help="exhaustive optimum on a reduced grid")
    p.add_argument("--grid", help='actions as "itn,irs;itn,irs;..." (default: 3x3 levels)')
    p.add_argument("--horizon", type=int, default=5)

    p = sub.add_parser("bound", help="sample-complexity calculators")
    p.add_argument("--v-max", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--epsilon1", type=float, default=0.1)
    p.add_argument("--delta1", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--noise-variance", type=float, default=0.01)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--side-lengths", type=float, nargs="+")
    p.add_argument("--d-max", type=float, default=0.5)
    p.add_argument("--lipschitz-r", type=float)
    p.add_argument("--lipschitz-p", type=float)

    p = sub.add_parser("serve-env", help="serve the surrogate over stdio JSON lines")
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    return parser


_COMMANDS = {
    "run": _cmd_run,
    "curve": _cmd_curve,
    "oracle": _cmd_oracle,
    "bound": _cmd_bound,
    "serve-env": _cmd_serve_env,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
