"""Intervention-scheduling environments and the external-process protocol.

The built-in surrogate is a deterministic five-step model of seasonal
vector-control planning.  Each year the planner chooses ITN and IRS
coverage levels; the reward is averted burden minus intervention cost,
with two delayed effects that make myopic planning suboptimal:

* a carryover credit for net distributions that are still protective the
  following year (paying off only when coverage is then reduced), and
* insecticide resistance that erodes IRS efficacy in proportion to all
  IRS deployed in earlier years.

Reward at step t for action (itn, irs) after previous action with
itn_prev:

    res_t = max(0, 1 - resistance_rate * sum_{j<t} irs_j)
    r_t   = efficacy_scale * (1 - exp(-saturation_itn * itn
                                      - saturation_irs * irs * res_t))
            - cost_itn * itn - cost_irs * irs
            + carryover * itn_prev * (1 - itn)

The observable Markov state is (previous reward, previous action,
timestep); resistance is intentionally latent, so a learned world model
has to pick it up through the timestep features.

External simulators plug in over a line-delimited JSON protocol on
stdin/stdout (one request, one response per line); see
:class:`ExternalEnv` and :func:`serve`.
"""

from __future__ import annotations

import copy
import json
import math
import queue
import random
import subprocess
import threading
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .features import ActionPair, State, start_state


@dataclass(frozen=True)
class MDPConfig:
    """Horizon, discount, action grid, and reward range of the task."""

    horizon: int = 5
    gamma: float = 1.0
    action_grid_step: float = 0.1
    reward_bounds: tuple[float, float] = (-80.0, 90.0)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        k = round(1.0 / self.action_grid_step)
        if k < 1 or abs(k * self.action_grid_step - 1.0) > 1e-9:
            raise ValueError(
                f"action_grid_step {self.action_grid_step} must divide 1.0 evenly"
            )
        if self.reward_bounds[0] >= self.reward_bounds[1]:
            raise ValueError(f"empty reward_bounds {self.reward_bounds}")

    @property
    def action_grid(self) -> tuple[ActionPair, ...]:
        """All grid actions in ITN-major order, components in (0, 1]."""
        k = round(1.0 / self.action_grid_step)
        step = self.action_grid_step
        # round to the canonical decimal so 3 * 0.1 == 0.3 exactly and
        # grid actions compare equal wherever they came from
        return tuple(
            ActionPair(round(i * step, 10), round(j * step, 10))
            for i in range(1, k + 1)
            for j in range(1, k + 1)
        )


@dataclass(frozen=True)
class SurrogateParams:
    """Coefficients of the surrogate reward model (all non-negative)."""

    efficacy_scale: float = 90.0
    saturation_itn: float = 1.0
    saturation_irs: float = 1.5
    cost_itn: float = 38.0
    cost_irs: float = 42.0
    carryover: float = 65.0
    resistance_rate: float = 0.4
    obs_noise_std: float = 0.0

    def __post_init__(self):
        for name in (
            "efficacy_scale",
            "saturation_itn",
            "saturation_irs",
            "cost_itn",
            "cost_irs",
            "carryover",
            "resistance_rate",
            "obs_noise_std",
        ):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


class SurrogateEnv:
    """Deterministic surrogate simulator (optional Gaussian reward noise).

    ``reset() -> State`` and ``step(action) -> (next_state, reward, done)``.
    Actions must lie on the MDP's grid; stepping a finished episode raises.
    """

    def __init__(
        self,
        params: SurrogateParams | None = None,
        mdp: MDPConfig | None = None,
        seed: int | None = None,
    ):
        self.params = params or SurrogateParams()
        self.mdp = mdp or MDPConfig()
        self._rng = random.Random(seed) if self.params.obs_noise_std > 0 else None
        self._state: State | None = None
        self._irs_cum = 0.0
        self._done = True

    def reset(self) -> State:
        self._state = start_state()
        self._irs_cum = 0.0
        self._done = False
        return self._state

    def step(self, action: ActionPair) -> tuple[State, float, bool]:
        if self._done or self._state is None:
            raise RuntimeError("episode is over (or reset() was never called)")
        itn, irs = self._snap(action)
        p = self.params
        prev_itn = self._state.prev_action[0]
        res = max(0.0, 1.0 - p.resistance_rate * self._irs_cum)
        reward = (
            p.efficacy_scale
            * (1.0 - math.exp(-p.saturation_itn * itn - p.saturation_irs * irs * res))
            - p.cost_itn * itn
            - p.cost_irs * irs
            + p.carryover * prev_itn * (1.0 - itn)
        )
        if self._rng is not None:
            reward += self._rng.gauss(0.0, p.obs_noise_std)
        self._irs_cum += irs
        t_next = self._state.timestep + 1
        self._state = State(reward, ActionPair(itn, irs), t_next)
        self._done = t_next > self.mdp.horizon
        return self._state, reward, self._done

    def _snap(self, action: ActionPair) -> tuple[float, float]:
        step = self.mdp.action_grid_step
        k = round(1.0 / step)
        out = []
        for v in (action[0], action[1]):
            c = round(v / step)
            if not 1 <= c <= k or abs(v - c * step) > 1e-9:
                raise ValueError(
                    f"action {tuple(action)} is off the grid "
                    f"(components must be multiples of {step} in (0, 1])"
                )
            out.append(round(c * step, 10))
        return out[0], out[1]


# ---------------------------------------------------------------------------
# episode records and persistence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    state: State
    action: ActionPair
    reward: float
    next_state: State


@dataclass
class EpisodeRecord:
    """One episode's trajectory plus bookkeeping for the harness."""

    seed: int
    agent_name: str
    episode: int
    phase: str  # "train" or "final"
    transitions: list[Transition] = field(default_factory=list)
    total_return: float = 0.0


def episode_return(transitions: Sequence[Transition], gamma: float = 1.0) -> float:
    total, disc = 0.0, 1.0
    for tr in transitions:
        total += disc * tr.reward
        disc *= gamma
    return total


def _state_doc(s: "State | None") -> "list | None":
    if s is None:
        return None
    return [s.prev_reward, [s.prev_action[0], s.prev_action[1]], s.timestep]


def _state_from_doc(doc: "list | None") -> "State | None":
    if doc is None:
        return None
    return State(float(doc[0]), ActionPair(float(doc[1][0]), float(doc[1][1])), int(doc[2]))


def record_to_json(rec: EpisodeRecord) -> str:
    return json.dumps(
        {
            "seed": rec.seed,
            "agent": rec.agent_name,
            "episode": rec.episode,
            "phase": rec.phase,
            "total_return": rec.total_return,
            "transitions": [
                {
                    "state": _state_doc(tr.state),
                    "action": [tr.action[0], tr.action[1]],
                    "reward": tr.reward,
                    "next_state": _state_doc(tr.next_state),
                }
                for tr in rec.transitions
            ],
        }
    )


def record_from_json(text: str) -> EpisodeRecord:
    doc = json.loads(text)
    return EpisodeRecord(
        seed=int(doc["seed"]),
        agent_name=doc["agent"],
        episode=int(doc["episode"]),
        phase=doc["phase"],
        transitions=[
            Transition(
                _state_from_doc(tr["state"]),
                ActionPair(float(tr["action"][0]), float(tr["action"][1])),
                float(tr["reward"]),
                _state_from_doc(tr["next_state"]),
            )
            for tr in doc["transitions"]
        ],
        total_return=float(doc["total_return"]),
    )


def write_records(path, records: Iterable[EpisodeRecord], append: bool = True) -> None:
    """Append episode records to a JSON-lines file (one record per line)."""
    with open(path, "a" if append else "w") as fh:
        for rec in records:
            fh.write(record_to_json(rec) + "\n")


def read_records(path) -> list[EpisodeRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_json(line))
    return out


# ---------------------------------------------------------------------------
# external environment protocol (line-delimited JSON over stdin/stdout)
# ---------------------------------------------------------------------------


class ProtocolError(RuntimeError):
    """Malformed traffic on the external-environment protocol."""


class ProtocolTimeout(ProtocolError):
    """The external environment did not answer within the timeout."""


def _require(doc: dict, name: str, line: str):
    if name not in doc:
        raise ProtocolError(f"response is missing required field {name!r}: {line!r}")
    return doc[name]


def _parse_state_response(line: str) -> State:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {line!r}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError(f"response must be a JSON object: {line!r}")
    if doc.get("type") == "error":
        raise ProtocolError(f"environment reported an error: {doc.get('message')!r}")
    if doc.get("type") != "state":
        raise ProtocolError(f"expected response type 'state', got {doc.get('type')!r}")
    reward = _require(doc, "reward", line)
    action = _require(doc, "action", line)
    t = _require(doc, "t", line)
    if not isinstance(action, (list, tuple)) or len(action) != 2:
        raise ProtocolError(f"field 'action' must be a pair, got {action!r}")
    return State(float(reward), ActionPair(float(action[0]), float(action[1])), int(t))


def _parse_transition_response(line: str) -> tuple[float, int, bool]:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {line!r}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError(f"response must be a JSON object: {line!r}")
    if doc.get("type") == "error":
        raise ProtocolError(f"environment reported an error: {doc.get('message')!r}")
    if doc.get("type") != "transition":
        raise ProtocolError(
            f"expected response type 'transition', got {doc.get('type')!r}"
        )
    reward = _require(doc, "reward", line)
    t = _require(doc, "t", line)
    done = _require(doc, "done", line)
    if not isinstance(done, bool):
        raise ProtocolError(f"field 'done' must be a boolean, got {done!r}")
    return float(reward), int(t), done


class ExternalEnv:
    """Adapter that drives an external simulator process over the protocol.

    The child is spawned from ``command`` and spoken to over stdin/stdout,
    one JSON document per line.  Every response is awaited with a timeout
    (default 30 s); a slow, closed, or schema-violating peer raises
    :class:`ProtocolTimeout` / :class:`ProtocolError`.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0):
        self.timeout = timeout
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._state: State | None = None
        self._done = True

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _request(self, doc: dict) -> str:
        if self._proc.poll() is not None or self._proc.stdin is None:
            raise ProtocolError("environment process is not running")
        try:
            self._proc.stdin.write(json.dumps(doc) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError("environment closed its input stream") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolTimeout(
                f"no response from environment within {self.timeout} s"
            ) from None
        if line is None:
            raise ProtocolError("environment closed its output stream mid-episode")
        return line

    def reset(self) -> State:
        state = _parse_state_response(self._request({"type": "reset"}))
        self._state = state
        self._done = False
        return state

    def step(self, action: ActionPair) -> tuple[State, float, bool]:
        if self._done or self._state is None:
            raise RuntimeError("episode is over (or reset() was never called)")
        reward, t, done = _parse_transition_response(
            self._request({"type": "step", "action": [action[0], action[1]]})
        )
        next_state = State(reward, ActionPair(action[0], action[1]), t)
        self._state = next_state
        self._done = done
        return next_state, reward, done

    def close(self):
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5.0)
            except Exception:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def serve(env, in_stream: IO[str], out_stream: IO[str]) -> None:
    """Serve an environment over the line protocol until EOF.

    Understands ``{"type": "reset"}`` and ``{"type": "step", "action":
    [itn, irs]}``; anything else (or an environment error such as stepping
    a finished episode) is answered with ``{"type": "error", ...}`` and
    the loop continues.
    """
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            kind = doc.get("type") if isinstance(doc, dict) else None
            if kind == "reset":
                state = env.reset()
                reply = {
                    "type": "state",
                    "reward": state.prev_reward,
                    "action": [state.prev_action[0], state.prev_action[1]],
                    "t": state.timestep,
                }
            elif kind == "step":
                action = doc.get("action")
                if not isinstance(action, (list, tuple)) or len(action) != 2:
                    raise ValueError(f"step request needs 'action': [itn, irs], got {action!r}")
                _, reward, done = env.step(ActionPair(float(action[0]), float(action[1])))
                reply = {
                    "type": "transition",
                    "reward": reward,
                    "t": env_timestep(env),
                    "done": done,
                }
            else:
                raise ValueError(f"unknown request type {kind!r}")
        except Exception as exc:
            reply = {"type": "error", "message": str(exc)}
        out_stream.write(json.dumps(reply) + "\n")
        out_stream.flush()


def env_timestep(env) -> int:
    """Current timestep of a served environment (after any steps taken)."""
    state = getattr(env, "_state", None)
    return state.timestep if state is not None else 1


def clone_env(env):
    """Deep copy an environment for counterfactual probing (surrogate only)."""
    return copy.deepcopy(env)
