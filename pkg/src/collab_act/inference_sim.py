"""Discrete-event simulation of the real-time inference loop.

Three actors share a simulated clock: a sensor that emits one observation per
grid tick into a latest-wins single-slot mailbox, a policy host that takes the
newest observation when it is idle and returns an action chunk after
``policy_delay_s``, and an executor that applies chunk steps at sensor cadence
while a rule-based planner switches the prompt between task phases.

Order of events within one tick ``k`` (time ``k * T``):
  1. host computations finished at or before ``k * T`` deliver their chunks;
  2. the executor applies one action and the planner is evaluated;
  3. the sensor emits observation ``k`` (overwriting a pending one drops it);
  4. the host, woken by the new frame, takes it if idle.

A frame left waiting while the host is busy is overwritten by the next one,
so each chunk is computed from a frame that is at most one tick old.

Times are kept in integer microseconds so chunk delivery is exact.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from .action_codec.quaternion import canonical
from .errors import CollabActError, EmptyInput
from .toy_policy.data import make_observation
from .toy_policy.training import predict_raw
from .trajectory_store.synthetic import (
    cue_jitter,
    cue_keypoints,
    get_collaborator,
    long_horizon_demo,
    mean_flexion,
)
from .trajectory_store.types import DEFAULT_N_VIEWS, PASS_PROMPT, PICK_PROMPT

STEP_CAP = 600
_US = 1_000_000
HISTORY_DEPTH = 8


class Phase(str, Enum):
    PICK = "Pick"
    PASS = "Pass"
    DONE = "Done"


PHASE_ORDER = (Phase.PICK, Phase.PASS, Phase.DONE)


@dataclass(frozen=True)
class PlannerState:
    phase: Phase = Phase.PICK
    z_threshold: float = 0.30
    open_threshold: float = 0.45  # mean finger flexion (rad) below which the hand counts as open
    latched: bool = False

    @property
    def prompt_id(self) -> int:
        return PICK_PROMPT if self.phase is Phase.PICK else PASS_PROMPT


def planner_step(state: PlannerState, ee_z: float, hand_flexion: float | None = None):
    """One planner evaluation; returns ``(new_state, prompt_id)``.

    Pick -> Pass once ``ee_z`` exceeds the threshold (latched, never undone).
    Pass -> Done once ``hand_flexion`` drops below ``open_threshold``.
    At most one transition per call.
    """
    if not math.isfinite(ee_z):
        raise CollabActError(f"non-finite ee_z {ee_z}")
    if state.phase is Phase.PICK and ee_z > state.z_threshold:
        state = replace(state, phase=Phase.PASS, latched=True)
    elif state.phase is Phase.PASS and hand_flexion is not None and hand_flexion < state.open_threshold:
        state = replace(state, phase=Phase.DONE)
    return state, state.prompt_id


@dataclass(frozen=True)
class SimConfig:
    sensor_rate_hz: float = 10.0
    policy_delay_s: float = 0.25
    chunk_execute_steps: int | None = None  # None: the policy's chunk size
    mailbox_policy: str = "latest-wins"
    step_cap: int = STEP_CAP
    z_threshold: float = 0.30
    open_threshold: float = 0.45
    clock: str = "sim"  # "wall": host delay = measured policy compute time (benchmarking only)

    def __post_init__(self):
        if not self.sensor_rate_hz > 0:
            raise ValueError("sensor_rate_hz must be > 0")
        if self.policy_delay_s < 0:
            raise ValueError("policy_delay_s must be >= 0")
        if self.chunk_execute_steps is not None and self.chunk_execute_steps < 1:
            raise ValueError("chunk_execute_steps must be >= 1")
        if self.mailbox_policy != "latest-wins":
            raise ValueError(f"unsupported mailbox policy {self.mailbox_policy!r}")
        if self.clock not in ("sim", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class LatencyRecord:
    obs_time: float
    action_emit_time: float
    latency: float
    dropped_frames: int


@dataclass(frozen=True)
class Observation:
    tick: int
    time: float
    proprio: np.ndarray  # (H, 23) newest first
    cue: np.ndarray  # (H, V, 21, 2) newest first
    prompt_id: int


# ---------------------------------------------------------------- world

class SyntheticWorld:
    """Robot with perfect tracking plus a collaborator whose cue follows the scene.

    The collaborator points at the target cube until the hand has been lifted
    above ``lift_z``, then shows an open receiving hand. The robot starts in the
    initial state of the seeded long-horizon demonstration.
    """

    def __init__(self, seed: int, target: int = 0, collaborator="A", n_views: int = DEFAULT_N_VIEWS,
                 lift_z: float = 0.30):
        self.seed, self.target, self.n_views, self.lift_z = seed, target, n_views, lift_z
        self.collaborator = get_collaborator(collaborator)
        pick, passing = long_horizon_demo(seed, target, self.collaborator, n_views)
        self.demo_actions = np.vstack([pick.action_raw, passing.action_raw]).astype(np.float64)
        self.state = pick.proprio()[0].copy()
        self._rng = np.random.default_rng([seed, 7])
        self._jitter = {g: cue_jitter(self._rng) for g in ("point", "receive")}
        self.lifted = False

    def observe_cue(self) -> np.ndarray:
        gesture = "receive" if self.lifted else "point"
        return cue_keypoints(self._rng, self.collaborator, gesture, self.target, 1, self.n_views,
                             jitter=self._jitter[gesture])[0]

    def apply(self, raw_action) -> None:
        a = np.asarray(raw_action, dtype=np.float64).copy()
        q = a[3:7]
        a[3:7] = canonical(q / np.linalg.norm(q))
        self.state = a
        if a[2] > self.lift_z:
            self.lifted = True

    @property
    def ee_z(self) -> float:
        return float(self.state[2])

    @property
    def flexion(self) -> float:
        return float(mean_flexion(self.state[7:]))


# ---------------------------------------------------------------- policies

class ReplayPolicy:
    """Oracle host: returns the demonstration actions following the observation tick."""

    def __init__(self, actions, chunk_size: int = 16):
        self.actions = np.asarray(actions, dtype=np.float64)
        self.chunk_size = chunk_size

    def act(self, obs: Observation) -> np.ndarray:
        idx = np.minimum(obs.tick + np.arange(self.chunk_size), len(self.actions) - 1)
        return self.actions[idx]


class LearnedPolicy:
    """Wraps a trained PolicyNet; chunks are decoded against the observed state."""

    def __init__(self, net):
        self.net = net
        self.chunk_size = net.layout.chunk_size
        self.proprio_history = int(net.config.get("proprio_history", 2))
        self.vision_history = int(net.config.get("vision_history", 1))

    def act(self, obs: Observation) -> np.ndarray:
        ph = _pad_history(obs.proprio, self.proprio_history)
        vh = _pad_history(obs.cue, self.vision_history)
        x = make_observation(ph, vh, obs.prompt_id)[None]
        state = obs.proprio[0]
        return predict_raw(self.net, x, state[None, :3], state[None, 3:7])[0]


def _pad_history(h, depth):
    # newest first; repeat the oldest frame when the episode is younger than ``depth``
    idx = np.minimum(np.arange(depth), len(h) - 1)
    return h[idx]


# ---------------------------------------------------------------- loop

@dataclass
class EpisodeResult:
    log: list[dict]
    records: list[LatencyRecord]
    transcript: list[dict]
    status: str  # "done" or "step_cap"
    emitted: int
    consumed: int
    dropped: int
    config: dict = field(default_factory=dict)

    @property
    def phases(self) -> list[str]:
        seq = [Phase.PICK.value]
        seq += [t["to"] for t in self.transcript]
        return seq

    @property
    def success(self) -> bool:
        return self.status == "done"


def run_episode(policy, world: SyntheticWorld, cfg: SimConfig = SimConfig()) -> EpisodeResult:
    period_us = round(_US / cfg.sensor_rate_hz)
    delay_us = round(cfg.policy_delay_s * _US)
    chunk_size = policy.chunk_size
    execute_steps = chunk_size if cfg.chunk_execute_steps is None else cfg.chunk_execute_steps
    if execute_steps > chunk_size:
        raise ValueError(f"chunk_execute_steps {execute_steps} > chunk size {chunk_size}")

    planner = PlannerState(z_threshold=cfg.z_threshold, open_threshold=cfg.open_threshold)
    proprio_hist: list[np.ndarray] = []
    cue_hist: list[np.ndarray] = []
    mailbox: Observation | None = None
    host_job = None  # (done_us, obs, chunk)
    pending = None  # (chunk, latency) delivered, not yet executing
    current, cursor, current_latency = None, 0, None
    emitted = consumed = dropped = drops_since = 0
    log, records, transcript = [], [], []
    status = "step_cap"

    def start(obs: Observation, now_us: int):
        nonlocal host_job, consumed
        consumed += 1
        t0 = time.perf_counter()
        chunk = np.asarray(policy.act(obs), dtype=np.float64)
        d = round((time.perf_counter() - t0) * _US) if cfg.clock == "wall" else delay_us
        host_job = (now_us + d, obs, chunk)

    for k in range(cfg.step_cap):
        now_us = k * period_us
        # 1. deliveries
        while host_job is not None and host_job[0] <= now_us:
            done_us, obs, chunk = host_job
            emit_tick = max(obs.tick + 1, -(-done_us // period_us))
            lat = (emit_tick * period_us - obs.tick * period_us) / _US
            records.append(LatencyRecord(obs.time, emit_tick * period_us / _US, lat, drops_since))
            drops_since = 0
            pending = (chunk, lat)
            host_job = None
        # 2. executor + planner
        if pending is not None and (current is None or cursor >= execute_steps or cursor >= len(current)):
            (current, current_latency), pending, cursor = pending, None, 0
        if current is not None and cursor < len(current):
            world.apply(current[cursor])
            cursor += 1
            before = planner.phase
            planner, prompt = planner_step(planner, world.ee_z, world.flexion)
            if planner.phase is not before:
                transcript.append({"sim_time": now_us / _US, "from": before.value, "to": planner.phase.value})
            log.append({
                "sim_time": now_us / _US,
                "ee_position": [float(v) for v in world.state[:3]],
                "phase": planner.phase.value,
                "prompt_id": prompt,
                "latency_of_governing_chunk": current_latency,
            })
            if planner.phase is Phase.DONE:
                status = "done"
                break
        # 3. sensor
        proprio_hist.insert(0, world.state.copy())
        cue_hist.insert(0, world.observe_cue())
        del proprio_hist[HISTORY_DEPTH:], cue_hist[HISTORY_DEPTH:]
        emitted += 1
        if mailbox is not None:
            dropped += 1
            drops_since += 1
        mailbox = Observation(k, now_us / _US, np.array(proprio_hist), np.array(cue_hist), planner.prompt_id)
        # 4. the host wakes on frame arrival and takes it when idle
        if host_job is None:
            obs, mailbox = mailbox, None
            start(obs, now_us)
    if mailbox is not None:  # never consumed
        dropped += 1
    return EpisodeResult(log, records, transcript, status, emitted, consumed, dropped,
                         config=cfg.to_dict())


# ---------------------------------------------------------------- reporting

def latency_report(records) -> dict:
    """Mean, nearest-rank p50 / p95, max latency and the fraction of frames dropped."""
    records = list(records)
    if not records:
        raise EmptyInput("no latency records")
    lat = np.sort([r.latency for r in records])
    n = len(lat)

    def rank(p):
        return float(lat[max(1, math.ceil(p / 100.0 * n)) - 1])

    dropped = sum(r.dropped_frames for r in records)
    return {
        "mean": float(lat.mean()),
        "p50": rank(50),
        "p95": rank(95),
        "max": float(lat[-1]),
        "drop_rate": dropped / (dropped + n),
        "n": n,
    }


def write_jsonl(rows, path) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_records(path) -> list[LatencyRecord]:
    with open(path) as fh:
        return [LatencyRecord(**json.loads(line)) for line in fh if line.strip()]


def records_to_rows(records) -> list[dict]:
    return [asdict(r) for r in records]
