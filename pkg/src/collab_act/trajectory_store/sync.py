"""Fixed-rate snapshot resampling of raw sensor/command streams, and label attachment."""
from __future__ import annotations

import numpy as np

from ..action_codec.quaternion import canonical as canonical_quat
from ..errors import EmptyOverlap, GapExceeded, LengthMismatch
from .types import (
    DEFAULT_N_VIEWS,
    N_JOINTS,
    N_KEYPOINTS,
    RAW_ACTION_DIM,
    UNLABELED,
    RawStream,
    SyncConfig,
    Trajectory,
)

# Streams are routed to frame fields by name.
STREAM_FIELDS = {
    "ee_position": 3,
    "ee_quat": 4,
    "hand_joints": N_JOINTS,
    "cue_keypoints": None,  # n_views * 21 * 2
    "action_raw": RAW_ACTION_DIM,
}


def time_grid(streams: list[RawStream], rate_hz: float) -> np.ndarray:
    """Common grid from the latest start to the earliest end, inclusive."""
    if not streams or any(len(s) == 0 for s in streams):
        raise EmptyOverlap("every stream must contain at least one sample")
    start = max(float(s.timestamps[0]) for s in streams)
    end = min(float(s.timestamps[-1]) for s in streams)
    if end < start:
        raise EmptyOverlap(f"streams share no common window (start {start:.3f} > end {end:.3f})")
    n = int(np.floor((end - start) * rate_hz + 1e-9)) + 1
    return start + np.arange(n) / rate_hz


def nearest_indices(timestamps: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Index of the nearest timestamp for each grid time; ties resolve to the earlier sample."""
    right = np.searchsorted(timestamps, grid, side="left")
    right = np.clip(right, 0, len(timestamps) - 1)
    left = np.clip(right - 1, 0, len(timestamps) - 1)
    d_left = np.abs(grid - timestamps[left])
    d_right = np.abs(timestamps[right] - grid)
    return np.where(d_left <= d_right, left, right)


def sync_indices(streams: list[RawStream], cfg: SyncConfig) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Grid times and per-stream source indices, with the gap check applied."""
    grid = time_grid(streams, cfg.rate_hz)
    picks = {}
    for s in streams:
        idx = nearest_indices(s.timestamps, grid)
        gaps = np.abs(s.timestamps[idx] - grid)
        worst = int(np.argmax(gaps))
        if gaps[worst] > cfg.max_gap_s:
            raise GapExceeded(s.name, float(grid[worst]), float(gaps[worst]))
        picks[s.name] = idx
    return grid, picks


def synchronize(
    streams: list[RawStream],
    cfg: SyncConfig = SyncConfig(),
    task_id: str = "pick",
    collaborator_id: str = "A",
) -> Trajectory:
    """Resample streams onto a ``cfg.rate_hz`` grid by nearest-in-time snapshot.

    Stream names select the frame field they fill (see ``STREAM_FIELDS``).
    Fields with no stream keep neutral defaults: zeros, identity quaternion,
    unlabeled targets and prompt 0.
    """
    names = [s.name for s in streams]
    unknown = sorted(set(names) - set(STREAM_FIELDS))
    if unknown:
        raise ValueError(f"unknown stream names {unknown}; expected a subset of {sorted(STREAM_FIELDS)}")
    if len(set(names)) != len(names):
        raise ValueError("duplicate stream names")

    grid, picks = sync_indices(streams, cfg)
    n = len(grid)
    by_name = {s.name: s for s in streams}

    n_views = DEFAULT_N_VIEWS
    if "cue_keypoints" in by_name:
        dim = by_name["cue_keypoints"].sample_dim
        if dim % (N_KEYPOINTS * 2):
            raise ValueError(f"cue_keypoints stream width {dim} is not a multiple of {N_KEYPOINTS * 2}")
        n_views = dim // (N_KEYPOINTS * 2)

    identity = np.array([1.0, 0.0, 0.0, 0.0])
    cols = {
        "ee_position": np.zeros((n, 3)),
        "ee_quat": np.tile(identity, (n, 1)),
        "hand_joints": np.zeros((n, N_JOINTS)),
        "cue_keypoints": np.zeros((n, n_views, N_KEYPOINTS, 2)),
        "action_raw": np.tile(np.concatenate([np.zeros(3), identity, np.zeros(N_JOINTS)]), (n, 1)),
    }
    for name, s in by_name.items():
        width = STREAM_FIELDS[name]
        if width is not None and s.sample_dim != width:
            raise ValueError(f"stream {name!r} has width {s.sample_dim}, expected {width}")
        rows = s.samples[picks[name]]
        cols[name] = rows.reshape(cols[name].shape)

    cols["ee_quat"] = canonical_quat(cols["ee_quat"])
    raw = np.array(cols["action_raw"], dtype=np.float64)
    raw[:, 3:7] = canonical_quat(raw[:, 3:7])
    cols["action_raw"] = raw

    return Trajectory(
        t=grid,
        ee_position=cols["ee_position"],
        ee_quat=cols["ee_quat"],
        hand_joints=cols["hand_joints"],
        cue_keypoints=cols["cue_keypoints"],
        target_index=np.full(n, UNLABELED),
        prompt_id=np.zeros(n),
        action_raw=cols["action_raw"],
        rate_hz=cfg.rate_hz,
        task_id=task_id,
        collaborator_id=collaborator_id,
    )


def attach_labels(traj: Trajectory, cue_keypoints, target_index, prompts) -> Trajectory:
    """Populate cue keypoints, target index (scalar broadcast or per-frame) and prompt ids."""
    n = len(traj)
    cue = np.asarray(cue_keypoints, dtype=np.float32)
    if cue.ndim != 4 or cue.shape[0] != n or cue.shape[2:] != (N_KEYPOINTS, 2):
        raise LengthMismatch(f"cue_keypoints must have shape ({n}, n_views, {N_KEYPOINTS}, 2), got {cue.shape}")
    target = np.asarray(target_index)
    if target.ndim == 0:
        target = np.full(n, int(target))
    if target.shape != (n,):
        raise LengthMismatch(f"target_index has {target.shape[0]} entries for {n} frames")
    prompts = np.asarray(prompts)
    if prompts.shape != (n,):
        raise LengthMismatch(f"prompts has {prompts.size} entries for {n} frames")
    return traj.replace(cue_keypoints=cue, target_index=target, prompt_id=prompts)
