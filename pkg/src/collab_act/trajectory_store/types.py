"""Core record types: raw streams, frames, trajectories.

A ``Trajectory`` is stored column-wise (one array per field); ``Frame`` is a
read-only row view produced on demand.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

N_JOINTS = 16
N_KEYPOINTS = 21
RAW_ACTION_DIM = 3 + 4 + N_JOINTS
PROPRIO_DIM = RAW_ACTION_DIM
DEFAULT_N_VIEWS = 2
TASKS = ("pick", "pass")
PROMPTS = ("pick up the cube", "pass the cube")
PICK_PROMPT, PASS_PROMPT = 0, 1
UNLABELED = -1


@dataclass(frozen=True)
class RawAction:
    """23-D teleoperation command: position, (w, x, y, z) quaternion, hand joints."""

    position: np.ndarray
    rotation: np.ndarray
    hand_joints: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError("RawAction.rotation must be a unit quaternion")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.rotation, self.hand_joints]).astype(np.float64)

    @classmethod
    def from_vector(cls, v) -> "RawAction":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (RAW_ACTION_DIM,):
            raise ValueError(f"expected a {RAW_ACTION_DIM}-vector, got shape {v.shape}")
        return cls(v[:3].copy(), v[3:7].copy(), v[7:].copy())


@dataclass(frozen=True)
class RawStream:
    name: str
    timestamps: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        x = np.asarray(self.samples, dtype=np.float32)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or x.ndim != 2 or len(t) != len(x):
            raise ValueError(f"stream {self.name!r}: timestamps and samples disagree in length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"stream {self.name!r}: timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "samples", x)

    @property
    def sample_dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class SyncConfig:
    rate_hz: float = 10.0
    max_gap_s: float = 0.15

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        if not self.max_gap_s > 0:
            raise ValueError("max_gap_s must be positive")


@dataclass(frozen=True)
class Frame:
    t: float
    ee_position: np.ndarray
    ee_quat: np.ndarray
    hand_joints: np.ndarray
    cue_keypoints: np.ndarray
    target_index: int
    prompt_id: int
    action_raw: RawAction


# (name, dtype, per-frame shape); n_views is substituted at runtime.
FIELD_LAYOUT = (
    ("t", "<f8", ()),
    ("ee_position", "<f4", (3,)),
    ("ee_quat", "<f4", (4,)),
    ("hand_joints", "<f4", (N_JOINTS,)),
    ("cue_keypoints", "<f4", ("V", N_KEYPOINTS, 2)),
    ("target_index", "<i1", ()),
    ("prompt_id", "<u1", ()),
    ("action_raw", "<f4", (RAW_ACTION_DIM,)),
)
ARRAY_FIELDS = tuple(name for name, _, _ in FIELD_LAYOUT)


def field_shape(shape, n_views):
    return tuple(n_views if s == "V" else s for s in shape)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fixed-rate, column-wise demonstration record."""

    t: np.ndarray
    ee_position: np.ndarray
    ee_quat: np.ndarray
    hand_joints: np.ndarray
    cue_keypoints: np.ndarray
    target_index: np.ndarray
    prompt_id: np.ndarray
    action_raw: np.ndarray
    rate_hz: float = 10.0
    task_id: str = "pick"
    collaborator_id: str = "A"

    def __post_init__(self):
        n = len(self.t)
        if n == 0:
            raise ValueError("a trajectory needs at least one frame")
        cue = np.asarray(self.cue_keypoints)
        n_views = cue.shape[1] if cue.ndim == 4 else DEFAULT_N_VIEWS
        for name, dtype, shape in FIELD_LAYOUT:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.dtype(dtype).newbyteorder("="))
            want = (n,) + field_shape(shape, n_views)
            if arr.shape != want:
                raise ValueError(f"field {name}: shape {arr.shape}, expected {want}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.task_id not in TASKS:
            raise ValueError(f"unknown task_id {self.task_id!r}")
        if n > 1:
            dt = np.diff(self.t)
            if np.max(np.abs(dt - 1.0 / self.rate_hz)) > 1e-9:
                raise ValueError("frames are not on a fixed-period grid")
        if not np.all(np.isin(self.target_index, (-1, 0, 1))):
            raise ValueError("target_index must be in {-1, 0, 1}")

    @property
    def n_views(self) -> int:
        return self.cue_keypoints.shape[1]

    def __len__(self):
        return len(self.t)

    def frame(self, i: int) -> Frame:
        return Frame(
            t=float(self.t[i]),
            ee_position=self.ee_position[i],
            ee_quat=self.ee_quat[i],
            hand_joints=self.hand_joints[i],
            cue_keypoints=self.cue_keypoints[i],
            target_index=int(self.target_index[i]),
            prompt_id=int(self.prompt_id[i]),
            action_raw=RawAction.from_vector(self.action_raw[i]),
        )

    @property
    def frames(self) -> list[Frame]:
        return [self.frame(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[Frame]:
        return (self.frame(i) for i in range(len(self)))

    def proprio(self) -> np.ndarray:
        """Per-frame robot state (position, quaternion, joints) as an (N, 23) float64 array."""
        return np.concatenate([self.ee_position, self.ee_quat, self.hand_joints], axis=1).astype(np.float64)

    def replace(self, **changes) -> "Trajectory":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        if (self.rate_hz, self.task_id, self.collaborator_id) != (
            other.rate_hz, other.task_id, other.collaborator_id
        ):
            return False
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ARRAY_FIELDS
        )

    __hash__ = None
