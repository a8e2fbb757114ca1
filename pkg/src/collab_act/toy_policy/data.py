"""Turn trajectories into (observation, chunk target, aux label) arrays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..action_codec import encode_actions
from ..trajectory_store.types import PROMPTS, PROPRIO_DIM, Trajectory

N_PROMPTS = len(PROMPTS)


def obs_dim(proprio_history: int, vision_history: int, n_views: int) -> int:
    return proprio_history * PROPRIO_DIM + vision_history * n_views * 42 + N_PROMPTS


def prompt_start(proprio_history: int, vision_history: int, n_views: int) -> int:
    return obs_dim(proprio_history, vision_history, n_views) - N_PROMPTS


def make_observation(proprio_hist, cue_hist, prompt_id: int) -> np.ndarray:
    """One observation from histories ordered newest first.

    ``proprio_hist``: (H, 23) rows of position, quaternion, joints;
    ``cue_hist``: (Hv, V, 21, 2).
    """
    onehot = np.zeros(N_PROMPTS)
    onehot[int(prompt_id)] = 1.0
    return np.concatenate([np.ravel(proprio_hist), np.ravel(cue_hist), onehot]).astype(np.float64)


@dataclass
class Examples:
    obs: np.ndarray  # (N, obs_dim)
    action: np.ndarray  # (N, C, D) training-space chunk targets
    raw_chunk: np.ndarray  # (N, C, 23)
    position: np.ndarray  # (N, 3) state the chunk is encoded against
    quaternion: np.ndarray  # (N, 4)
    keypoints: np.ndarray  # (N, V, 21, 2)
    target_index: np.ndarray  # (N,)

    def __len__(self):
        return len(self.obs)

    def subset(self, idx) -> "Examples":
        return Examples(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def _history_index(n, depth):
    # row i -> frames i, i-1, ..., clamped at 0
    return np.clip(np.arange(n)[:, None] - np.arange(depth)[None, :], 0, None)


def trajectory_examples(traj: Trajectory, chunk_size, proprio_history, vision_history, pca=None) -> Examples:
    n = len(traj)
    proprio = traj.proprio()
    cue = traj.cue_keypoints.astype(np.float64)
    ph = proprio[_history_index(n, proprio_history)].reshape(n, -1)
    vh = cue[_history_index(n, vision_history)].reshape(n, -1)
    onehot = np.eye(N_PROMPTS)[traj.prompt_id.astype(int)]
    obs = np.hstack([ph, vh, onehot])

    future = np.minimum(np.arange(n)[:, None] + np.arange(chunk_size)[None, :], n - 1)
    raw_chunk = traj.action_raw.astype(np.float64)[future]
    position = traj.ee_position.astype(np.float64)
    quaternion = traj.ee_quat.astype(np.float64)
    if pca is not None:
        action = encode_actions(position[:, None, :], quaternion[:, None, :], raw_chunk, pca)
    else:
        action = raw_chunk
    return Examples(obs, action, raw_chunk, position, quaternion, cue, traj.target_index.astype(np.int64))


def build_examples(trajs, chunk_size, proprio_history, vision_history, pca=None) -> Examples:
    parts = [trajectory_examples(t, chunk_size, proprio_history, vision_history, pca) for t in trajs]
    return Examples(*(np.concatenate([getattr(p, f) for p in parts]) for f in Examples.__dataclass_fields__))


def split_trajectories(trajs, val_fraction: float, rng: np.random.Generator):
    """Split whole trajectories (never frames) into train / validation lists."""
    trajs = list(trajs)
    if len(trajs) < 2 or val_fraction <= 0:
        return trajs, []
    order = rng.permutation(len(trajs))
    n_val = min(len(trajs) - 1, max(1, int(round(val_fraction * len(trajs)))))
    val = sorted(order[:n_val].tolist())
    train = sorted(order[n_val:].tolist())
    return [trajs[i] for i in train], [trajs[i] for i in val]
