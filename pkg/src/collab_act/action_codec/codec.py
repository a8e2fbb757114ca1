"""Three-stage action codec: position delta, quaternion-delta rotation vector, PCA hand latent.

Batch functions (``encode_actions`` / ``decode_actions``) work on (N, ...)
arrays; the single-action functions are thin wrappers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, NonFinite, NonUnitQuaternion
from ..trajectory_store.types import RAW_ACTION_DIM, Frame, RawAction
from . import quaternion as quat
from .pca import PcaModel

UNIT_TOL = 1e-3


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("input contains NaN or inf")


def _unit(q, name):
    q = np.asarray(q, dtype=np.float64)
    _finite(q)
    if q.shape[-1] != 4:
        raise DimensionMismatch(f"{name}: expected quaternions with 4 components, got {q.shape}")
    dev = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if np.any(dev > UNIT_TOL):
        raise NonUnitQuaternion(f"{name}: norm deviates from 1 by {float(np.max(dev)):.3g}")
    return quat.normalize(q)


@dataclass(frozen=True)
class EncodedAction:
    dpos: np.ndarray
    drot: np.ndarray
    hand_latent: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dpos, self.drot, self.hand_latent])

    @classmethod
    def from_vector(cls, v) -> "EncodedAction":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:3].copy(), v[3:6].copy(), v[6:].copy())

    def __len__(self):
        return 6 + len(self.hand_latent)


def encoded_dim(model: PcaModel) -> int:
    return 6 + model.k


# ---------------------------------------------------------------- position

def encode_position(p, a_p):
    p = np.asarray(p, dtype=np.float64)
    a_p = np.asarray(a_p, dtype=np.float64)
    _finite(p, a_p)
    return a_p - p


def decode_position(p, dpos):
    p = np.asarray(p, dtype=np.float64)
    dpos = np.asarray(dpos, dtype=np.float64)
    _finite(p, dpos)
    return p + dpos


# ---------------------------------------------------------------- rotation

def encode_rotation(q, a_r, form: str = "rotvec"):
    """Body-frame delta ``d = q^-1 * a_r`` (w >= 0) as a rotation vector.

    ``form="axis"`` returns only the unit axis xyz / sqrt(1 - w^2), which
    drops the rotation angle and cannot be decoded; it exists for comparison.
    """
    q = _unit(q, "q")
    a_r = _unit(a_r, "a_r")
    d = quat.canonical(quat.mul(quat.conj(q), a_r))
    if form == "rotvec":
        return quat.log_map(d)
    if form == "axis":
        return quat.axis_of(d)
    raise ValueError(f"unknown rotation form {form!r}")


def decode_rotation(q, drot):
    """``q * exp(drot)``, renormalized and sign-canonical."""
    q = _unit(q, "q")
    drot = np.asarray(drot, dtype=np.float64)
    _finite(drot)
    return quat.canonical(quat.mul(q, quat.exp_map(drot)))


# ---------------------------------------------------------------- hand

def _check_dim(x, d, name):
    if x.shape[-1] != d:
        raise DimensionMismatch(f"{name}: last axis has {x.shape[-1]} entries, expected {d}")


def project_hand(model: PcaModel, joints):
    joints = np.asarray(joints, dtype=np.float64)
    _check_dim(joints, model.dim, "joints")
    return (joints - model.mean) @ model.components.T


def reconstruct_hand(model: PcaModel, latent):
    latent = np.asarray(latent, dtype=np.float64)
    _check_dim(latent, model.k, "hand_latent")
    return model.mean + latent @ model.components


# ---------------------------------------------------------------- full action

def encode_actions(position, quaternion, raw, model: PcaModel, rotation_form: str = "rotvec"):
    """Encode (..., 23) raw actions relative to states (position, quaternion) -> (..., 6 + k)."""
    raw = np.asarray(raw, dtype=np.float64)
    _check_dim(raw, RAW_ACTION_DIM, "raw action")
    dpos = encode_position(position, raw[..., :3])
    drot = encode_rotation(quaternion, raw[..., 3:7], form=rotation_form)
    latent = project_hand(model, raw[..., 7:])
    return np.concatenate([dpos, drot, latent], axis=-1)


def decode_actions(position, quaternion, encoded, model: PcaModel):
    """Inverse of ``encode_actions``: (..., 6 + k) -> (..., 23)."""
    encoded = np.asarray(encoded, dtype=np.float64)
    _check_dim(encoded, encoded_dim(model), "encoded action")
    pos = decode_position(position, encoded[..., :3])
    rot = decode_rotation(quaternion, encoded[..., 3:6])
    joints = reconstruct_hand(model, encoded[..., 6:])
    return np.concatenate([pos, rot, joints], axis=-1)


def encode_action(frame: Frame, model: PcaModel) -> EncodedAction:
    v = encode_actions(frame.ee_position, frame.ee_quat, frame.action_raw.as_vector(), model)
    return EncodedAction.from_vector(v)


def decode_action(position, quaternion, enc: EncodedAction, model: PcaModel) -> RawAction:
    return RawAction.from_vector(decode_actions(position, quaternion, enc.as_vector(), model))
