"""Action and auxiliary losses with analytic gradients.

Directional loss, with y_hat = y / |y|, x_par = (x . y_hat) y_hat, x_perp = x - x_par::

    L = r * |x_par| / (|y| + r) + |x_perp|

For |y| below ``ZERO_TARGET`` the loss falls back to |x|. At the
non-differentiable sets (x_perp = 0, x_par = 0) the zero subgradient is used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFinite

ZERO_TARGET = 1e-12
OBJECTIVES = ("l2", "directional")


@dataclass(frozen=True)
class DirectionalLossParams:
    r: float = 0.1
    variant: str = "parallel"  # "parallel" penalizes |x_par|; "residual" penalizes |x_par - y|

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if self.variant not in ("parallel", "residual"):
            raise ValueError(f"unknown directional variant {self.variant!r}")


def _safe_unit(v, norm):
    return np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)


def directional_rows(x, y, params: DirectionalLossParams = DirectionalLossParams()):
    """Row-wise directional loss over (..., d) arrays: values (...,) and gradients (..., d)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"prediction {x.shape} vs target {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFinite("directional loss input contains NaN or inf")
    r = params.r
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    degenerate = ny < ZERO_TARGET
    y_hat = y / np.where(degenerate, 1.0, ny)
    s = np.sum(x * y_hat, axis=-1, keepdims=True)
    x_perp = x - s * y_hat
    n_perp = np.linalg.norm(x_perp, axis=-1, keepdims=True)
    par = s - ny if params.variant == "residual" else s
    w = r / (ny + r)
    val = w * np.abs(par) + n_perp
    grad = w * np.sign(par) * y_hat + _safe_unit(x_perp, n_perp)

    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    val = np.where(degenerate, nx, val)
    grad = np.where(degenerate, _safe_unit(x, nx), grad)
    return val[..., 0], grad


def directional_loss(x, y, params: DirectionalLossParams = DirectionalLossParams()):
    """Directional loss of a single predicted delta ``x`` against target ``y``: (value, grad)."""
    val, grad = directional_rows(x, y, params)
    return float(val), grad


def l2_action_loss(pred, target):
    """Mean squared error over all entries: (value, grad)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def auxiliary_loss(pred_keypoints, pred_target, truth_keypoints, truth_target, return_terms=False):
    """Hand-head loss: keypoint MSE and one-hot target MSE, averaged.

    Shapes: keypoints (B, V, 21, 2) (or without the batch axis), target
    predictions (B, 2), labels (B,) in {-1, 0, 1}. Samples labeled -1 are
    left out of the target term; with no labeled sample the loss is the
    keypoint term alone. Returns ``(value, (grad_keypoints, grad_target))``,
    plus ``(kp_term, target_term)`` when ``return_terms``.
    """
    pk = np.asarray(pred_keypoints, dtype=np.float64)
    tk = np.asarray(truth_keypoints, dtype=np.float64)
    pt = np.atleast_2d(np.asarray(pred_target, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(truth_target)).astype(np.int64)
    if pk.shape != tk.shape:
        raise DimensionMismatch(f"keypoints {pk.shape} vs {tk.shape}")
    if pt.shape != (len(labels), 2):
        raise DimensionMismatch(f"target predictions {pt.shape} vs {len(labels)} labels")

    dk = pk - tk
    kp_term = float(np.mean(dk**2))
    g_kp = 2.0 * dk / dk.size

    labeled = labels >= 0
    n_lab = int(labeled.sum())
    g_t = np.zeros_like(pt)
    if n_lab:
        onehot = np.zeros_like(pt)
        onehot[np.flatnonzero(labeled), labels[labeled]] = 1.0
        dt = np.where(labeled[:, None], pt - onehot, 0.0)
        t_term = float(np.sum(dt**2) / (2 * n_lab))
        value = 0.5 * (kp_term + t_term)
        g_kp = 0.5 * g_kp
        g_t = dt / (2 * n_lab)
    else:
        t_term = 0.0
        value = kp_term
    g_t = g_t.reshape(np.shape(pred_target))
    if return_terms:
        return value, (g_kp, g_t), (kp_term, t_term)
    return value, (g_kp, g_t)


@dataclass(frozen=True)
class PolicyOutput:
    """Head outputs for a batch: action (B, C, D), keypoints (B, V, 21, 2), target (B, 2)."""

    action: np.ndarray
    keypoints: np.ndarray
    target: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.action.ravel(), self.keypoints.ravel(), self.target.ravel()])


@dataclass(frozen=True)
class Targets:
    action: np.ndarray
    keypoints: np.ndarray
    target_index: np.ndarray


@dataclass(frozen=True)
class LossConfig:
    action_objective: str = "l2"
    lambda_aux: float = 1.0
    directional: DirectionalLossParams = DirectionalLossParams()

    def __post_init__(self):
        if self.action_objective not in OBJECTIVES:
            raise ValueError(f"action_objective must be one of {OBJECTIVES}")


@dataclass(frozen=True)
class LossReport:
    action_loss: float
    aux_loss: float
    total: float
    grad: PolicyOutput


def action_loss(pred, target, cfg: LossConfig):
    """Action-chunk loss; the directional objective covers the first 3 entries of every step."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"action prediction {pred.shape} vs target {target.shape}")
    if cfg.action_objective == "l2":
        return l2_action_loss(pred, target)
    dvals, dgrad = directional_rows(pred[..., :3], target[..., :3], cfg.directional)
    rest_val, rest_grad = l2_action_loss(pred[..., 3:], target[..., 3:]) if pred.shape[-1] > 3 else (0.0, None)
    grad = np.empty_like(pred)
    grad[..., :3] = dgrad / dvals.size
    if rest_grad is not None:
        grad[..., 3:] = rest_grad
    return float(np.mean(dvals)) + rest_val, grad


def composite_loss(pred: PolicyOutput, truth: Targets, cfg: LossConfig = LossConfig()) -> LossReport:
    """``total = action + lambda_aux * aux`` with gradients laid out like ``pred``."""
    a_val, a_grad = action_loss(pred.action, truth.action, cfg)
    x_val, (g_kp, g_t) = auxiliary_loss(pred.keypoints, pred.target, truth.keypoints, truth.target_index)
    lam = cfg.lambda_aux
    return LossReport(
        action_loss=a_val,
        aux_loss=x_val,
        total=a_val + lam * x_val,
        grad=PolicyOutput(a_grad, lam * g_kp, lam * g_t),
    )


def finite_difference_check(loss_fn, point, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1e-8, |central difference|).

    ``loss_fn(x)`` must return ``(value, grad)``.
    """
    x0 = np.array(point, dtype=np.float64)
    _, grad = loss_fn(x0.copy())
    grad = np.asarray(grad, dtype=np.float64).reshape(x0.shape)
    if not np.all(np.isfinite(grad)):
        raise NonFinite("analytic gradient is not finite")
    worst = 0.0
    flat = x0.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp, _ = loss_fn(xp.reshape(x0.shape))
        fm, _ = loss_fn(xm.reshape(x0.shape))
        num = (fp - fm) / (2 * eps)
        if not np.isfinite(num):
            raise NonFinite(f"numeric derivative at coordinate {i} is not finite")
        worst = max(worst, abs(grad.flat[i] - num) / max(1e-8, abs(num)))
    return worst
