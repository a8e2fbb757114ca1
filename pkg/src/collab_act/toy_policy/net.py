"""Chunked MLP policy with optional FiLM conditioning and a parallel hand head.

Trunk layer l computes ``relu(film(W_l h + b_l, gamma_l, beta_l))`` with
``gamma_l = 1 + G_l c`` and ``beta_l = F_l c`` for the prompt one-hot ``c``.
Both heads read the last trunk activation. Outputs are de-standardized by
fixed per-dimension buffers set from the training data.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, LayoutMismatch
from ..losses import PolicyOutput
from ..trajectory_store.types import N_KEYPOINTS


def film(h, gamma, beta):
    """Feature-wise affine modulation ``gamma * h + beta``."""
    h = np.asarray(h, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != h.shape or beta.shape != h.shape:
        raise DimensionMismatch(f"film: h {h.shape}, gamma {gamma.shape}, beta {beta.shape}")
    return gamma * h + beta


@dataclass(frozen=True)
class Layout:
    obs_dim: int
    prompt_start: int
    n_prompts: int
    hidden_size: int
    n_hidden: int
    chunk_size: int
    action_dim: int
    n_views: int
    use_film: bool

    @property
    def keypoint_dim(self) -> int:
        return self.n_views * N_KEYPOINTS * 2

    @property
    def hand_dim(self) -> int:
        return self.keypoint_dim + 2

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes in checkpoint order."""
        H, P = self.hidden_size, self.n_prompts
        shapes = {}
        fan_in = self.obs_dim
        for l in range(self.n_hidden):
            shapes[f"W{l}"] = (H, fan_in)
            shapes[f"b{l}"] = (H,)
            shapes[f"G{l}"] = (H, P)
            shapes[f"F{l}"] = (H, P)
            fan_in = H
        shapes["Wa"] = (self.chunk_size * self.action_dim, H)
        shapes["ba"] = (self.chunk_size * self.action_dim,)
        shapes["Wh"] = (self.hand_dim, H)
        shapes["bh"] = (self.hand_dim,)
        return shapes

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        out = self.chunk_size * self.action_dim
        return {
            "in_mean": (self.obs_dim,),
            "in_scale": (self.obs_dim,),
            "out_mean": (out,),
            "out_scale": (out,),
            "kp_mean": (self.keypoint_dim,),
            "kp_scale": (self.keypoint_dim,),
        }


@dataclass
class PolicyNet:
    layout: Layout
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    pca: object = None  # PcaModel fit on the training hand states
    encoded: bool = False  # action head predicts encoded (delta / rotation vector / latent) actions
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, shape in self.layout.buffer_shapes().items():
            if name not in self.buffers:
                fill = 1.0 if name.endswith("scale") else 0.0
                self.buffers[name] = np.full(shape, fill)

    def copy(self) -> "PolicyNet":
        return PolicyNet(
            self.layout,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.pca,
            self.encoded,
            dict(self.config),
        )


def init_policy(layout: Layout, rng: np.random.Generator) -> PolicyNet:
    params = {}
    for name, shape in layout.param_shapes().items():
        if name[0] in "GF" or name[0] == "b":
            params[name] = np.zeros(shape)
        elif name in ("Wa", "Wh"):
            params[name] = rng.normal(0.0, np.sqrt(1.0 / shape[1]), size=shape)
        else:
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), size=shape)
    return PolicyNet(layout, params)


def forward(net: PolicyNet, obs, hand_head: bool = True, return_cache: bool = False):
    """Batch forward pass over (B, obs_dim) observations.

    Returns a ``PolicyOutput`` (keypoints/target are None when ``hand_head`` is
    off), plus the activation cache when ``return_cache``.
    """
    L, p, buf = net.layout, net.params, net.buffers
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != L.obs_dim:
        raise LayoutMismatch(f"observation shape {obs.shape}, expected (B, {L.obs_dim})")
    c = obs[:, L.prompt_start:L.prompt_start + L.n_prompts]
    h = (obs - buf["in_mean"]) / buf["in_scale"]
    cache = {"c": c, "h": [h], "u": [], "gamma": [], "m": []}
    for l in range(L.n_hidden):
        u = h @ p[f"W{l}"].T + p[f"b{l}"]
        if L.use_film:
            gamma = 1.0 + c @ p[f"G{l}"].T
            beta = c @ p[f"F{l}"].T
            m = film(u, gamma, beta)
        else:
            gamma = None
            m = u
        h = np.maximum(m, 0.0)
        cache["u"].append(u)
        cache["gamma"].append(gamma)
        cache["m"].append(m)
        cache["h"].append(h)

    B = obs.shape[0]
    a = h @ p["Wa"].T + p["ba"]
    action = (buf["out_mean"] + buf["out_scale"] * a).reshape(B, L.chunk_size, L.action_dim)
    keypoints = target = None
    if hand_head:
        k = h @ p["Wh"].T + p["bh"]
        kd = L.keypoint_dim
        keypoints = (buf["kp_mean"] + buf["kp_scale"] * k[:, :kd]).reshape(B, L.n_views, N_KEYPOINTS, 2)
        target = k[:, kd:]
    out = PolicyOutput(action, keypoints, target)
    return (out, cache) if return_cache else out


def backward(net: PolicyNet, cache: dict, grad: PolicyOutput) -> dict[str, np.ndarray]:
    """Parameter gradients given output gradients laid out like the forward result."""
    L, p, buf = net.layout, net.params, net.buffers
    B = cache["h"][0].shape[0]
    da = np.asarray(grad.action, dtype=np.float64).reshape(B, -1) * buf["out_scale"]
    dk = np.concatenate(
        [np.asarray(grad.keypoints).reshape(B, -1) * buf["kp_scale"], np.asarray(grad.target).reshape(B, 2)],
        axis=1,
    )
    h = cache["h"][-1]
    g = {
        "Wa": da.T @ h,
        "ba": da.sum(axis=0),
        "Wh": dk.T @ h,
        "bh": dk.sum(axis=0),
    }
    dh = da @ p["Wa"] + dk @ p["Wh"]
    c = cache["c"]
    for l in reversed(range(L.n_hidden)):
        dm = dh * (cache["m"][l] > 0)
        if L.use_film:
            g[f"G{l}"] = (dm * cache["u"][l]).T @ c
            g[f"F{l}"] = dm.T @ c
            du = dm * cache["gamma"][l]
        else:
            g[f"G{l}"] = np.zeros_like(p[f"G{l}"])
            g[f"F{l}"] = np.zeros_like(p[f"F{l}"])
            du = dm
        h_prev = cache["h"][l]
        g[f"W{l}"] = du.T @ h_prev
        g[f"b{l}"] = du.sum(axis=0)
        dh = du @ p[f"W{l}"]
    return {name: g[name] for name in p}
