"""Training configuration, Adam, and the minibatch training loop."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..action_codec import decode_actions, encode_actions, fit_pca
from ..action_codec import quaternion as quat
from ..errors import EmptyDataset, NonFiniteLoss
from ..losses import OBJECTIVES, DirectionalLossParams, LossConfig, Targets, composite_loss
from .data import N_PROMPTS, Examples, build_examples, obs_dim, prompt_start, split_trajectories
from .net import Layout, PolicyNet, backward, forward, init_policy

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    chunk_size: int = 16
    proprio_history: int = 2
    vision_history: int = 1
    hidden_size: int = 128
    n_hidden: int = 2
    learning_rate: float = 3e-4
    epochs: int = 20
    batch_size: int = 24
    lambda_aux: float = 1.0
    action_objective: str = "l2"
    directional_r: float = 0.1
    directional_variant: str = "parallel"
    use_film: bool = False
    use_postprocessing: bool = True
    use_aux: bool = True
    pca_tau: float = 0.96
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("chunk_size", "proprio_history", "vision_history", "hidden_size", "n_hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.action_objective not in OBJECTIVES:
            raise ValueError(f"action_objective must be one of {OBJECTIVES}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {unknown}")
        return cls(**d)

    def loss_config(self) -> LossConfig:
        return LossConfig(
            action_objective=self.action_objective,
            lambda_aux=self.lambda_aux if self.use_aux else 0.0,
            directional=DirectionalLossParams(self.directional_r, self.directional_variant),
        )


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=ADAM_BETAS, eps=ADAM_EPS):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _rngs(seed: int):
    # independent streams so split, init and batch order do not shift with layout changes
    return tuple(np.random.default_rng([seed, i]) for i in range(3))


def _scale(x):
    s = x.std(axis=0)
    return np.where(s < 1e-8, 1.0, s)


def fit_normalizers(net: PolicyNet, ex: Examples) -> None:
    flat = ex.action.reshape(len(ex), -1)
    kp = ex.keypoints.reshape(len(ex), -1)
    net.buffers.update(
        in_mean=ex.obs.mean(axis=0),
        in_scale=_scale(ex.obs),
        out_mean=flat.mean(axis=0),
        out_scale=_scale(flat),
        kp_mean=kp.mean(axis=0),
        kp_scale=_scale(kp),
    )


def _targets(ex: Examples) -> Targets:
    return Targets(ex.action, ex.keypoints, ex.target_index)


def predict_raw(net: PolicyNet, obs, position, quaternion) -> np.ndarray:
    """Action chunks mapped back to the 23-D raw command space: (B, C, 23)."""
    out = forward(net, obs, hand_head=False)
    if not net.encoded:
        return out.action
    return decode_actions(
        np.asarray(position)[:, None, :], np.asarray(quaternion)[:, None, :], out.action, net.pca
    )


RAW_GROUPS = {"position": slice(0, 3), "rotation": slice(3, 7), "joints": slice(7, 23)}


def raw_group_errors(pred_raw, true_raw) -> dict:
    """Per-group raw-space MSE and the group-balanced normalized MSE.

    ``raw_nmse`` averages, over position / rotation / joints, the group MSE
    divided by the mean per-dimension variance of the targets in that group,
    so meters, quaternion units and radians weigh equally.
    """
    flat = true_raw.reshape(-1, true_raw.shape[-1])
    out, ratios = {}, []
    for name, sl in RAW_GROUPS.items():
        mse = float(np.mean((pred_raw[..., sl] - true_raw[..., sl]) ** 2))
        var = float(np.mean(flat[:, sl].var(axis=0)))
        out[f"raw_mse_{name}"] = mse
        ratios.append(mse / var if var > 0 else mse)
    out["raw_nmse"] = float(np.mean(ratios))
    return out


def evaluate(net: PolicyNet, ex: Examples, loss_cfg: LossConfig) -> dict:
    """Per-chunk mean losses on ``ex``: training objective, aux, raw-space and PCA-space MSE."""
    out = forward(net, ex.obs)
    rep = composite_loss(out, _targets(ex), loss_cfg)
    metrics = {"action_loss": rep.action_loss, "aux_loss": rep.aux_loss, "total": rep.total}
    if net.pca is not None:
        if net.encoded:
            raw = decode_actions(ex.position[:, None, :], ex.quaternion[:, None, :], out.action, net.pca)
            enc_pred = out.action
        else:
            raw = out.action
            fixed = raw.copy()
            fixed[..., 3:7] = quat.canonical(fixed[..., 3:7])
            enc_pred = encode_actions(ex.position[:, None, :], ex.quaternion[:, None, :], fixed, net.pca)
        enc_true = encode_actions(ex.position[:, None, :], ex.quaternion[:, None, :], ex.raw_chunk, net.pca)
        metrics["raw_mse"] = float(np.mean((raw - ex.raw_chunk) ** 2))
        metrics.update(raw_group_errors(raw, ex.raw_chunk))
        metrics["pca_mse"] = float(np.mean((enc_pred - enc_true) ** 2))
    return metrics


def fit(net: PolicyNet, train_ex: Examples, val_ex: Examples | None, cfg: TrainConfig,
        rng: np.random.Generator, eval_sets: dict[str, Examples] | None = None) -> list[dict]:
    """Adam over shuffled minibatches for ``cfg.epochs`` epochs; returns one metrics dict per epoch."""
    if len(train_ex) == 0:
        raise EmptyDataset("no training examples")
    loss_cfg = cfg.loss_config()
    opt = Adam(net.params, cfg.learning_rate)
    curve = []
    n = len(train_ex)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = train_ex.subset(order[start:start + cfg.batch_size])
            out, cache = forward(net, batch.obs, return_cache=True)
            rep = composite_loss(out, _targets(batch), loss_cfg)
            if not np.isfinite(rep.total):
                raise NonFiniteLoss(f"loss diverged at epoch {epoch}")
            opt.step(backward(net, cache, rep.grad))
            total += rep.total * len(batch)
        row = {"epoch": epoch, "train_loss": total / n}
        if val_ex is not None and len(val_ex):
            row["val"] = evaluate(net, val_ex, loss_cfg)
        for name, ex in (eval_sets or {}).items():
            row[name] = evaluate(net, ex, loss_cfg)
        curve.append(row)
    return curve


def make_layout(cfg: TrainConfig, n_views: int, action_dim: int) -> Layout:
    return Layout(
        obs_dim=obs_dim(cfg.proprio_history, cfg.vision_history, n_views),
        prompt_start=prompt_start(cfg.proprio_history, cfg.vision_history, n_views),
        n_prompts=N_PROMPTS,
        hidden_size=cfg.hidden_size,
        n_hidden=cfg.n_hidden,
        chunk_size=cfg.chunk_size,
        action_dim=action_dim,
        n_views=n_views,
        use_film=cfg.use_film,
    )


def prepare(dataset, cfg: TrainConfig):
    """Split, fit PCA on the training hand states, build example arrays."""
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("dataset contains no trajectories")
    split_rng, init_rng, batch_rng = _rngs(cfg.seed)
    train_t, val_t = split_trajectories(dataset, cfg.val_fraction, split_rng)
    pca = fit_pca(np.vstack([t.hand_joints for t in train_t]), cfg.pca_tau)
    enc_pca = pca if cfg.use_postprocessing else None
    args = (cfg.chunk_size, cfg.proprio_history, cfg.vision_history, enc_pca)
    train_ex = build_examples(train_t, *args)
    val_ex = build_examples(val_t, *args) if val_t else None
    return pca, train_ex, val_ex, (init_rng, batch_rng)


def build_policy(cfg: TrainConfig, pca, train_ex: Examples, rng) -> PolicyNet:
    layout = make_layout(cfg, train_ex.keypoints.shape[1], train_ex.action.shape[-1])
    net = init_policy(layout, rng)
    net.pca = pca
    net.encoded = cfg.use_postprocessing
    net.config = cfg.to_dict()
    fit_normalizers(net, train_ex)
    return net


def train(dataset, cfg: TrainConfig = TrainConfig(), eval_trajs: dict | None = None):
    """Train a policy on whole-trajectory 80/20 splits; returns ``(net, curve)``.

    ``eval_trajs`` maps names to extra trajectory lists evaluated every epoch.
    """
    pca, train_ex, val_ex, (init_rng, batch_rng) = prepare(dataset, cfg)
    net = build_policy(cfg, pca, train_ex, init_rng)
    enc_pca = pca if cfg.use_postprocessing else None
    eval_sets = {
        name: build_examples(trajs, cfg.chunk_size, cfg.proprio_history, cfg.vision_history, enc_pca)
        for name, trajs in (eval_trajs or {}).items()
    }
    curve = fit(net, train_ex, val_ex, cfg, batch_rng, eval_sets)
    return net, curve
