"""Ablation grid and the trainer-overfitting experiment."""
from __future__ import annotations

import dataclasses
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from ..trajectory_store.synthetic import COLLABORATORS, generate_synthetic_dataset, get_collaborator
from .training import TrainConfig, train

ABLATION_FLAGS = ("use_postprocessing", "use_aux", "action_objective", "use_film")


@dataclass(frozen=True)
class AblationResult:
    flags: dict
    metrics: dict  # final-epoch validation metrics, per-chunk means
    curve: list

    def to_dict(self, with_curve: bool = False) -> dict:
        d = {"flags": self.flags, "metrics": self.metrics}
        if with_curve:
            d["curve"] = self.curve
        return d


def flag_grid(**choices) -> list[dict]:
    """Cartesian product of flag choices, e.g. ``flag_grid(use_film=[False, True])``."""
    keys = list(choices)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(choices[k] for k in keys))]


def _run_one(dataset, base_cfg: TrainConfig, overrides: dict) -> AblationResult:
    cfg = dataclasses.replace(base_cfg, **overrides)
    _, curve = train(dataset, cfg)
    flags = {k: getattr(cfg, k) for k in ABLATION_FLAGS}
    return AblationResult(flags=flags, metrics=curve[-1]["val"], curve=curve)


def run_ablation(dataset, base_cfg: TrainConfig, grid: list[dict], jobs: int = 1) -> list[AblationResult]:
    """Train one policy per flag override set; every run shares the seed, split and batch order."""
    grid = list(grid)
    if not grid:
        raise ValueError("ablation grid is empty")
    if base_cfg.val_fraction <= 0:
        raise ValueError("ablation needs a validation split (val_fraction > 0)")
    dataset = list(dataset)
    if jobs <= 1:
        return [_run_one(dataset, base_cfg, g) for g in grid]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_one, dataset, base_cfg, g) for g in grid]
        return [f.result() for f in futures]


OVERFIT_DEFAULTS = TrainConfig(use_aux=True, epochs=20)


def trainer_overfit_experiment(seed: int = 0, other="B", n_train: int = 60, n_eval: int = 30,
                               cfg: TrainConfig = OVERFIT_DEFAULTS):
    """Train on collaborator A; per-epoch aux loss on held-out A vs. collaborator ``other``.

    Held-out A and the other collaborator's data come from different seeds,
    so the B == A control is a genuine two-sample comparison.
    Returns ``(loss_same, loss_other)`` lists with one entry per epoch.
    """
    other = get_collaborator(other)
    cfg = dataclasses.replace(cfg, use_aux=True, seed=seed)
    train_set = generate_synthetic_dataset(seed, n_train, COLLABORATORS["A"])
    same = generate_synthetic_dataset(seed + 1, n_eval, COLLABORATORS["A"])
    diff = generate_synthetic_dataset(seed + 2, n_eval, other)
    _, curve = train(train_set, cfg, eval_trajs={"same": same, "other": diff})
    return [row["same"]["aux_loss"] for row in curve], [row["other"]["aux_loss"] for row in curve]
