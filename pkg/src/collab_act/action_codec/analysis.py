"""Distribution statistics of absolute vs. differentiated action positions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientData


@dataclass(frozen=True)
class DistributionStats:
    mean: np.ndarray
    std: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("mean", "std", "skewness", "excess_kurtosis")}


def distribution_stats(x) -> DistributionStats:
    """Per-column moments (population convention); skew/kurtosis are 0 for constant columns."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    c = x - mean
    m2 = np.mean(c**2, axis=0)
    std = np.sqrt(m2)
    flat = m2 <= 1e-30
    denom = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, np.mean(c**3, axis=0) / denom**1.5)
    kurt = np.where(flat, 0.0, np.mean(c**4, axis=0) / denom**2 - 3.0)
    return DistributionStats(mean, std, skew, kurt)


def analyze_action_distribution(trajs) -> tuple[DistributionStats, DistributionStats]:
    """Stats of commanded xyz positions, and of their frame-to-frame differences."""
    trajs = list(trajs)
    if not trajs:
        raise InsufficientData("no trajectories")
    usable = [np.asarray(t.action_raw[:, :3], dtype=np.float64) for t in trajs if len(t) >= 2]
    if not usable:
        raise InsufficientData("position deltas need trajectories with at least 2 frames")
    raw = np.vstack([np.asarray(t.action_raw[:, :3], dtype=np.float64) for t in trajs])
    delta = np.vstack([np.diff(p, axis=0) for p in usable])
    return distribution_stats(raw), distribution_stats(delta)
