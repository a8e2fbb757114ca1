"""PCA of hand joint states."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DegenerateData, DimensionMismatch, FormatVersionMismatch, InsufficientSamples, NonFinite

PCA_FORMAT_VERSION = 1
DEFAULT_TAU = 0.96


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance

    @property
    def explained_ratio_cum(self) -> np.ndarray:
        return np.cumsum(self.explained_variance) / self.total_variance

    @property
    def discarded_variance(self) -> float:
        return float(self.total_variance - self.explained_variance.sum())

    def to_dict(self) -> dict:
        return {
            "format_version": PCA_FORMAT_VERSION,
            "k": self.k,
            "mean": self.mean.tolist(),
            "components": self.components.ravel().tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        if d.get("format_version") != PCA_FORMAT_VERSION:
            raise FormatVersionMismatch(f"pca format_version {d.get('format_version')}, expected {PCA_FORMAT_VERSION}")
        mean = np.array(d["mean"], dtype=np.float64)
        return cls(
            mean=mean,
            components=np.array(d["components"], dtype=np.float64).reshape(d["k"], len(mean)),
            explained_variance=np.array(d["explained_variance"], dtype=np.float64),
            total_variance=float(d["total_variance"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "PcaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other):
        if not isinstance(other, PcaModel):
            return NotImplemented
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.components, other.components)
            and np.array_equal(self.explained_variance, other.explained_variance)
            and self.total_variance == other.total_variance
        )


def fit_pca(hand_states, n_components: int | float = DEFAULT_TAU, min_samples: int = 16) -> PcaModel:
    """Fit PCA by SVD of the centered data.

    ``n_components`` is either a component count (int) or a cumulative
    explained-variance target in (0, 1]; for a target, k is the smallest
    count reaching it. Variances use the N - 1 sample-covariance convention.
    Each component is signed so its largest-magnitude entry is positive.
    """
    x = np.asarray(hand_states, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected an (N, d) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("hand states contain NaN or inf")
    n, d = x.shape
    if n < max(min_samples, 2):
        raise InsufficientSamples(f"need at least {max(min_samples, 2)} samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2 / (n - 1)
    total = float(var.sum())
    if total <= 1e-300 or total <= 1e-24 * float(np.sum(mean**2)):
        raise DegenerateData("hand states have zero total variance")

    if isinstance(n_components, (int, np.integer)) and not isinstance(n_components, bool):
        k = int(n_components)
        if not 1 <= k <= min(n, d):
            raise ValueError(f"component count must be in [1, {min(n, d)}], got {k}")
    else:
        tau = float(n_components)
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"variance target must be in (0, 1], got {tau}")
        cum = np.cumsum(var) / total
        k = int(np.searchsorted(cum, tau - 1e-12) + 1)
        k = min(k, len(var))

    comps = vt[:k].copy()
    flip = comps[np.arange(k), np.argmax(np.abs(comps), axis=1)] < 0
    comps[flip] *= -1.0
    return PcaModel(mean=mean, components=comps, explained_variance=var[:k], total_variance=total)


def reconstruction_mse(model: PcaModel, hand_states) -> float:
    """Mean over samples of the squared reconstruction error norm."""
    x = np.asarray(hand_states, dtype=np.float64)
    z = (x - model.mean) @ model.components.T
    err = x - (model.mean + z @ model.components)
    return float(np.mean(np.sum(err**2, axis=1)))
