"""Synthetic regression pools: clustered inputs, smooth targets, known noise.

Features are drawn from a mixture of Gaussian clusters with geometrically
decaying weights, so some regions of input space are systematically
under-sampled; the target is a smooth nonlinear function of a few random
projections. Heteroscedastic mode modulates the noise standard deviation
through a sigmoid of another projection, and the generator can report that
per-point standard deviation for diagnostics.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .exceptions import InvalidConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1200
    d: int = 4
    noise: str = "heteroscedastic"
    noise_scale: float = 0.3
    n_clusters: int = 5
    cluster_spread: float = 0.55
    seed: int = 0

    def validate(self):
        if self.n < 4:
            raise InvalidConfigError("synthetic n must be >= 4")
        if self.d < 1:
            raise InvalidConfigError("synthetic d must be >= 1")
        if self.noise not in ("homoscedastic", "heteroscedastic"):
            raise InvalidConfigError(f"unknown noise model {self.noise!r}")
        if self.noise_scale < 0:
            raise InvalidConfigError("noise_scale must be non-negative")
        if self.n_clusters < 1 or self.cluster_spread <= 0:
            raise InvalidConfigError("need n_clusters >= 1 and cluster_spread > 0")
        return self


class SyntheticDetail(NamedTuple):
    dataset: Dataset
    clean_targets: np.ndarray
    noise_sigma: np.ndarray
    cluster_assignment: np.ndarray


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def generate_synthetic_detail(spec: SyntheticSpec) -> SyntheticDetail:
    spec.validate()
    rng = np.random.default_rng(int(spec.seed) & 0xFFFFFFFF)
    weights = 0.55 ** np.arange(spec.n_clusters)
    weights /= weights.sum()
    centers = rng.normal(0.0, 1.8, size=(spec.n_clusters, spec.d))
    assignment = rng.choice(spec.n_clusters, size=spec.n, p=weights)
    X = centers[assignment] + rng.normal(0.0, spec.cluster_spread, size=(spec.n, spec.d))
    u1, u2, u3, v = (_unit(rng, spec.d) for _ in range(4))
    clean = (
        2.0 * np.sin(0.9 * X @ u1)
        + 1.2 * np.cos(0.6 * X @ u2)
        + 1.5 * np.tanh(X @ u3)
    )
    if spec.noise == "heteroscedastic":
        gate = 1.0 / (1.0 + np.exp(-1.2 * X @ v))
        sigma = spec.noise_scale * (0.05 + 0.95 * gate)
    else:
        sigma = np.full(spec.n, float(spec.noise_scale))
    y = clean + sigma * rng.standard_normal(spec.n)
    dataset = Dataset.from_arrays(X, y)
    return SyntheticDetail(
        dataset=dataset,
        clean_targets=clean,
        noise_sigma=sigma,
        cluster_assignment=assignment,
    )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Reproducible clustered regression pool for the simulation harness."""
    return generate_synthetic_detail(spec).dataset
