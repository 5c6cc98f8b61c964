"""Collocation-point generation: jittered mesh batches spanning the domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def eval_grid(domain, m: int) -> np.ndarray:
    """Uniform grid of m points including both endpoints."""
    if m < 2:
        raise ConfigurationError("eval_grid needs at least 2 points")
    a, b = domain
    return np.linspace(a, b, m)


@dataclass(frozen=True)
class MeshSampler:
    """Uniform mesh whose points get Gaussian jitter, reflected into the domain.

    sigma defaults to half the mesh spacing: batches differ step to step but
    never open gaps much wider than the mesh itself.
    """

    domain: tuple[float, float]
    n: int
    sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError("batch size must be >= 2", "sampler.batch_size")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigurationError("sigma must be positive", "sampler.sigma")
        a, b = self.domain
        if not a < b:
            raise ConfigurationError("domain must satisfy a < b", "domain")

    @property
    def spacing(self) -> float:
        a, b = self.domain
        return (b - a) / (self.n - 1)

    @property
    def jitter_sigma(self) -> float:
        return self.sigma if self.sigma is not None else 0.5 * self.spacing

    def sample_batch(self, step: int) -> np.ndarray:
        """Jittered mesh for one optimization step; deterministic in (seed, step)."""
        a, b = self.domain
        centers = np.linspace(a, b, self.n)
        rng = np.random.default_rng([self.seed, int(step)])
        pts = centers + rng.normal(0.0, self.jitter_sigma, size=self.n)
        return np.sort(_reflect(pts, a, b))


def _reflect(points: np.ndarray, a: float, b: float) -> np.ndarray:
    """Fold points back into [a, b] by mirror reflection at the edges."""
    span = b - a
    q = np.mod(points - a, 2.0 * span)
    return a + np.where(q > span, 2.0 * span - q, q)
