"""Partial losses of the composite objective.

Every loss returns an unweighted nonnegative scalar and is zero exactly
when its defining condition holds on the batch.  All functions accept
tape nodes (training) or plain float64 arrays (diagnostics/tests); batch
reductions run in fixed index order either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, UsageError

WELL = "well"
RING = "ring"

EXP_CLAMP = 700.0    # keeps exp finite while the energy estimate is wild
_NORM_EPS = 1e-30    # guards sqrt/1-over-norm at the zero function


class Metric(str, Enum):
    MSE = "mse"
    SSE = "sse"
    MAE = "mae"
    SAE = "sae"


@dataclass(frozen=True)
class SystemDef:
    """Which problem is being solved and on what domain."""

    kind: str
    domain: tuple[float, float]
    L: float
    symmetry_s: int | None = None
    E_init: float = 0.0
    a_exp: float = 0.8

    def __post_init__(self):
        if self.kind not in (WELL, RING):
            raise ConfigurationError(f"unknown system kind {self.kind!r}", "system")
        a, b = self.domain
        if not a < b:
            raise ConfigurationError("domain must satisfy a < b", "domain")
        if self.L <= 0:
            raise ConfigurationError("L must be positive", "L")
        if self.kind == WELL and not (np.isclose(a, -self.L / 2) and np.isclose(b, self.L / 2)):
            raise ConfigurationError("well domain must be [-L/2, L/2]", "domain")
        if self.symmetry_s not in (None, 1, -1):
            raise ConfigurationError("symmetry_s must be +1, -1 or None", "symmetry_s")


def well_system(L: float = 3.0, symmetry_s: int | None = 1, E_init: float = 0.0,
                a_exp: float = 0.8) -> SystemDef:
    return SystemDef(WELL, (-L / 2, L / 2), L, symmetry_s, E_init, a_exp)


def ring_system(L: float = 0.95, E_init: float = 0.0, a_exp: float = 0.4) -> SystemDef:
    return SystemDef(RING, (0.0, 2 * np.pi), L, None, E_init, a_exp)


class JetTriple(NamedTuple):
    """Batched jet: arrays of values, first and second input derivatives."""

    v: object
    d1: object
    d2: object


@dataclass
class JetBatch:
    """Forward results at the collocation points (struct of arrays)."""

    psi: list[JetTriple]
    nu: JetTriple


LOSS_TERMS = ("integral", "normalization", "boundary", "periodicity", "symmetry",
              "equal_norm", "energy_min", "orthogonality", "pde")


@dataclass
class LossBreakdown:
    """Unweighted partial losses; terms a system does not use are flagged."""

    integral: float = 0.0
    normalization: float = 0.0
    boundary: float = 0.0
    periodicity: float = 0.0
    symmetry: float = 0.0
    equal_norm: float = 0.0
    energy_min: float = 0.0
    orthogonality: float = 0.0
    pde: float = 0.0
    absent: frozenset = field(default_factory=frozenset)

    def asdict(self) -> dict[str, float]:
        return {t: getattr(self, t) for t in LOSS_TERMS}

    def check(self) -> None:
        for t in LOSS_TERMS:
            v = getattr(self, t)
            if not np.isfinite(v) or v < 0:
                raise UsageError(f"partial loss {t} is invalid: {v}")


def reduce(residuals, metric: Metric):
    """Reduce a residual vector by one of the four metrics."""
    if np.size(ad.value_of(residuals)) == 0:
        raise UsageError("reduce called on an empty residual list")
    r = residuals if isinstance(residuals, ad.Node) else np.asarray(residuals, dtype=np.float64)
    metric = Metric(metric)
    if metric == Metric.MSE:
        return ad.vmean(ad.square(r))
    if metric == Metric.SSE:
        return ad.vsum(ad.square(r))
    if metric == Metric.MAE:
        return ad.vmean(ad.vabs(r))
    return ad.vsum(ad.vabs(r))


def integral_loss(batch: JetBatch, metric: Metric = Metric.MSE):
    """Residual of d(nu)/dx = |psi|^2 at every batch point."""
    if np.size(ad.value_of(batch.nu.d1)) == 0:
        raise UsageError("integral_loss needs a nonempty batch")
    density = ad.square(batch.psi[0].v)
    for ch in batch.psi[1:]:
        density = density + ad.square(ch.v)
    return reduce(batch.nu.d1 - density, metric)


def normalization_loss(nu_a, nu_b):
    """|nu(a) - 0| + |nu(b) - 1| (sum of absolute endpoint errors)."""
    return ad.vabs(nu_a) + ad.vabs(nu_b - 1.0)


def boundary_loss(system: SystemDef, psi_a: Sequence, psi_b: Sequence):
    """Dirichlet endpoints for the well, matched endpoints for the ring.

    ``psi_a``/``psi_b`` are per-channel values at the two domain ends.
    """
    total = None
    for ca, cb in zip(psi_a, psi_b):
        term = ad.vabs(ca) + ad.vabs(cb) if system.kind == WELL else ad.vabs(ca - cb)
        total = term if total is None else total + term
    return total


def periodicity_loss(system: SystemDef, psi: Sequence, psi_shifted: Sequence):
    """Squared mismatch between psi(theta) and psi(theta + 2*pi)."""
    if system.kind != RING:
        raise UsageError("periodicity_loss applies to the ring only")
    total = None
    for c, cs in zip(psi, psi_shifted):
        term = ad.vsum(ad.square(c - cs))
        total = term if total is None else total + term
    return total


def symmetry_loss(psi: Sequence, psi_mirror: Sequence, s: int):
    """Squared mismatch of psi(x) - s*psi(-x) over mirrored point pairs."""
    if s not in (1, -1):
        raise UsageError("symmetry factor s must be +1 or -1")
    total = None
    for c, cm in zip(psi, psi_mirror):
        term = ad.vsum(ad.square(c - float(s) * cm))
        total = term if total is None else total + term
    return total


def equal_norm_loss(psi: Sequence):
    """|mean(Re^2) - mean(Im^2)|: steers degenerate pairs toward e^{i n theta}."""
    if len(psi) != 2:
        raise UsageError("equal_norm_loss needs exactly 2 channels")
    return ad.vabs(ad.vmean(ad.square(psi[0])) - ad.vmean(ad.square(psi[1])))


def energy_min_loss(E, system: SystemDef):
    """exp(a*(E - E_init)); clamped above exponent 700 to keep it finite."""
    return ad.vexp(system.a_exp * (E - system.E_init), clamp=EXP_CLAMP)


def orthogonality_loss(psi: Sequence, prior_states, grid):
    """Sum of |<psi_i | psi>| over stored states, grid-normalized vectors.

    ``prior_states`` need ``.samples`` (channels x M, already normalized)
    and ``.grid`` attributes; overlaps use the discrete complex inner
    product with the stored state conjugated.  Returns 0.0 with no priors.
    """
    priors = list(prior_states)
    if not priors:
        return 0.0
    grid = np.asarray(grid, dtype=np.float64)
    norm_sq = None
    for c in psi:
        term = ad.vsum(ad.square(c))
        norm_sq = term if norm_sq is None else norm_sq + term
    inv_norm = ad.vrecip(ad.vsqrt(norm_sq + _NORM_EPS))
    total = None
    for prior in priors:
        ps = np.asarray(prior.samples, dtype=np.float64)
        if ps.shape[0] != len(psi) or not np.array_equal(np.asarray(prior.grid), grid):
            raise UsageError("stored state grid does not match the evaluation grid")
        if len(psi) == 1:
            absz = ad.vabs(ad.dot(ps[0], psi[0]))
        else:
            re = ad.dot(ps[0], psi[0]) + ad.dot(ps[1], psi[1])
            im = ad.dot(ps[0], psi[1]) - ad.dot(ps[1], psi[0])
            absz = ad.vsqrt(ad.square(re) + ad.square(im) + _NORM_EPS)
        overlap = ad.mul(absz, inv_norm)
        total = overlap if total is None else total + overlap
    return total


def pde_loss(batch: JetBatch, E, system: SystemDef, metric: Metric = Metric.MSE):
    """Stationary-equation residual -c * psi'' - E * psi per point and channel."""
    coef = 0.5 if system.kind == WELL else 1.0 / (2.0 * system.L ** 2)
    residuals = []
    for ch in batch.psi:
        residuals.append(-coef * ch.d2 - E * ch.v)
    stacked = residuals[0] if len(residuals) == 1 else ad.concat_rows(residuals)
    return reduce(stacked, metric)
