"""Ground truth and evaluation: closed-form eigenpairs, a finite-difference
diagonalization baseline, fidelity, and energy errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import UsageError
from .losses import RING, WELL, SystemDef


@dataclass
class EigenPair:
    """One eigenstate sampled on a grid; samples have discrete norm 1."""

    grid: np.ndarray
    samples: np.ndarray     # (channels, M)
    E: float
    n: int


def _grid_normalize(samples: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(samples * samples))
    if norm == 0.0:
        raise UsageError("cannot normalize a zero vector")
    return samples / norm


def well_exact(n: int, L: float, grid) -> EigenPair:
    """Analytic well state: sqrt(2/L) sin(n pi (x + L/2) / L), E = n^2 pi^2 / (2 L^2)."""
    if n < 1:
        raise UsageError("well quantum number n must be >= 1")
    grid = np.asarray(grid, dtype=np.float64)
    psi = np.sqrt(2.0 / L) * np.sin(n * np.pi / L * (grid + L / 2.0))
    E = n * n * np.pi * np.pi / (2.0 * L * L)
    return EigenPair(grid, _grid_normalize(psi[None, :]), float(E), n)


def ring_exact(n: int, L: float, grid) -> EigenPair:
    """Analytic ring state e^{i n theta} / sqrt(2 pi) as (Re, Im), E = n^2/(2 L^2)."""
    grid = np.asarray(grid, dtype=np.float64)
    re = np.cos(n * grid) / np.sqrt(2.0 * np.pi)
    im = np.sin(n * grid) / np.sqrt(2.0 * np.pi)
    E = n * n / (2.0 * L * L)
    return EigenPair(grid, _grid_normalize(np.stack([re, im])), float(E), n)


def fd_diagonalize(system: SystemDef, grid_n: int, k: int = 8) -> list[EigenPair]:
    """Second-order finite-difference Hamiltonian, lowest-k eigenpairs.

    Well: Dirichlet walls, interior grid of grid_n points.  Ring: cyclic
    second-difference in theta with the 1/L^2 metric factor, periodic grid
    of grid_n points (endpoint not duplicated).
    """
    if grid_n < 16:
        raise UsageError("fd_diagonalize needs grid_n >= 16")
    a, b = system.domain
    if system.kind == WELL:
        h = (b - a) / (grid_n + 1)
        x = a + h * np.arange(1, grid_n + 1)
        diag = np.full(grid_n, 1.0 / (h * h))
        off = np.full(grid_n - 1, -0.5 / (h * h))
        vals, vecs = scipy.linalg.eigh_tridiagonal(
            diag, off, select="i", select_range=(0, k - 1))
        labels = range(1, k + 1)
    else:
        h = (b - a) / grid_n
        x = a + h * np.arange(grid_n)
        coef = 1.0 / (2.0 * system.L ** 2 * h * h)
        ham = np.diag(np.full(grid_n, 2.0 * coef))
        idx = np.arange(grid_n)
        ham[idx, (idx + 1) % grid_n] = -coef
        ham[(idx + 1) % grid_n, idx] = -coef
        vals, vecs = np.linalg.eigh(ham)
        vals, vecs = vals[:k], vecs[:, :k]
        labels = range(k)
    pairs = []
    for j, n in zip(range(k), labels):
        psi = _grid_normalize(vecs[:, j][None, :])
        pairs.append(EigenPair(x, psi, float(vals[j]), n))
    return pairs


def _as_complex(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[0] == 1:
        return samples[0].astype(np.complex128)
    return samples[0] + 1j * samples[1]


def fidelity(psi_a, psi_b) -> float:
    """Squared modulus of the normalized discrete complex overlap."""
    va, vb = _as_complex(psi_a), _as_complex(psi_b)
    if va.shape != vb.shape:
        raise UsageError("fidelity needs samples on the same grid")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise UsageError("fidelity of a zero vector is undefined")
    return float(np.abs(np.vdot(va / na, vb / nb)) ** 2)


@dataclass(frozen=True)
class EnergyError:
    """Signed relative energy error, or the raw prediction when E_exact = 0."""

    value: float
    relative: bool


def energy_rel_error(E_ex: float, E_pinn: float) -> EnergyError:
    if E_ex == 0.0:
        return EnergyError(float(E_pinn), relative=False)
    return EnergyError(float((E_ex - E_pinn) / E_ex), relative=True)


def phase_align(psi_pred, psi_ex) -> tuple[np.ndarray, list[bool]]:
    """Flip each predicted channel to the sign of its overlap with the reference.

    Returns the aligned copy and per-channel flags marking zero overlaps
    (those channels are left unchanged).
    """
    pred = np.array(psi_pred, dtype=np.float64, copy=True)
    ex = np.asarray(psi_ex, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[None, :]
    if ex.ndim == 1:
        ex = ex[None, :]
    if pred.shape != ex.shape:
        raise UsageError("phase_align needs samples on the same grid")
    flags = []
    for c in range(pred.shape[0]):
        overlap = float(np.dot(ex[c], pred[c]))
        flags.append(overlap == 0.0)
        if overlap < 0.0:
            pred[c] = -pred[c]
    return pred, flags
