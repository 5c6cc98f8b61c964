"""Adam optimization of the weighted composite loss and sequential
discovery of eigenstates in order of increasing energy.

Each state is a fresh network trained against the physics losses; an
exponential energy penalty (weight decayed to zero) steers it to the
lowest state not yet found, and overlap penalties against the stored
states keep it orthogonal to them.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import time
from dataclasses import dataclass, field, replace

import numpy as np


def _tune_allocator() -> None:
    """Keep glibc from mmap-ing the per-epoch work arrays.

    Every epoch allocates and frees the same ~MB-sized activations; with
    default thresholds glibc returns them to the kernel each time and the
    page faults dominate small-matrix training.  Best effort, no-op off
    glibc.
    """
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c"), use_errno=True)
        m_mmap_threshold, m_trim_threshold = -3, -1
        libc.mallopt(m_mmap_threshold, 1 << 30)
        libc.mallopt(m_trim_threshold, 1 << 30)
    except (OSError, AttributeError, TypeError):
        pass

from . import autodiff as ad
from . import losses as ls
from . import network as net
from . import oracles
from .errors import NonFiniteGradients, NumericError, UsageError
from .sampler import MeshSampler, eval_grid

# epochs of consecutive numeric failure before a run is declared dead
_MAX_BAD_EPOCHS = 100


@dataclass(frozen=True)
class WeightSchedule:
    """Base loss weights plus the two scheduled ones.

    The energy-minimization weight decays linearly to exactly 0 over the
    first ``energy_decay_fraction`` of the epoch budget; the equation
    weight ramps linearly up to ``pde_ramp_factor`` times its base over
    the first ``pde_ramp_fraction``.
    """

    integral: float = 5000.0
    normalization: float = 1000.0
    boundary: float = 10.0
    orthogonality: float = 1000.0
    symmetry: float = 1000.0
    periodicity: float = 1000.0
    equal_norm: float = 1000.0
    energy_min: float = 10.0
    pde: float = 1.0
    energy_decay_fraction: float = 0.7
    pde_ramp_fraction: float = 0.5
    pde_ramp_factor: float = 10.0

    def weights_at(self, epoch: int, max_epochs: int) -> dict[str, float]:
        horizon = self.energy_decay_fraction * max_epochs
        if epoch >= horizon:
            w_energy = 0.0
        else:
            w_energy = self.energy_min * (1.0 - epoch / horizon)
        ramp_end = self.pde_ramp_fraction * max_epochs
        if epoch >= ramp_end:
            w_pde = self.pde * self.pde_ramp_factor
        else:
            w_pde = self.pde * (1.0 + (self.pde_ramp_factor - 1.0) * epoch / ramp_end)
        return {
            "integral": self.integral,
            "normalization": self.normalization,
            "boundary": self.boundary,
            "orthogonality": self.orthogonality,
            "symmetry": self.symmetry,
            "periodicity": self.periodicity,
            "equal_norm": self.equal_norm,
            "energy_min": w_energy,
            "pde": w_pde,
        }


@dataclass(frozen=True)
class ConvergenceCriteria:
    total_threshold: float = 1e-1
    pde_threshold: float = 5e-3
    max_epochs: int = 30000

    def __post_init__(self):
        if self.total_threshold <= 0 or self.pde_threshold <= 0:
            raise UsageError("convergence thresholds must be positive")


@dataclass
class StateRecord:
    """One discovered eigenpair on the shared evaluation grid."""

    grid: np.ndarray
    samples: np.ndarray          # (channels, M), discrete norm 1
    E: float
    quantum_index: int
    s: int | None
    losses: ls.LossBreakdown
    epochs_used: int
    converged: bool
    best_total: float
    seed: int
    checkpoint: str | None = None


@dataclass(frozen=True)
class AdamHyper:
    """Adam settings plus an optional late exponential learning-rate decay.

    With a constant rate, gradient noise keeps the parameters diffusing at
    the lr scale, which floors the heavily weighted constraint losses well
    above the convergence thresholds; decaying the rate over the tail of
    the budget lets the solution actually settle.  ``lr_final_fraction=1``
    disables the decay.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_final_fraction: float = 1.0
    lr_decay_start: float = 0.5

    def lr_at(self, epoch: int, max_epochs: int) -> float:
        if self.lr_final_fraction >= 1.0:
            return self.lr
        start = self.lr_decay_start * max_epochs
        if epoch <= start:
            return self.lr
        frac = (epoch - start) / max(max_epochs - start, 1)
        return self.lr * self.lr_final_fraction ** min(frac, 1.0)


def adam_moments(params: dict[str, np.ndarray]) -> tuple[dict, dict]:
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.items()}
    return zeros(), zeros()


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              moments: tuple[dict, dict], hyper: AdamHyper, t: int) -> None:
    """Standard bias-corrected Adam update, in place."""
    if t < 1:
        raise UsageError("Adam step counter t must be >= 1")
    for g in grads.values():
        if not np.isfinite(g).all():
            raise NonFiniteGradients("gradient contains NaN/Inf")
    m, v = moments
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for slot, g in grads.items():
        m[slot] = hyper.beta1 * m[slot] + (1.0 - hyper.beta1) * g
        v[slot] = hyper.beta2 * v[slot] + (1.0 - hyper.beta2) * (g * g)
        step = hyper.lr * (m[slot] / c1) / (np.sqrt(v[slot] / c2) + hyper.eps)
        params[slot] -= step


@dataclass(frozen=True)
class TrainSetup:
    """Everything train_state needs beyond the system definition."""

    system: ls.SystemDef
    spec: net.NetworkSpec
    schedule: WeightSchedule
    criteria: ConvergenceCriteria
    batch_size: int
    sigma: float | None
    eval_points: int
    hyper: AdamHyper = AdamHyper()
    integral_metric: ls.Metric = ls.Metric.MSE
    pde_metric: ls.Metric = ls.Metric.MSE
    log_interval: int = 100


def _epoch_eval(arrs, setup: TrainSetup, batch: np.ndarray, priors, grid,
                want_grid: bool):
    """One forward pass covering batch jets plus all value-only points.

    Returns (per-term loss nodes, psi grid values or None).
    """
    system = setup.system
    a, b = system.domain
    nb = batch.size
    if system.kind == ls.WELL:
        companion = -batch
    else:
        companion = batch + 2.0 * np.pi
    extra = [companion, np.array([a, b])]
    if want_grid:
        extra.append(grid)
    x_extra = np.concatenate(extra)
    maps = net.evaluate(arrs, setup.spec, batch, x_extra)

    channels = setup.spec.main_outputs
    jets = ls.JetBatch(psi=[ls.JetTriple(*maps.psi_jet(c)) for c in range(channels)],
                       nu=ls.JetTriple(*maps.nu_jet()))
    psi_extra = [maps.psi_extra(c) for c in range(channels)]
    nu_extra = maps.nu_extra()
    psi_comp = [ad.rows(p, 0, nb) for p in psi_extra]
    psi_a = [ad.take(p, nb) for p in psi_extra]
    psi_b = [ad.take(p, nb + 1) for p in psi_extra]
    nu_a = ad.take(nu_extra, nb)
    nu_b = ad.take(nu_extra, nb + 1)
    psi_grid = None
    if want_grid:
        psi_grid = [ad.rows(p, nb + 2, nb + 2 + grid.size) for p in psi_extra]

    E = net.energy_term(arrs)
    terms = {
        "integral": ls.integral_loss(jets, setup.integral_metric),
        "normalization": ls.normalization_loss(nu_a, nu_b),
        "boundary": ls.boundary_loss(system, psi_a, psi_b),
        "energy_min": ls.energy_min_loss(E, system),
        "pde": ls.pde_loss(jets, E, system, setup.pde_metric),
    }
    if system.kind == ls.WELL:
        terms["symmetry"] = ls.symmetry_loss(
            [ls_jet.v for ls_jet in jets.psi], psi_comp, system.symmetry_s)
    else:
        terms["periodicity"] = ls.periodicity_loss(
            system, [ls_jet.v for ls_jet in jets.psi], psi_comp)
        terms["equal_norm"] = ls.equal_norm_loss([ls_jet.v for ls_jet in jets.psi])
    if priors:
        terms["orthogonality"] = ls.orthogonality_loss(psi_grid, priors, grid)
    return terms, psi_grid, E


def _breakdown(terms, system_kind: str) -> ls.LossBreakdown:
    absent = {"periodicity", "equal_norm"} if system_kind == ls.WELL else {"symmetry"}
    if "orthogonality" not in terms:
        absent.add("orthogonality")
    values = {name: float(ad.value_of(node)) for name, node in terms.items()}
    return ls.LossBreakdown(absent=frozenset(absent), **values)


def _grid_samples(params: net.NetworkParams, grid: np.ndarray) -> np.ndarray:
    psi = net.forward_values(params, grid)["psi"]
    norm = np.sqrt(np.sum(psi * psi))
    return psi / norm if norm > 0 else psi


def train_state(setup: TrainSetup, priors: list[StateRecord], seed: int,
                quantum_index: int = 0,
                fidelity_targets: list[np.ndarray] | None = None):
    """Train one network to the next eigenstate.

    Loops sample -> forward jets -> weighted losses -> reverse sweep ->
    Adam on the main and energy parameters jointly; keeps the
    lowest-total-loss parameters and stops once both convergence
    thresholds are met.  Returns (StateRecord, history rows, best params).
    """
    system = setup.system
    grid = eval_grid(system.domain, setup.eval_points)
    for p in priors:
        if not np.array_equal(p.grid, grid):
            raise UsageError("stored states are not on the shared evaluation grid")
    sampler = MeshSampler(system.domain, setup.batch_size, setup.sigma, seed=seed)
    params = net.init(setup.spec, seed)
    moments = adam_moments(params.arrays)
    criteria = setup.criteria

    best_total = np.inf
    best_params = params.copy()
    best_breakdown = ls.LossBreakdown()
    best_epoch = 0
    history: list[dict] = []
    converged = False
    bad_epochs = 0
    epoch = 0

    for epoch in range(1, criteria.max_epochs + 1):
        batch = sampler.sample_batch(epoch)
        weights = setup.schedule.weights_at(epoch, criteria.max_epochs)
        tape = ad.Tape()
        arrs = {slot: tape.param(slot, v) for slot, v in params.arrays.items()}
        try:
            terms, _, E_node = _epoch_eval(arrs, setup, batch, priors, grid,
                                           want_grid=bool(priors))
            total_node = None
            for name, node in terms.items():
                w = weights[name]
                if w == 0.0:
                    continue
                contrib = ad.mul(node, w)
                total_node = contrib if total_node is None else total_node + contrib
            grads = ad.backward(tape, total_node)
        except NumericError:
            bad_epochs += 1
            if bad_epochs >= _MAX_BAD_EPOCHS:
                break
            continue

        breakdown = _breakdown(terms, system.kind)
        total = float(ad.value_of(total_node))
        if np.isfinite(total) and total < best_total:
            best_total = total
            best_params = params.copy()
            best_breakdown = breakdown
            best_epoch = epoch

        if epoch % setup.log_interval == 0 or epoch == 1:
            row = {"epoch": epoch, "total": total,
                   "E": float(ad.value_of(E_node)), "best_total": best_total}
            row.update({f"loss_{k}": v for k, v in breakdown.asdict().items()})
            row.update({f"w_{k}": v for k, v in weights.items()})
            if fidelity_targets:
                cur = _grid_samples(params, grid)
                row["fidelity"] = max(oracles.fidelity(cur, t) for t in fidelity_targets)
            history.append(row)

        if total < criteria.total_threshold and breakdown.pde < criteria.pde_threshold:
            converged = True
            break

        try:
            hyper = setup.hyper
            lr_now = hyper.lr_at(epoch, criteria.max_epochs)
            if lr_now != hyper.lr:
                hyper = replace(hyper, lr=lr_now)
            adam_step(params.arrays, grads, moments, hyper, epoch)
            bad_epochs = 0
        except NonFiniteGradients:
            bad_epochs += 1
            if bad_epochs >= _MAX_BAD_EPOCHS:
                break

    if converged:
        best_params = params.copy()
        best_total = float(ad.value_of(total_node))
        best_breakdown = _breakdown(terms, system.kind)
        best_epoch = epoch

    record = StateRecord(
        grid=grid,
        samples=_grid_samples(best_params, grid),
        E=net.energy(best_params),
        quantum_index=quantum_index,
        s=system.symmetry_s,
        losses=best_breakdown,
        epochs_used=epoch,
        converged=converged,
        best_total=best_total,
        seed=seed,
    )
    return record, history, best_params


@dataclass
class SpectrumResult:
    records: list[StateRecord]
    histories: list[list[dict]]
    params: list[net.NetworkParams]
    wall_seconds: list[float]
    all_converged: bool
    energies_sorted: bool = True


def _state_seed(seed: int, index: int, attempt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, index, attempt]).generate_state(1)[0])


def _fidelity_targets(system: ls.SystemDef, index: int, grid: np.ndarray):
    """Closed-form states this state index is expected to converge to."""
    if system.kind == ls.WELL:
        return [oracles.well_exact(index + 1, system.L, grid).samples]
    n = (index + 1) // 2
    if n == 0:
        return [oracles.ring_exact(0, system.L, grid).samples]
    return [oracles.ring_exact(n, system.L, grid).samples,
            oracles.ring_exact(-n, system.L, grid).samples]


def solve_spectrum(setup: TrainSetup, n_states: int, seed: int,
                   retries: int = 0) -> SpectrumResult:
    """Discover n_states eigenpairs in order of increasing energy.

    After each convergence the found energy becomes the next penalty
    origin; for the well the symmetry factor alternates starting at +1.
    Stops early (flagged) if a state fails to converge after the allowed
    retries.
    """
    if n_states < 1:
        raise UsageError("n_states must be >= 1")
    _tune_allocator()
    base = setup.system
    records: list[StateRecord] = []
    histories: list[list[dict]] = []
    all_params: list[net.NetworkParams] = []
    walls: list[float] = []
    e_init = base.E_init
    grid = eval_grid(base.domain, setup.eval_points)
    for k in range(n_states):
        s = (1 if k % 2 == 0 else -1) if base.kind == ls.WELL else None
        system_k = replace(base, symmetry_s=s, E_init=e_init)
        setup_k = replace(setup, system=system_k)
        targets = _fidelity_targets(base, k, grid)
        t0 = time.perf_counter()
        for attempt in range(retries + 1):
            record, history, params = train_state(
                setup_k, records, _state_seed(seed, k, attempt),
                quantum_index=k, fidelity_targets=targets)
            if record.converged:
                break
        walls.append(time.perf_counter() - t0)
        records.append(record)
        histories.append(history)
        all_params.append(params)
        if not record.converged:
            break
        e_init = record.E
    energies = [r.E for r in records]
    sorted_ok = all(e2 >= e1 - 2e-2 * max(abs(e1), 1.0)
                    for e1, e2 in zip(energies, energies[1:]))
    return SpectrumResult(
        records=records,
        histories=histories,
        params=all_params,
        wall_seconds=walls,
        all_converged=all(r.converged for r in records) and len(records) == n_states,
        energies_sorted=sorted_ok,
    )
