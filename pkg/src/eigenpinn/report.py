"""Post-run evaluation: metrics table against the closed-form states and
the auxiliary-integral drift check."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import network as net
from . import oracles, runio
from .errors import UsageError
from .losses import WELL
from .trainer import StateRecord

METRICS_COLUMNS = ("system", "n", "E_pinn", "E_exact", "err_E", "fidelity")


@dataclass
class StateMetrics:
    index: int
    label: int                 # reported quantum number
    E_pinn: float
    E_exact: float
    err_E: float               # raw E_pinn when E_exact == 0
    err_is_relative: bool
    fidelity: float
    exact: oracles.EigenPair
    aligned: np.ndarray


def match_states(system_kind: str, L: float,
                 records: list[StateRecord]) -> list[StateMetrics]:
    """Pair each stored state with its closed-form reference.

    Well: state k is the (k+1)-th level.  Ring: state 0 is n=0; each later
    pair shares |n| and is assigned +n / -n by best aligned fidelity.
    """
    out: list[StateMetrics] = []
    if system_kind == WELL:
        for rec in records:
            exact = oracles.well_exact(rec.quantum_index + 1, L, rec.grid)
            out.append(_metrics_for(rec, exact))
        return out
    taken: set[int] = set()
    for rec in records:
        k = rec.quantum_index
        n_abs = (k + 1) // 2
        candidates = [n for n in {n_abs, -n_abs} if n not in taken]
        best = None
        for n in candidates:
            exact = oracles.ring_exact(n, L, rec.grid)
            m = _metrics_for(rec, exact)
            if best is None or m.fidelity > best.fidelity:
                best = m
        taken.add(best.exact.n)
        out.append(best)
    return out


def _metrics_for(rec: StateRecord, exact: oracles.EigenPair) -> StateMetrics:
    aligned, _ = oracles.phase_align(rec.samples, exact.samples)
    fid = oracles.fidelity(aligned, exact.samples)
    err = oracles.energy_rel_error(exact.E, rec.E)
    return StateMetrics(
        index=rec.quantum_index,
        label=exact.n,
        E_pinn=rec.E,
        E_exact=exact.E,
        err_E=err.value,
        err_is_relative=err.relative,
        fidelity=fid,
        exact=exact,
        aligned=aligned,
    )


def integral_drift(params: net.NetworkParams, grid: np.ndarray) -> float:
    """|(nu(b) - nu(a)) - trapezoid integral of |psi|^2 over the grid|.

    Both sides come from the raw (unnormalized) network output, so this
    bounds how far the integral channel drifted from real quadrature.
    """
    vals = net.forward_values(params, grid)
    density = np.sum(vals["psi"] ** 2, axis=0)
    quad = float(np.trapezoid(density, grid))
    nu_span = float(vals["nu"][-1] - vals["nu"][0])
    return abs(nu_span - quad)


def evaluate_run(run_dir) -> dict:
    """Metrics table + drift figures for a finished run directory."""
    manifest, records = runio.load_records(run_dir)
    if not records:
        raise UsageError("run directory has no stored states")
    cfg = manifest["config"]
    metrics = match_states(cfg["system"], cfg["L"], records)
    drifts = []
    for rec in records:
        params = runio.load_state_params(run_dir, rec.quantum_index)
        drifts.append(integral_drift(params, rec.grid))
    return {
        "system": cfg["system"],
        "metrics": metrics,
        "drifts": drifts,
        "all_converged": manifest["all_converged"],
        "records": records,
    }


def write_metrics_csv(path, system: str, metrics: list[StateMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for m in metrics:
            writer.writerow([system, m.label, repr(m.E_pinn), repr(m.E_exact),
                             repr(m.err_E), repr(m.fidelity)])


def summary_lines(result: dict) -> list[str]:
    lines = [f"system: {result['system']}  (all converged: {result['all_converged']})"]
    for m, drift in zip(result["metrics"], result["drifts"]):
        err_txt = (f"err_E={m.err_E: .3e}" if m.err_is_relative
                   else f"E_raw={m.err_E: .3e}")
        lines.append(
            f"  n={m.label:+d}  E={m.E_pinn:.6f}  E_exact={m.E_exact:.6f}  "
            f"{err_txt}  fidelity={m.fidelity:.7f}  nu_drift={drift:.2e}")
    return lines


def export_metrics(run_dir) -> Path:
    result = evaluate_run(run_dir)
    out = Path(run_dir) / "metrics.csv"
    write_metrics_csv(out, result["system"], result["metrics"])
    (Path(run_dir) / "summary.txt").write_text("\n".join(summary_lines(result)) + "\n")
    return out
