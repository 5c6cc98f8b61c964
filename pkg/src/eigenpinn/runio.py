"""Run-directory layout: manifest, per-state checkpoints, histories, samples.

    <run_dir>/
      manifest.json          config echo + per-state metadata + wall clock
      config.yaml            the exact configuration that ran
      state_000/
        checkpoint.npz       parameter arrays + JSON header
        history.csv          one row per log interval
        samples.csv          evaluation-grid samples of the stored state
      state_001/ ...
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import network as net
from .errors import UsageError
from .losses import LOSS_TERMS, LossBreakdown
from .trainer import SpectrumResult, StateRecord

HISTORY_FIELDS = (["epoch", "total", "E", "best_total", "fidelity"]
                  + [f"loss_{t}" for t in LOSS_TERMS]
                  + [f"w_{t}" for t in LOSS_TERMS])


def state_dir(run_dir, index: int) -> Path:
    return Path(run_dir) / f"state_{index:03d}"


def write_run(run_dir, cfg, result: SpectrumResult) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfgmod.save_config(cfg, run_dir / "config.yaml")
    states_meta = []
    for i, (record, history, params) in enumerate(
            zip(result.records, result.histories, result.params)):
        sdir = state_dir(run_dir, i)
        sdir.mkdir(exist_ok=True)
        ckpt = sdir / "checkpoint.npz"
        net.save_checkpoint(ckpt, params, seed=record.seed, epoch=record.epochs_used,
                            extra={"E": record.E, "state_index": i})
        record.checkpoint = str(ckpt.relative_to(run_dir))
        _write_history(sdir / "history.csv", history)
        _write_samples(sdir / "samples.csv", record)
        states_meta.append({
            "index": i,
            "E": record.E,
            "quantum_index": record.quantum_index,
            "s": record.s,
            "converged": record.converged,
            "epochs_used": record.epochs_used,
            "best_total": record.best_total,
            "seed": record.seed,
            "losses": record.losses.asdict(),
            "absent_losses": sorted(record.losses.absent),
            "checkpoint": record.checkpoint,
            "wall_seconds": result.wall_seconds[i],
        })
    manifest = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": cfgmod.to_dict(cfg),
        "seed": cfg.seed,
        "n_states_requested": cfg.n_states,
        "all_converged": result.all_converged,
        "energies_sorted": result.energies_sorted,
        "total_wall_seconds": sum(result.wall_seconds),
        "states": states_meta,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return run_dir


def _write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, restval="")
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def _write_samples(path, record: StateRecord) -> None:
    channels = record.samples.shape[0]
    header = ["x", "psi_re"] + (["psi_im"] if channels == 2 else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, x in enumerate(record.grid):
            writer.writerow([repr(float(x))]
                            + [repr(float(record.samples[c, j])) for c in range(channels)])


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise UsageError(f"no manifest.json in {run_dir}")
    return json.loads(path.read_text())


def read_history(run_dir, index: int) -> list[dict]:
    path = state_dir(run_dir, index) / "history.csv"
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({k: (float(v) if v else None) for k, v in row.items()})
    return rows


def load_records(run_dir) -> tuple[dict, list[StateRecord]]:
    """Rebuild StateRecords from a run directory (manifest + samples)."""
    manifest = read_manifest(run_dir)
    records = []
    for meta in manifest["states"]:
        sdir = state_dir(run_dir, meta["index"])
        grid, samples = _read_samples(sdir / "samples.csv")
        losses = LossBreakdown(absent=frozenset(meta["absent_losses"]),
                               **meta["losses"])
        records.append(StateRecord(
            grid=grid,
            samples=samples,
            E=meta["E"],
            quantum_index=meta["quantum_index"],
            s=meta["s"],
            losses=losses,
            epochs_used=meta["epochs_used"],
            converged=meta["converged"],
            best_total=meta["best_total"],
            seed=meta["seed"],
            checkpoint=meta["checkpoint"],
        ))
    return manifest, records


def _read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64)
    grid = data[:, 0]
    samples = data[:, 1:].T
    return grid, samples


def load_state_params(run_dir, index: int) -> net.NetworkParams:
    manifest = read_manifest(run_dir)
    meta = manifest["states"][index]
    params, _ = net.load_checkpoint(Path(run_dir) / meta["checkpoint"])
    return params
