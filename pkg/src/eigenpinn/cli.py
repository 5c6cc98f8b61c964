"""Command-line entry point: solve, evaluate, export-plots.

Exit codes: 0 success, 2 invalid configuration or missing inputs,
3 solve finished but some requested state did not converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from . import plots, report, runio
from .errors import ConfigurationError, UsageError
from .trainer import solve_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigenpinn",
        description="Unsupervised neural solver for 1-D stationary "
                    "Schrodinger eigenproblems (infinite well, particle on a ring).")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="train the requested number of states")
    solve.add_argument("--preset", choices=sorted(cfgmod.PRESETS),
                       help="baked-in configuration to start from")
    solve.add_argument("--config", type=Path, help="YAML config file")
    solve.add_argument("--states", type=int, help="number of states to find")
    solve.add_argument("--seed", type=int, help="master seed")
    solve.add_argument("--max-epochs", type=int, help="epoch budget per state")
    solve.add_argument("--out", type=Path, help="run directory to create")
    solve.add_argument("--retries", type=int,
                       help="extra seeds to try for a non-converging state")

    ev = sub.add_parser("evaluate", help="metrics table for a finished run")
    ev.add_argument("run_dir", type=Path)

    ex = sub.add_parser("export-plots", help="figures and CSVs for a finished run")
    ex.add_argument("run_dir", type=Path)
    return parser


def _solve_config(args) -> cfgmod.SolveConfig:
    if args.preset is None and args.config is None:
        raise ConfigurationError("need --preset and/or --config", "preset")
    cfg = cfgmod.preset(args.preset) if args.preset else None
    if args.config is not None:
        cfg = cfgmod.load_config(args.config, base=cfg)
    overrides = {}
    if args.states is not None:
        overrides["n_states"] = args.states
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_epochs is not None:
        overrides["max_epochs"] = args.max_epochs
    if args.retries is not None:
        overrides["retries"] = args.retries
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    cfg = cfgmod._apply(cfg, overrides)
    return cfgmod.validate(cfg)


def cmd_solve(args) -> int:
    try:
        cfg = _solve_config(args)
    except ConfigurationError as err:
        print(f"error: invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out_dir is None:
        cfg.out_dir = f"runs/{cfg.system}"
    setup = cfgmod.build_setup(cfg)
    print(f"solving {cfg.system}: {cfg.n_states} states, seed {cfg.seed}, "
          f"max {cfg.max_epochs} epochs/state")
    result = solve_spectrum(setup, cfg.n_states, cfg.seed, retries=cfg.retries)
    run_dir = runio.write_run(cfg.out_dir, cfg, result)
    for rec, wall in zip(result.records, result.wall_seconds):
        status = "converged" if rec.converged else "NOT CONVERGED"
        print(f"  state {rec.quantum_index}: E={rec.E:.6f}  "
              f"epochs={rec.epochs_used}  total={rec.best_total:.3e}  "
              f"[{status}, {wall:.0f}s]")
    print(f"run written to {run_dir}")
    if not result.all_converged:
        print("error: not all requested states converged", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        result = report.evaluate_run(args.run_dir)
        out = report.export_metrics(args.run_dir)
    except (UsageError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    for line in report.summary_lines(result):
        print(line)
    print(f"metrics written to {out}")
    return EXIT_OK


def cmd_export_plots(args) -> int:
    try:
        created = plots.export_plots(args.run_dir)
    except (UsageError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    for path in created:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"solve": cmd_solve, "evaluate": cmd_evaluate,
                "export-plots": cmd_export_plots}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
