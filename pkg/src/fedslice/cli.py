"""Command-line entry point.

Verbs: simulate | optimize | sweep | montecarlo.  Exit codes: 0 ok,
2 config error, 3 solver non-convergence, 4 infeasible.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_experiment_config
from .drivers import (InfeasibleDecisions, SolverFailure, run_montecarlo,
                      run_optimize, run_simulate, run_sweep)
from .gp.solver import Infeasible
from .latency import IncompleteTransmission

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fedslice",
        description="Simulate and optimize D2D-assisted federated learning "
                    "over a sliced radio access network.")
    ap.add_argument("verb", nargs="?",
                    choices=["simulate", "optimize", "sweep", "montecarlo"],
                    help="what to run (defaults to --mode or the config's mode)")
    ap.add_argument("--config", required=True, help="experiment config JSON")
    ap.add_argument("--mode", choices=["simulate", "optimize", "sweep",
                                       "montecarlo"],
                    help="overrides the config's mode when no verb is given")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--out", help="output directory (default from config)")
    ap.add_argument("--axis", help="sweep axis (sweep mode)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    mode = args.verb or args.mode or cfg.mode
    out = args.out or cfg.out_dir
    try:
        if mode == "simulate":
            res = run_simulate(cfg, seed=args.seed, out_dir=out)
            print(f"simulated {len(res.metrics)} rounds: "
                  f"latency {res.total_latency():.6g} s, "
                  f"energy {res.total_energy():.6g} J -> {out}")
        elif mode == "optimize":
            decisions, state, report = run_optimize(cfg, seed=args.seed,
                                                    out_dir=out)
            print(f"optimized in {state.outer_iterations} outer iterations: "
                  f"objective {state.objective_trace[-1]:.6g}, "
                  f"kkt {state.kkt_residual:.2e}, "
                  f"max residual {report.max_residual():.2e} -> {out}")
            if not report.feasible(1e-6):
                raise InfeasibleDecisions(report.violations(1e-6))
        elif mode == "sweep":
            rows = run_sweep(cfg, axis=args.axis, out_dir=out)
            print(f"swept {len(rows)} rows -> {out}")
        else:
            rows = run_montecarlo(cfg, out_dir=out)
            print(f"montecarlo over {len(cfg.seeds)} seeds -> {out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure,) as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (Infeasible, InfeasibleDecisions, IncompleteTransmission) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
