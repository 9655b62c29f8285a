"""Experiment drivers: simulate, optimize, sweep, montecarlo.

Every driver is a pure function of (config, seed): outputs are written
with deterministic formatting so reruns are byte-identical.  CSV files
embed a schema string in their header line.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bound import theorem1_bound, check_sufficient_conditions, max_unrecruited
from .config import ExperimentConfig
from .control import constraint_residuals, devent_times, round_and_repair
from .gp.encode import encode_problem
from .gp.successive import run_successive_gp
from .network import build_scenario
from .simulate import SimulationResult, bound_params_from_config, simulate

__all__ = ["run_simulate", "run_optimize", "run_sweep", "run_montecarlo",
           "SolverFailure", "InfeasibleDecisions"]

METRICS_SCHEMA = "round-metrics/1"
TRACE_SCHEMA = "solver-trace/1"
SWEEP_SCHEMA = "sweep/1"


class SolverFailure(RuntimeError):
    pass


class InfeasibleDecisions(RuntimeError):
    def __init__(self, violations: dict):
        super().__init__(f"rounded decisions violate {len(violations)} "
                         f"constraints: {sorted(violations)[:5]}")
        self.violations = violations


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_csv(path: Path, schema: str, header: list[str],
               rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def run_simulate(cfg: ExperimentConfig, seed: int | None = None,
                 out_dir: str | Path | None = None) -> SimulationResult:
    """Fixed-decision simulation over all rounds; emits metrics CSV and a
    bound report JSON when an output directory is given."""
    seed = cfg.scenario.get("seed", 1) if seed is None else seed
    res = simulate(cfg, seed=seed)
    if out_dir is not None:
        out = Path(out_dir)
        rows = [row for m in res.metrics for row in m.csv_rows(seed)]
        _write_csv(out / f"metrics_seed{seed}.csv", METRICS_SCHEMA,
                   ["seed", "round", "entity", "metric", "value"], rows)
        scenario = build_scenario({**cfg.scenario, "seed": seed})
        params = bound_params_from_config(cfg, scenario)
        report = theorem1_bound(res.round_stats, params)
        for i, stats in enumerate(res.round_stats):
            verdicts = check_sufficient_conditions(
                i, stats, params, max(scenario.n_flus, 1), scenario.rounds)
            report.conditions[f"round{i}"] = {
                v.name: {"passed": v.passed, "slack": v.slack}
                for v in verdicts}
        (out / f"bound_seed{seed}.json").write_text(report.to_json())
    return res


def run_optimize(cfg: ExperimentConfig, seed: int | None = None,
                 out_dir: str | Path | None = None):
    """Encode, run the successive-GP solver, round, audit, and emit.

    Returns (decisions, solver state, residual report).  Multi-round
    scenarios are optimized on a one-round replica and the optimized
    layout is replayed for every round.
    """
    scenario_cfg = dict(cfg.scenario)
    if seed is not None:
        scenario_cfg["seed"] = seed
    rounds = scenario_cfg.get("rounds", 1)
    scenario_cfg["rounds"] = 1
    scenario = build_scenario(scenario_cfg)
    enc = encode_problem(scenario, cfg)
    state = run_successive_gp(enc.program, enc.x0,
                              criterion=cfg.outer_criterion,
                              max_outer=cfg.max_outer,
                              inner_tol=cfg.solver_tol,
                              closure_target=1e-3)
    if not state.converged:
        raise SolverFailure(f"successive solver stopped without converging: "
                            f"{state.message or 'iteration cap'}")
    relaxed = enc.extract_decisions(state.x)
    rd = round_and_repair(relaxed.rounds[0], scenario)
    decisions = _replay_rounds(rd, rounds)

    # residual audit on the rounded vector
    sim_cfg_dict = {**scenario_cfg, "rounds": rounds}
    sim_scenario = build_scenario(sim_cfg_dict)
    sim = None
    report = None
    from .simulate import run_rounds
    sim = run_rounds(sim_scenario, cfg, decisions)
    m0 = sim.metrics[0]
    events = devent_times(
        m0.t_start,
        np.array([m0.tau_down[sim_scenario.flu_cell[u]]
                  for u in range(sim_scenario.n_flus)]),
        m0.tau_compute, m0.tau_d2d, m0.tau_wait, m0.tau_up)
    report = constraint_residuals(sim_scenario, decisions.rounds[0], events)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "decisions.json").write_text(decisions.to_json())
        rows = [(i, obj,
                 state.kkt_residual if i == len(state.objective_trace) - 1
                 else float("nan"),
                 state.max_penalty_deviation
                 if i == len(state.objective_trace) - 1 else float("nan"))
                for i, obj in enumerate(state.objective_trace)]
        _write_csv(out / "solver_trace.csv", TRACE_SCHEMA,
                   ["iteration", "objective", "kkt_residual",
                    "max_penalty_deviation"], rows)
        audit = {"max_residual": report.max_residual(),
                 "violations": report.violations()}
        (out / "audit.json").write_text(json.dumps(audit, sort_keys=True,
                                                   default=float))
    return decisions, state, report


def _replay_rounds(rd, rounds: int):
    from .control import DecisionVector
    out = [rd]
    span = rd.t[-1] - rd.t[0] + rd.fgti_spacing()[-1]
    for k in range(1, rounds):
        nxt = rd.copy()
        nxt.t = rd.t + k * span
        out.append(nxt)
    return DecisionVector(out)


_SWEEP_AXES = {
    "fgtis_per_round", "drift_bound", "dissimilarity", "rounds",
    "hetero_x1", "weight_energy",
}


def _sweep_point(args):
    cfg_dict, scenario, axis, value, seed = args
    scn = dict(scenario)
    exp = dict(cfg_dict)
    if axis in ("fgtis_per_round", "drift_bound", "dissimilarity", "rounds"):
        scn[axis] = value
    else:
        exp[axis] = value
    cfg = ExperimentConfig(scenario=scn, **exp)
    if axis == "hetero_x1":
        sc = build_scenario({**scn, "seed": seed})
        sizes = np.array([f.initial_dataset_size for f in sc.flus])
        params = bound_params_from_config(cfg, sc)
        count = max_unrecruited(sizes, params, eta=cfg.alpha_step
                                / np.sqrt(max(sc.rounds, 1)
                                          * max(sc.n_flus, 1)),
                                ell_max=max(cfg.sgd_iterations, 1.0))
        return [(axis, value, seed, "max_unrecruited", float(count))]
    if axis == "weight_energy":
        _, state, _ = run_optimize(cfg, seed=seed)
        return [(axis, value, seed, "objective", state.objective_trace[-1])]
    res = simulate(cfg, seed=seed, with_training=False)
    rows = [(axis, value, seed, "total_latency_s", res.total_latency()),
            (axis, value, seed, "total_energy_j", res.total_energy())]
    return rows


def run_sweep(cfg: ExperimentConfig, axis: str | None = None,
              values: list | None = None,
              out_dir: str | Path | None = None) -> list[tuple]:
    """One row per (axis value, seed, metric); averaged rows appended when
    several seeds run (montecarlo)."""
    axis = axis or cfg.sweep_axis
    values = values if values is not None else cfg.sweep_values
    if axis and axis not in _SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; "
                         f"choose from {sorted(_SWEEP_AXES)}")
    seeds = cfg.seeds or [cfg.scenario.get("seed", 1)]
    exp_dict = {f: getattr(cfg, f) for f in (
        "mode", "weight_bound", "weight_latency", "weight_energy", "zeta",
        "zeta_hat", "vartheta", "varpi", "alpha_step", "sigma_max",
        "smoothness", "hetero_x1", "hetero_x2", "model_dim", "training_dim",
        "bits_per_element", "p_norm", "maclaurin_c", "epsilon",
        "penalty_weight", "solver_tol", "outer_criterion", "max_outer",
        "boost_mode", "sgd_iterations", "minibatch_fraction",
        "learning_rate", "seeds", "workers", "out_dir")}
    if not axis or not values:
        jobs = [(exp_dict, cfg.scenario, "fgtis_per_round",
                 cfg.scenario.get("fgtis_per_round", 6), s) for s in seeds]
    else:
        jobs = [(exp_dict, cfg.scenario, axis, val, s)
                for val in values for s in seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_sweep_point, jobs))
    else:
        chunks = [_sweep_point(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    # per-value averages over seeds, in deterministic order
    by_key: dict[tuple, list[float]] = {}
    for axis_, val, _seed, metric, value in rows:
        by_key.setdefault((axis_, val, metric), []).append(value)
    for (axis_, val, metric), vs in sorted(by_key.items(),
                                           key=lambda kv: str(kv[0])):
        rows.append((axis_, val, "mean", metric, float(np.mean(vs))))
    if out_dir is not None:
        _write_csv(Path(out_dir) / "sweep.csv", SWEEP_SCHEMA,
                   ["axis", "value", "seed", "metric", "result"], rows)
    return rows


def run_montecarlo(cfg: ExperimentConfig,
                   out_dir: str | Path | None = None) -> list[tuple]:
    """Replicated simulation over the configured seeds with averaging."""
    rows = []
    for seed in cfg.seeds:
        res = run_simulate(cfg, seed=seed,
                           out_dir=out_dir if out_dir else None)
        rows.append((seed, res.total_latency(), res.total_energy()))
    lat = float(np.mean([r[1] for r in rows]))
    en = float(np.mean([r[2] for r in rows]))
    rows.append(("mean", lat, en))
    if out_dir is not None:
        _write_csv(Path(out_dir) / "montecarlo.csv", SWEEP_SCHEMA,
                   ["seed", "total_latency_s", "total_energy_j"], rows)
    return rows
