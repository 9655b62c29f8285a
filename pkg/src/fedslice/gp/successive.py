"""Successive inner-approximation loop for signomial programs.

Each outer iteration condenses every posynomial denominator at the current
iterate (turning the program into a standard GP), solves the log-space
convex problem with the barrier solver, and repeats until the penalized
objective stops improving.  Because the condensed feasible set always
contains the current iterate and condensation is tight there, the
objective trace is non-increasing; a safeguard keeps the previous iterate
whenever the subproblem solution fails to improve on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .program import GPProgram
from .solver import solve_convex

__all__ = ["SolverState", "run_successive_gp"]


class MonotonicityError(RuntimeError):
    """Objective trace increased; indicates a solver defect."""


@dataclass
class SolverState:
    """Outcome of a successive-GP run."""

    x: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    kkt_residual: float = float("nan")
    converged: bool = False
    outer_iterations: int = 0
    max_penalty_deviation: float = float("nan")
    message: str = ""

    def trace_rows(self) -> list[tuple[int, float, float, float]]:
        rows = []
        for i, obj in enumerate(self.objective_trace):
            rows.append((i, obj, self.kkt_residual if i == self.outer_iterations else float("nan"),
                         self.max_penalty_deviation if i == self.outer_iterations else float("nan")))
        return rows


def _penalty_deviation(program: GPProgram, x: np.ndarray) -> float:
    if not program.penalties:
        return 0.0
    return max(abs(x[vid] - 1.0) for vid, _ in program.penalties)


def run_successive_gp(program: GPProgram, x0: np.ndarray,
                      criterion: float = 1e-4, max_outer: int = 100,
                      inner_tol: float = 1e-8,
                      closure_target: float | None = None) -> SolverState:
    """Run the condense/solve loop from the (feasible) start point ``x0``.

    ``criterion`` is the relative objective-change threshold between outer
    iterations; when ``closure_target`` is given, convergence additionally
    requires every penalty auxiliary within that distance of 1 (so stale
    condensation anchors keep refreshing until the equalities close).  A
    program that is already a plain GP (no posynomial denominators)
    converges in a single outer iteration.
    """
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x <= 0.0):
        raise ValueError("start point must be strictly positive")
    trace = [program.objective_value(x)]
    kkt = float("nan")
    converged = False
    outer = 0
    message = ""
    pure_gp = program.is_gp()
    for outer in range(1, max_outer + 1):
        cond = program.condense_at(x)
        cvx = cond.to_convex()
        res = solve_convex(cvx, np.log(x), tol=inner_tol)
        obj_new = program.objective_value(res.x)
        obj_prev = trace[-1]
        if obj_new <= obj_prev:
            x = res.x
            kkt = res.kkt_residual
        else:
            # inner approximation cannot certify further progress; keep the
            # previous iterate rather than accept an objective increase
            obj_new = obj_prev
            message = "subproblem failed to improve; kept previous iterate"
            trace.append(obj_new)
            converged = True
            break
        trace.append(obj_new)
        rel_change = abs(obj_prev - obj_new) / max(1.0, abs(obj_prev))
        closed = (closure_target is None
                  or _penalty_deviation(program, x) <= closure_target)
        if pure_gp or (rel_change < criterion and closed):
            converged = True
            break
    for a, b in zip(trace, trace[1:]):
        if b > a + 1e-9 * max(1.0, abs(a)):
            raise MonotonicityError(f"objective increased from {a} to {b}")
    return SolverState(x=x, objective_trace=trace, kkt_residual=kkt,
                       converged=converged, outer_iterations=outer,
                       max_penalty_deviation=_penalty_deviation(program, x),
                       message=message)
