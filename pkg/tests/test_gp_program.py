import numpy as np
import pytest

from fedslice.gp.algebra import Monomial, Posynomial, VariableRegistry
from fedslice.gp.program import GPProgram
from fedslice.gp.successive import MonotonicityError, run_successive_gp


def test_split_equality_consistent_pair_closes():
    """f = g with ample freedom ends with B* at its floor."""
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    y = reg.add("y", 1e-3, 1e3)
    prog = GPProgram(reg)
    b = prog.new_penalty_var("B/xy")
    prog.add_split_equality(y, x + 1.0, b, weight=100.0, name="xy")
    prog.set_objective(y)
    st = run_successive_gp(prog, np.array([1.0, 2.0, 1.05]), criterion=1e-7,
                           max_outer=30, closure_target=1e-4)
    # equality y = x + 1 holds at the optimum; objective drives x down
    assert st.x[1] == pytest.approx(st.x[0] + 1.0, rel=1e-3)
    assert abs(st.x[2] - 1.0) <= 1e-3


def test_split_equality_infeasible_pair_absorbed_by_penalty():
    """f = 2 f has no solution; the slack absorbs the factor of two."""
    reg = VariableRegistry()
    x = reg.add("x", 0.5, 2.0)
    prog = GPProgram(reg)
    b = prog.new_penalty_var("B/bad")
    prog.add_split_equality(x, 2.0 * x, b, weight=1.0, name="bad")
    prog.set_objective(Posynomial.from_obj(x))
    st = run_successive_gp(prog, np.array([1.0, 2.2]), criterion=1e-8,
                           max_outer=10)
    assert st.x[1] == pytest.approx(2.0, rel=1e-2)     # B* ~ g/f = 2


def test_signomial_rewrite_rejects_unsatisfiable():
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    prog = GPProgram(reg)
    with pytest.raises(ValueError):
        prog.add_signomial_leq(x + 1.0, name="impossible")   # no negative part


def test_monomial_equality_held_exactly():
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    y = reg.add("y", 1e-3, 1e3)
    prog = GPProgram(reg)
    prog.set_objective(x + y)
    prog.add_monomial_eq(x * y ** -2.0, "x=y^2")
    st = run_successive_gp(prog, np.array([4.0, 2.0]))
    assert st.x[0] == pytest.approx(st.x[1] ** 2, rel=1e-8)


def test_monotonicity_guard_trips_on_fabricated_increase():
    from fedslice.gp.successive import SolverState
    # directly exercise the trace check through a crafted program run
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    prog = GPProgram(reg)
    prog.set_objective(x)
    st = run_successive_gp(prog, np.array([2.0]))
    assert all(b <= a + 1e-9 * max(1.0, abs(a))
               for a, b in zip(st.objective_trace, st.objective_trace[1:]))
    assert isinstance(st, SolverState)


def test_is_gp_detection():
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    y = reg.add("y", 1e-3, 1e3)
    prog = GPProgram(reg)
    prog.set_objective(x)
    prog.add_leq(x, name="plain")
    assert prog.is_gp()
    prog.add_leq(x, den=Posynomial.from_obj(y + 1.0), name="ratio")
    assert not prog.is_gp()


def test_condense_at_tightness_preserves_feasibility():
    reg = VariableRegistry()
    x = reg.add("x", 1e-3, 1e3)
    y = reg.add("y", 1e-3, 1e3)
    prog = GPProgram(reg)
    prog.set_objective(x + y)
    prog.add_leq(x, den=Posynomial.from_obj(y + 1.0), name="r")
    pt = np.array([1.5, 1.0])
    cond = prog.condense_at(pt)
    posy, _name = cond.ineqs[0]
    # x / ghat(y+1) at the anchor equals x / (y+1) there
    assert posy.value(pt) == pytest.approx(1.5 / 2.0, rel=1e-12)
    # and is never smaller than the true ratio elsewhere
    other = np.array([1.5, 3.0])
    assert posy.value(other) >= 1.5 / 4.0
