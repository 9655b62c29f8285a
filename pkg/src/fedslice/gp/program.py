"""Geometric-program container and the signomial-to-GP rewriting helpers.

A :class:`GPProgram` stores the objective posynomial, inequality
constraints of the form ``num(y) / den(y) <= 1`` (``den`` may be a
posynomial; it is replaced by its AM-GM monomial lower bound at the
current iterate before each convex solve), monomial equality constraints
``m(y) = 1``, per-variable boxes, and a registry of penalty auxiliaries
introduced when posynomial equalities are split into inequality pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import Monomial, Posynomial, Signomial, VariableRegistry, condense

__all__ = [
    "RatioConstraint",
    "GPProgram",
    "ConvexGP",
    "signomial_leq",
]

_ONE = Posynomial([Monomial(1.0)])


@dataclass
class RatioConstraint:
    """Inequality ``num / den <= 1``; den condensed per outer iteration."""

    num: Posynomial
    den: Posynomial
    name: str = ""

    def residual(self, x: np.ndarray) -> float:
        return self.num.value(x) / self.den.value(x) - 1.0

    def is_plain(self) -> bool:
        return self.den.is_monomial()


class GPProgram:
    """Signomial program in condensable form."""

    def __init__(self, variables: VariableRegistry):
        self.variables = variables
        self.objective: Posynomial = _ONE
        self.constraints: list[RatioConstraint] = []
        self.equalities: list[tuple[Monomial, str]] = []   # m(y) = 1
        self.penalties: list[tuple[int, float]] = []        # (aux var id, weight)

    # -- construction -----------------------------------------------------

    def set_objective(self, posy) -> None:
        self.objective = Posynomial.from_obj(posy)

    def add_leq(self, num, den=None, name: str = "") -> None:
        num = Posynomial.from_obj(num)
        den = _ONE if den is None else Posynomial.from_obj(den)
        self.constraints.append(RatioConstraint(num, den, name))

    def add_signomial_leq(self, expr, name: str = "", slack: float = 0.0) -> None:
        """Add ``expr <= slack`` where expr may contain negative terms.

        The inequality is rewritten as ``pos / (neg + slack) <= 1`` with pos
        and neg the positive/negative parts of the signomial.
        """
        s = Signomial.from_obj(expr) - slack
        pos, neg = s.split()
        if pos is None:
            return                        # holds identically
        den = neg if neg is not None else None
        if den is None:
            raise ValueError(f"constraint {name!r}: positive terms with empty "
                             "right-hand side can never hold")
        self.constraints.append(RatioConstraint(pos, den, name))

    def add_monomial_eq(self, mono, name: str = "") -> None:
        mono = Posynomial.from_obj(mono).as_monomial()
        self.equalities.append((mono, name))

    def add_split_equality(self, f, g, penalty_var: Monomial,
                           weight: float, name: str = "") -> None:
        """Encode posynomial equality ``f = g`` as a condensable pair.

        Adds ``f / g <= 1`` and ``g / (B f) <= 1`` where ``B`` is the
        penalty auxiliary (bounded below by 1, pushed toward 1 by adding
        ``weight * B`` to the objective).
        """
        f = Posynomial.from_obj(f)
        g = Posynomial.from_obj(g)
        (bvid,) = penalty_var.exps
        self.constraints.append(RatioConstraint(f, g, f"{name}/fwd"))
        self.constraints.append(
            RatioConstraint(g * penalty_var ** -1.0, f, f"{name}/rev"))
        self.penalties.append((bvid, float(weight)))

    def new_penalty_var(self, name: str, b_max: float = 1e6) -> Monomial:
        return self.variables.add(name, 1.0, b_max)

    # -- inspection --------------------------------------------------------

    def n_vars(self) -> int:
        return len(self.variables)

    def penalized_objective(self) -> Posynomial:
        obj = self.objective
        for vid, w in self.penalties:
            obj = obj + Monomial(w, {vid: 1.0})
        return obj

    def objective_value(self, x: np.ndarray) -> float:
        return self.penalized_objective().value(x)

    def max_constraint_residual(self, x: np.ndarray) -> float:
        if not self.constraints:
            return 0.0
        return max(c.residual(x) for c in self.constraints)

    def is_gp(self) -> bool:
        return all(c.is_plain() for c in self.constraints)

    # -- condensation ------------------------------------------------------

    def condense_at(self, x: np.ndarray) -> "CondensedGP":
        """Replace every posynomial denominator by its AM-GM monomial at x."""
        ineqs = []
        for c in self.constraints:
            ghat = condense(c.den, x)
            ineqs.append((Posynomial.from_obj(c.num * ghat ** -1.0), c.name))
        return CondensedGP(self, ineqs)


class CondensedGP:
    """Standard-form GP obtained by condensing a :class:`GPProgram`."""

    def __init__(self, parent: GPProgram, ineqs: list[tuple[Posynomial, str]]):
        self.parent = parent
        self.ineqs = ineqs

    def to_convex(self) -> "ConvexGP":
        return ConvexGP.build(self)


class ConvexGP:
    """Log-space convex form: min LSE_0(z) s.t. LSE_i(z) <= 0, Ez = e.

    Each posynomial ``sum_m d_m prod y^a`` becomes ``logsumexp(A z + b)``
    with rows ``a_m`` and offsets ``b_m = log d_m``.  Variable boxes become
    one-term (affine) inequality rows.  Value/gradient/Hessian oracles work
    on a single stacked term matrix for speed.
    """

    def __init__(self, n, A, b, seg_ptr, names, E, e):
        self.n = n
        self.A = A                    # (total_terms, n) stacked rows
        self.b = b                    # (total_terms,)
        self.seg_ptr = seg_ptr        # (n_fun + 1,) segment boundaries; fun 0 = objective
        self.names = names
        self.E = E                    # (n_eq, n) equality rows
        self.e = e                    # (n_eq,)

    @property
    def n_ineq(self) -> int:
        return len(self.seg_ptr) - 2

    @staticmethod
    def build(cond: CondensedGP) -> "ConvexGP":
        reg = cond.parent.variables
        n = len(reg)
        funs: list[tuple[Posynomial, str]] = [(cond.parent.penalized_objective(), "objective")]
        funs.extend(cond.ineqs)
        # variable boxes as affine one-term constraints
        box_rows = []
        for vid in range(n):
            lo, hi = reg.lower[vid], reg.upper[vid]
            if hi < math.inf:
                box_rows.append((vid, 1.0, -math.log(hi), f"box_hi/{reg.names[vid]}"))
            if lo > 0.0:
                box_rows.append((vid, -1.0, math.log(lo), f"box_lo/{reg.names[vid]}"))

        rows = []
        offs = []
        seg_ptr = [0]
        names = []
        for posy, name in funs:
            for m in posy.monomials:
                row = np.zeros(n)
                for v, e in m.exps.items():
                    row[v] = e
                rows.append(row)
                offs.append(math.log(m.coef))
            seg_ptr.append(len(rows))
            names.append(name)
        for vid, sgn, off, name in box_rows:
            row = np.zeros(n)
            row[vid] = sgn
            rows.append(row)
            offs.append(off)
            seg_ptr.append(len(rows))
            names.append(name)

        E_rows, e_vals = [], []
        for mono, _name in cond.parent.equalities:
            row = np.zeros(n)
            for v, e in mono.exps.items():
                row[v] = e
            E_rows.append(row)
            e_vals.append(-math.log(mono.coef))
        E = np.array(E_rows) if E_rows else np.zeros((0, n))
        e = np.array(e_vals) if e_vals else np.zeros(0)
        return ConvexGP(n, np.array(rows), np.array(offs),
                        np.array(seg_ptr, dtype=np.intp), names, E, e)

    # -- oracles ------------------------------------------------------------

    def _lse_all(self, z: np.ndarray):
        """Per-function LSE values and softmax weights at z."""
        t = self.A @ z + self.b
        nf = len(self.seg_ptr) - 1
        vals = np.empty(nf)
        w = np.empty_like(t)
        for i in range(nf):
            s, epnt = self.seg_ptr[i], self.seg_ptr[i + 1]
            ti = t[s:epnt]
            mx = ti.max()
            ex = np.exp(ti - mx)
            tot = ex.sum()
            vals[i] = mx + math.log(tot)
            w[s:epnt] = ex / tot
        return vals, w

    def value(self, z: np.ndarray, i: int = 0) -> float:
        s, epnt = self.seg_ptr[i], self.seg_ptr[i + 1]
        ti = self.A[s:epnt] @ z + self.b[s:epnt]
        mx = ti.max()
        return float(mx + math.log(np.exp(ti - mx).sum()))

    def gradient(self, z: np.ndarray, i: int = 0) -> np.ndarray:
        s, epnt = self.seg_ptr[i], self.seg_ptr[i + 1]
        ti = self.A[s:epnt] @ z + self.b[s:epnt]
        ex = np.exp(ti - ti.max())
        w = ex / ex.sum()
        return self.A[s:epnt].T @ w

    def all_values(self, z: np.ndarray) -> np.ndarray:
        vals, _ = self._lse_all(z)
        return vals


def signomial_leq(program: GPProgram, expr, name: str = "",
                  slack: float = 0.0) -> None:
    """Convenience wrapper for :meth:`GPProgram.add_signomial_leq`."""
    program.add_signomial_leq(expr, name=name, slack=slack)
