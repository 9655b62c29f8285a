"""Symbolic monomial/posynomial algebra for geometric programming.

A monomial is ``d * prod_j y_j**a_j`` with ``d > 0`` and real exponents; a
posynomial is a sum of monomials.  Signomials (signed coefficients) appear
only as an intermediate when rewriting inequalities that contain
subtraction; they are split back into a positive/negative posynomial pair
before entering a program.

Variables are referred to by integer ids.  A :class:`VariableRegistry`
maps human-readable names to ids and keeps per-variable bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Monomial",
    "Posynomial",
    "Signomial",
    "VariableRegistry",
    "condense",
    "exp_power_approx",
    "maclaurin_exp_posynomial",
    "softmin",
    "softmax",
]


def _key(exps: dict[int, float]) -> tuple:
    return tuple(sorted((v, e) for v, e in exps.items() if e != 0.0))


class Monomial:
    """Positive-coefficient power product ``coef * prod y_i**exps[i]``."""

    __slots__ = ("coef", "exps")

    def __init__(self, coef: float, exps: dict[int, float] | None = None):
        if not (coef > 0.0) or not math.isfinite(coef):
            raise ValueError(f"monomial coefficient must be finite and > 0, got {coef}")
        self.coef = float(coef)
        self.exps = {int(v): float(e) for v, e in (exps or {}).items() if e != 0.0}

    @staticmethod
    def var(vid: int) -> "Monomial":
        return Monomial(1.0, {vid: 1.0})

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exps)
            for v, e in other.exps.items():
                exps[v] = exps.get(v, 0.0) + e
            return Monomial(self.coef * other.coef, exps)
        if isinstance(other, (int, float)):
            return Monomial(self.coef * other, dict(self.exps))
        if isinstance(other, (Posynomial, Signomial)):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1.0
        if isinstance(other, (int, float)):
            return Monomial(self.coef / other, dict(self.exps))
        return NotImplemented

    def __pow__(self, p: float) -> "Monomial":
        return Monomial(self.coef ** p, {v: e * p for v, e in self.exps.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __sub__(self, other):
        return Signomial.from_obj(self) - other

    def __rsub__(self, other):
        return Signomial.from_obj(other) - self

    def __neg__(self):
        return Signomial([(-self.coef, dict(self.exps))])

    def value(self, x: np.ndarray) -> float:
        out = self.coef
        for v, e in self.exps.items():
            out *= x[v] ** e
        return out

    def log_value(self, logx: np.ndarray) -> float:
        out = math.log(self.coef)
        for v, e in self.exps.items():
            out += e * logx[v]
        return out

    def variables(self) -> set[int]:
        return set(self.exps)

    def __repr__(self):
        parts = [f"{self.coef:g}"] + [f"y{v}^{e:g}" for v, e in sorted(self.exps.items())]
        return "*".join(parts)


class Posynomial:
    """Sum of monomials; all coefficients strictly positive."""

    __slots__ = ("monomials",)

    def __init__(self, monomials):
        monos = list(monomials)
        if not monos:
            raise ValueError("posynomial needs at least one monomial")
        # merge like terms
        acc: dict[tuple, float] = {}
        rep: dict[tuple, dict[int, float]] = {}
        for m in monos:
            if not isinstance(m, Monomial):
                raise TypeError(f"expected Monomial, got {type(m)}")
            k = _key(m.exps)
            acc[k] = acc.get(k, 0.0) + m.coef
            rep[k] = m.exps
        self.monomials = [Monomial(c, rep[k]) for k, c in acc.items()]

    @staticmethod
    def from_obj(obj) -> "Posynomial":
        if isinstance(obj, Posynomial):
            return obj
        if isinstance(obj, Monomial):
            return Posynomial([obj])
        if isinstance(obj, (int, float)):
            return Posynomial([Monomial(float(obj))])
        if isinstance(obj, Signomial):
            return obj.as_posynomial()
        raise TypeError(f"cannot interpret {type(obj)} as posynomial")

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        if isinstance(other, Signomial):
            return Signomial.from_obj(self) + other
        other = Posynomial.from_obj(other)
        return Posynomial(self.monomials + other.monomials)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial(float(other))
        if isinstance(other, Monomial):
            return Posynomial([m * other for m in self.monomials])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.monomials for b in other.monomials])
        if isinstance(other, Signomial):
            return Signomial.from_obj(self) * other
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, Monomial)):
            inv = Monomial(1.0 / other) if isinstance(other, (int, float)) else other ** -1.0
            return self * inv
        return NotImplemented

    def __sub__(self, other):
        return Signomial.from_obj(self) - other

    def __rsub__(self, other):
        return Signomial.from_obj(other) - self

    def value(self, x: np.ndarray) -> float:
        return float(sum(m.value(x) for m in self.monomials))

    def log_value(self, logx: np.ndarray) -> float:
        """log of the posynomial value, computed via log-sum-exp."""
        logs = np.array([m.log_value(logx) for m in self.monomials])
        mx = logs.max()
        return float(mx + math.log(np.exp(logs - mx).sum()))

    def variables(self) -> set[int]:
        out: set[int] = set()
        for m in self.monomials:
            out |= m.variables()
        return out

    def is_monomial(self) -> bool:
        return len(self.monomials) == 1

    def as_monomial(self) -> Monomial:
        if not self.is_monomial():
            raise ValueError("posynomial has more than one term")
        return self.monomials[0]

    def __len__(self):
        return len(self.monomials)

    def __repr__(self):
        return " + ".join(repr(m) for m in self.monomials)


class Signomial:
    """Signed sum of power products; intermediate form only.

    ``terms`` is a list of ``(coef, exps)`` with arbitrary-sign coefficients.
    """

    __slots__ = ("terms",)

    def __init__(self, terms):
        acc: dict[tuple, float] = {}
        rep: dict[tuple, dict[int, float]] = {}
        for c, exps in terms:
            k = _key(exps)
            acc[k] = acc.get(k, 0.0) + float(c)
            rep[k] = exps
        self.terms = [(c, rep[k]) for k, c in acc.items() if c != 0.0]

    @staticmethod
    def from_obj(obj) -> "Signomial":
        if isinstance(obj, Signomial):
            return obj
        if isinstance(obj, Monomial):
            return Signomial([(obj.coef, dict(obj.exps))])
        if isinstance(obj, Posynomial):
            return Signomial([(m.coef, dict(m.exps)) for m in obj.monomials])
        if isinstance(obj, (int, float)):
            return Signomial([(float(obj), {})])
        raise TypeError(f"cannot interpret {type(obj)} as signomial")

    def __add__(self, other):
        other = Signomial.from_obj(other)
        return Signomial(self.terms + other.terms)

    __radd__ = __add__

    def __sub__(self, other):
        other = Signomial.from_obj(other)
        return Signomial(self.terms + [(-c, e) for c, e in other.terms])

    def __rsub__(self, other):
        other = Signomial.from_obj(other)
        return Signomial(other.terms + [(-c, e) for c, e in self.terms])

    def __neg__(self):
        return Signomial([(-c, e) for c, e in self.terms])

    def __mul__(self, other):
        other = Signomial.from_obj(other)
        out = []
        for c1, e1 in self.terms:
            for c2, e2 in other.terms:
                exps = dict(e1)
                for v, e in e2.items():
                    exps[v] = exps.get(v, 0.0) + e
                out.append((c1 * c2, exps))
        return Signomial(out)

    __rmul__ = __mul__

    def split(self) -> tuple["Posynomial | None", "Posynomial | None"]:
        """Split into (positive part, negative part); either may be None."""
        pos = [Monomial(c, e) for c, e in self.terms if c > 0]
        neg = [Monomial(-c, e) for c, e in self.terms if c < 0]
        return (Posynomial(pos) if pos else None, Posynomial(neg) if neg else None)

    def as_posynomial(self) -> Posynomial:
        pos, neg = self.split()
        if neg is not None or pos is None:
            raise ValueError("signomial has negative terms; not a posynomial")
        return pos

    def value(self, x: np.ndarray) -> float:
        out = 0.0
        for c, exps in self.terms:
            t = c
            for v, e in exps.items():
                t *= x[v] ** e
            out += t
        return out


@dataclass
class VariableRegistry:
    """Name <-> id map with positive box bounds per variable."""

    names: list[str] = field(default_factory=list)
    ids: dict[str, int] = field(default_factory=dict)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)

    def add(self, name: str, lower: float, upper: float) -> Monomial:
        if name in self.ids:
            raise ValueError(f"variable {name!r} already registered")
        if not (0.0 < lower <= upper):
            raise ValueError(f"bounds for {name!r} must satisfy 0 < lower <= upper")
        vid = len(self.names)
        self.names.append(name)
        self.ids[name] = vid
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return Monomial.var(vid)

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name: str) -> Monomial:
        return Monomial.var(self.ids[name])


# ---------------------------------------------------------------------------
# Condensation and the approximation toolbox
# ---------------------------------------------------------------------------

def condense(g: Posynomial, z: np.ndarray) -> Monomial:
    """Best monomial lower bound of posynomial ``g``, tight at ``z``.

    Returns ``ghat(y) = prod_i (u_i(y) / w_i) ** w_i`` with weights
    ``w_i = u_i(z) / g(z)``.  By the weighted AM-GM inequality
    ``ghat(y) <= g(y)`` for every ``y > 0`` and ``ghat(z) = g(z)``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0.0):
        raise ValueError("condensation point must be strictly positive")
    g = Posynomial.from_obj(g)
    if g.is_monomial():
        return g.as_monomial()
    logz = np.log(z)
    logs = np.array([m.log_value(logz) for m in g.monomials])
    mx = logs.max()
    e = np.exp(logs - mx)
    w = e / e.sum()                      # w_i = u_i(z) / g(z)
    log_gz = mx + math.log(e.sum())
    # log ghat(y) = sum_i w_i * (log u_i(y) - log w_i)
    coef_log = 0.0
    exps: dict[int, float] = {}
    for wi, m in zip(w, g.monomials):
        if wi == 0.0:
            continue
        coef_log += wi * (math.log(m.coef) - math.log(wi))
        for v, ee in m.exps.items():
            exps[v] = exps.get(v, 0.0) + wi * ee
    del log_gz
    return Monomial(math.exp(coef_log), exps)


def exp_power_approx(x: float, C: int) -> float:
    """Truncated-series power approximation of exp(x).

    Evaluates ``(1 + x/C + x**2 / (2 C**2)) ** C``, which underestimates
    exp(x) and tightens as C grows.
    """
    return (1.0 + x / C + x * x / (2.0 * C * C)) ** C


def maclaurin_exp_posynomial(x: Monomial, C: int) -> tuple[Posynomial, int]:
    """Posynomial base and power such that base**C approximates exp(x).

    ``x`` must be a monomial in the program variables; the returned base is
    ``1 + x/C + (x/(sqrt(2) C))**2`` and the power is ``C``.
    """
    base = Posynomial([Monomial(1.0), x / C, (x / (math.sqrt(2.0) * C)) ** 2.0])
    return base, C


def softmin(values, p: float) -> float:
    """Smooth minimum ``(sum a_i**-p)**(-1/p)``, computed in log space."""
    a = np.asarray(values, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("softmin requires strictly positive inputs")
    logs = -p * np.log(a)
    mx = logs.max()
    return float(math.exp(-(mx + math.log(np.exp(logs - mx).sum())) / p))


def softmax(values, p: float) -> float:
    """Smooth maximum ``(sum a_i**p)**(1/p)``, computed in log space."""
    a = np.asarray(values, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("softmax requires strictly positive inputs")
    logs = p * np.log(a)
    mx = logs.max()
    return float(math.exp((mx + math.log(np.exp(logs - mx).sum())) / p))
