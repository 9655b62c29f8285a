"""Convergence-bound evaluation and sufficient-condition checking.

The bound on the cumulative average squared gradient norm decomposes into
seven terms: (a) consecutive loss gains, (b) model drift over idle time,
(c) mini-batch sampling noise, (d) cross-user heterogeneity, (e) sampling
noise through the aggregation weights, (f) partial-recruitment sampling
noise, and (g) partial-recruitment heterogeneity.  ``theorem1_bound``
evaluates them from simulated round statistics; ``corollary1_bound`` is
the closed form under the sufficient conditions; ``phi_bound`` is the
optimizer-facing surrogate (initial loss replaces the realized loss
gains), available both numerically and as a posynomial.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gp.algebra import Monomial, Posynomial, VariableRegistry

__all__ = [
    "BoundParams",
    "RoundStats",
    "StepSizeViolation",
    "BoundReport",
    "eta_ceiling",
    "theorem1_bound",
    "ConditionVerdict",
    "check_sufficient_conditions",
    "CorollaryConstants",
    "corollary1_bound",
    "phi_value",
    "phi_posynomial",
    "max_unrecruited",
]


@dataclass
class BoundParams:
    """Loss-landscape and schedule constants shared by all rounds."""

    smoothness: float            # beta
    theta: float                 # max local dissimilarity
    x1: float = 1.0
    x2: float = 1e-3
    zeta: float = 0.5
    zeta_hat: float = 0.125
    zeta_max: float = 0.5
    alpha_step: float = 0.1
    vartheta: float = 0.9
    varpi: float = 0.9
    sigma_max: float = 1.0
    ell_hat_min: float = 1.0     # bounds on the per-round SGD-count sum
    ell_hat_max: float = 1.0


@dataclass
class RoundStats:
    """Everything one round contributes to the bound."""

    sizes: np.ndarray            # (U,) dataset sizes at the training snapshot
    batch_sizes: np.ndarray      # (U,)
    sigma: np.ndarray            # (U,) sample spread at the snapshot
    sgd_iters: np.ndarray        # (U,)
    recruited: np.ndarray        # (U,) lambda-hat
    drift: np.ndarray            # (U,) drift bounds
    duration: float              # T^(k) - T^(k-1)
    tau_compute: np.ndarray      # (U,)
    eta: float
    boost: float
    loss_prev: float = float("nan")   # L^(k-1)(w^k)
    loss_next: float = float("nan")   # L^(k)(w^(k+1))

    def totals(self):
        total = float(self.sizes.sum())
        sel = float((self.recruited * self.sizes).sum())
        mn = float(self.sizes.min()) if self.sizes.size else 0.0
        return total, sel, mn


class StepSizeViolation(RuntimeError):
    def __init__(self, eta, ceiling, which):
        super().__init__(f"step size {eta:.3e} exceeds the {which} ceiling "
                         f"{ceiling:.3e}")
        self.ceiling = ceiling
        self.which = which


def eta_ceiling(params: BoundParams, stats: RoundStats,
                use_zeta_hat: bool = False) -> tuple[float, str]:
    """Admissible step-size ceiling; the recruitment-gap form by default.

    The general form uses ``zeta - 48 x1 R`` with R the recruitment-gap
    ratio; under the sufficient conditions the gap term is replaced by
    ``zeta_hat``.  Returns (ceiling, name-of-active-form).
    """
    beta = params.smoothness
    ell_max = float(stats.sgd_iters.max(initial=1.0))
    delta = ell_max * (ell_max - 1.0) * (2.0 * params.x1 + params.zeta)
    if use_zeta_hat:
        num = params.zeta - params.zeta_hat
        name = "sufficient-conditions (zeta-hat)"
    else:
        total, sel, mn = stats.totals()
        gap_ratio = ((total - sel) ** 2 / (total * mn)) if total > 0 and mn > 0 else 0.0
        num = params.zeta - 48.0 * params.x1 * gap_ratio
        name = "general (recruitment-gap)"
    if num <= 0.0:
        return 0.0, name
    root = math.sqrt(num / delta) / (2.0 * beta) if delta > 0 else math.inf
    return min(root, 1.0 / (2.0 * beta)), name


@dataclass
class BoundReport:
    value: float
    terms: dict[str, float]
    per_round: list[dict]
    eta_schedule: list[float]
    constants: dict
    conditions: dict = field(default_factory=dict)
    loss_term_surrogate: bool = False

    def to_json(self) -> str:
        doc = {
            "schema": "bound-report/1",
            "value": self.value,
            "terms": self.terms,
            "per_round": self.per_round,
            "eta_schedule": self.eta_schedule,
            "constants": self.constants,
            "conditions": self.conditions,
            "loss_term_surrogate": self.loss_term_surrogate,
        }
        return json.dumps(doc, sort_keys=True, default=float)


def _round_terms(params: BoundParams, s: RoundStats) -> dict[str, float]:
    beta, theta = params.smoothness, params.theta
    eta = s.eta
    total, sel, mn = s.totals()
    ell_max = float(s.sgd_iters.max(initial=1.0))
    denom_max = 1.0 - 4.0 * eta ** 2 * beta ** 2 * ell_max * (ell_max - 1.0)
    import numpy as _np
    sz, bs, sg, it, rec = s.sizes, s.batch_sizes, s.sigma, s.sgd_iters, s.recruited

    with _np.errstate(divide="ignore", invalid="ignore"):
        noise = _np.where(sz > 0,
                          (1.0 - bs / _np.maximum(sz, 1e-300))
                          * (sz - 1.0) * sg ** 2
                          / (_np.maximum(sz, 1e-300) * _np.maximum(bs, 1e-300)),
                          0.0)
        den_u = 1.0 - 4.0 * eta ** 2 * beta ** 2 * it * (it - 1.0)
        c_sum = _np.where(sz > 0, sz / max(total, 1e-300)
                          * (it - 1.0) / den_u * noise, 0.0).sum()
        e_sum = _np.where((sel > 0) & (it > 0),
                          (rec * sz) ** 2
                          / (max(sel, 1e-300) ** 2 * _np.maximum(it, 1e-300))
                          * noise, 0.0).sum()
        f_sum = _np.where(sz > 0, (it - 1.0) / den_u * noise, 0.0).sum()

    gap = ((total - sel) / total) ** 2 if total > 0 else 0.0
    drift_total = float((s.drift * (s.duration - s.recruited * s.tau_compute)).sum())
    a = ((s.loss_prev - s.loss_next)
         / (eta * s.boost * (1.0 - params.zeta))
         if math.isfinite(s.loss_prev) and math.isfinite(s.loss_next)
         else float("nan"))
    return {
        "a": a,
        "b": drift_total / (eta * s.boost * (1.0 - params.zeta)),
        "c": beta ** 2 * theta ** 2 * eta ** 2 * float(c_sum),
        "d": (params.x2 * eta ** 2 * beta ** 2 * ell_max * (ell_max - 1.0)
              / denom_max),
        "e": theta ** 2 * beta * eta * s.boost / 2.0 * float(e_sum),
        "f": gap * theta ** 2 * beta ** 2 * eta ** 2 * float(f_sum),
        "g": (gap * (total / mn) * params.x2 / denom_max
              if mn > 0 else 0.0),
    }


def theorem1_bound(rounds: list[RoundStats], params: BoundParams,
                   loss_surrogate: float | None = None) -> BoundReport:
    """Evaluate the bound term by term from per-round statistics.

    Raises :class:`StepSizeViolation` if any round's step size exceeds the
    admissible ceiling.  ``loss_surrogate``, when given, replaces missing
    realized loss gains with the initial-loss surrogate used in
    bound-only mode (flagged in the report).
    """
    K = len(rounds)
    per_round = []
    surrogate_used = False
    for s in rounds:
        ceiling, which = eta_ceiling(params, s)
        if s.eta > ceiling * (1.0 + 1e-12):
            raise StepSizeViolation(s.eta, ceiling, which)
        per_round.append(_round_terms(params, s))
    agg = {t: 0.0 for t in "abcdefg"}
    for i, (s, terms) in enumerate(zip(rounds, per_round)):
        a = terms["a"]
        if math.isnan(a):
            if loss_surrogate is None:
                raise ValueError(f"round {i}: loss values missing and no "
                                 "surrogate provided")
            surrogate_used = True
            a = loss_surrogate / (s.eta * s.boost * (1.0 - params.zeta))
            terms["a"] = a
        one_minus = 1.0 - params.zeta
        agg["a"] += 4.0 / K * a
        agg["b"] += 4.0 / K * terms["b"]
        agg["c"] += 8.0 / K * terms["c"] / one_minus
        agg["d"] += 8.0 / K * terms["d"] / one_minus
        agg["e"] += 8.0 / K * terms["e"] / one_minus
        agg["f"] += 8.0 / K * 24.0 * terms["f"] / one_minus
        agg["g"] += 8.0 / K * 6.0 * terms["g"] / one_minus
    value = sum(agg.values())
    return BoundReport(
        value=value,
        terms=agg,
        per_round=[{k: float(v) for k, v in t.items()} for t in per_round],
        eta_schedule=[s.eta for s in rounds],
        constants={"beta": params.smoothness, "theta": params.theta,
                   "x1": params.x1, "x2": params.x2, "zeta": params.zeta,
                   "zeta_hat": params.zeta_hat, "zeta_max": params.zeta_max,
                   "alpha": params.alpha_step, "vartheta": params.vartheta,
                   "varpi": params.varpi, "sigma_max": params.sigma_max},
        loss_term_surrogate=surrogate_used,
    )


# ---------------------------------------------------------------------------
# sufficient conditions
# ---------------------------------------------------------------------------

@dataclass
class ConditionVerdict:
    name: str
    passed: bool
    slack: float                 # rhs - lhs (negative = violated)
    detail: str = ""


def check_sufficient_conditions(k: int, stats: RoundStats,
                                params: BoundParams,
                                n_users: int, total_rounds: int,
                                ell_bounds: tuple[float, float] | None = None
                                ) -> list[ConditionVerdict]:
    """Evaluate the four per-round sufficient conditions with slack.

    ``k`` is zero-based; the geometric factors use ``vartheta**k`` and
    ``varpi**k``.  ``ell_bounds`` overrides the (min, max) bounds on the
    per-round SGD-count sum.
    """
    beta = params.smoothness
    total, sel, mn = stats.totals()
    ell_max = float(stats.sgd_iters.max(initial=1.0))
    ell_sum = float(stats.sgd_iters.sum())
    drift_sum = float(stats.drift.sum())
    out = []

    # C^(L): round duration against the drift budget
    if drift_sum <= 0.0:
        out.append(ConditionVerdict("latency", True, math.inf,
                                    "zero total drift: unconstrained"))
    else:
        rhs = (float((stats.drift * stats.recruited * stats.tau_compute).sum())
               / drift_sum
               + stats.eta * stats.boost * (1.0 - params.zeta)
               * params.vartheta ** k / (4.0 * drift_sum))
        out.append(ConditionVerdict("latency", stats.duration <= rhs,
                                    rhs - stats.duration))

    # C^(Upsilon): recruitment-gap ceiling
    denom_max = 1.0 - 4.0 * stats.eta ** 2 * beta ** 2 * ell_max * (ell_max - 1.0)
    n_k = params.varpi ** k * (1.0 - params.zeta) * mn * denom_max
    ceiling = total * min(params.zeta_hat * mn / (48.0 * params.x1),
                          n_k / (48.0 * params.x2))
    gap_sq = (total - sel) ** 2
    out.append(ConditionVerdict("recruitment", gap_sq < ceiling,
                                ceiling - gap_sq))

    # C^(eta): step-size rule and ceilings
    ell_hat_min, ell_hat_max = (ell_bounds if ell_bounds
                                else (params.ell_hat_min, params.ell_hat_max))
    target = (params.alpha_step
              / math.sqrt(total_rounds * ell_sum / n_users)
              if ell_sum > 0 else math.inf)
    ceiling, which = eta_ceiling(params, stats, use_zeta_hat=True)
    alpha_cap = (math.sqrt(ell_hat_min * total_rounds
                           / (4.0 * n_users * beta ** 2
                              * ell_max * (ell_max - 1.0)))
                 if ell_max > 1.0 else math.inf)
    ok = (abs(stats.eta - target) <= 1e-9 * max(1.0, target)
          and stats.eta <= ceiling * (1.0 + 1e-12)
          and params.alpha_step < alpha_cap)
    out.append(ConditionVerdict(
        "step_size", ok, min(ceiling - stats.eta, alpha_cap - params.alpha_step),
        detail=f"eta target {target:.3e}; active ceiling: {which}"))

    # C^(sigma): gradient sampling noise
    with np.errstate(divide="ignore", invalid="ignore"):
        noise = np.where(
            (stats.sizes > 0) & (stats.batch_sizes > 0),
            (1.0 - stats.batch_sizes / np.maximum(stats.sizes, 1e-300))
            * (stats.sizes - 1.0) * stats.sigma ** 2
            / (np.maximum(stats.sizes, 1e-300)
               * np.maximum(stats.batch_sizes, 1e-300)),
            0.0)
    worst = float(noise.max(initial=0.0))
    out.append(ConditionVerdict("sampling_noise", worst <= params.sigma_max,
                                params.sigma_max - worst))
    return out


@dataclass
class CorollaryConstants:
    beta: float
    theta: float
    x2: float
    zeta_max: float
    alpha: float
    n_users: float
    sigma_max: float
    loss_gap: float              # L^(-1)(w0) - L*
    boost: float
    ell_min: float
    ell_max: float
    ell_hat_min: float
    ell_hat_max: float
    ups_max: float               # bound on min-size / total-size ratios
    vartheta: float = 0.9
    varpi: float = 0.9


def corollary1_bound(K: int, c: CorollaryConstants) -> float:
    """Closed-form bound under the sufficient conditions; decays as
    O(1/sqrt(K)) with O(1/K) corrections."""
    one_minus = 1.0 - c.zeta_max
    geo_t = (c.vartheta ** K - 1.0) / (c.vartheta - 1.0)
    geo_p = (c.varpi ** K - 1.0) / (c.varpi - 1.0)
    denom = (c.ell_hat_min * K
             - 4.0 * c.alpha ** 2 * c.n_users * c.beta ** 2
             * c.ell_max * (c.ell_max - 1.0))
    if denom <= 0.0:
        raise ValueError("K too small for the chosen alpha: the shared "
                         "denominator is non-positive")
    a = (4.0 * math.sqrt(c.ell_hat_max) * c.loss_gap
         / (c.boost * one_minus * c.alpha * math.sqrt(K * c.n_users)))
    b = (4.0 * c.beta * c.alpha * math.sqrt(c.n_users) * c.boost
         * c.sigma_max * c.theta ** 2
         / (one_minus * math.sqrt(c.ell_hat_min * K) * c.ell_min))
    t3 = geo_t / K
    t4 = geo_p / K
    e = (8.0 * c.beta ** 2 * c.theta ** 2 * c.alpha ** 2 * c.n_users
         * (c.ell_max - 1.0) * c.sigma_max / (one_minus * denom))
    f = (8.0 * c.x2 * c.alpha ** 2 * c.n_users * c.beta ** 2
         * c.ell_max * (c.ell_max - 1.0) / (one_minus * denom))
    g = (4.0 * c.ups_max * c.theta ** 2 * c.beta ** 2 * c.alpha ** 2
         * c.n_users ** 2 * (c.ell_max - 1.0) * c.sigma_max
         * (c.varpi ** K - 1.0) / (c.x2 * c.ell_max * K * (c.varpi - 1.0)))
    return a + b + t3 + t4 + e + f + g


# ---------------------------------------------------------------------------
# the optimizer-facing surrogate
# ---------------------------------------------------------------------------

def phi_value(params: BoundParams, initial_loss: float, K: int,
              n_users: int, rounds: list[dict]) -> float:
    """Numeric surrogate bound.

    Each round dict carries: eta, boost, ell (U,), varsigma_bar (U,)
    [= 1/varsigma - 1], sigma_cap (U,), sizes (U,), recruited (U,),
    total, selected, minimum, drift (U,), tau_hat (U,)
    [= duration - recruited * tau_compute], ell_max, ell_bar_max
    [= 1 - 4 eta^2 beta^2 ell_max^2].
    """
    beta, theta = params.smoothness, params.theta
    one_minus = 1.0 - params.zeta_max
    val = (4.0 * math.sqrt(params.ell_hat_max) * initial_loss
           / (rounds[0]["boost"] * one_minus * params.alpha_step
              * math.sqrt(K * n_users)))
    for r in rounds:
        eta, boost = r["eta"], r["boost"]
        val += (4.0 / K) * float((r["drift"] * r["tau_hat"]).sum()) \
            / (eta * boost * one_minus)
        body = 0.0
        body += beta ** 2 * theta ** 2 * eta ** 2 * float(
            (r["ell"] * r["varsigma_bar"] * r["sigma_cap"]
             / (r["ell_bar_max"] * r["total"] * r["sizes"])).sum())
        body += (params.x2 * eta ** 2 * beta ** 2 * r["ell_max"] ** 2
                 / r["ell_bar_max"])
        body += theta ** 2 * beta * eta * boost / 2.0 * float(
            (r["recruited"] ** 2 * r["varsigma_bar"] * r["sigma_cap"]
             / (r["selected"] ** 2 * r["ell"])).sum())
        gap = r["total"] - r["selected"]
        body += 24.0 * (gap / r["total"]) ** 2 * theta ** 2 * beta ** 2 \
            * eta ** 2 * float((r["ell"] * r["varsigma_bar"] * r["sigma_cap"]
                                / (r["ell_bar_max"] * r["sizes"] ** 2)).sum())
        body += 6.0 * gap ** 2 * params.x2 \
            / (r["total"] * r["minimum"] * r["ell_bar_max"])
        val += (8.0 / (K * one_minus)) * body
    return val


def phi_posynomial(params: BoundParams, initial_loss: float, K: int,
                   n_users: int, reg: VariableRegistry,
                   round_vars: list[dict], drift: np.ndarray,
                   sigma_cap: np.ndarray) -> Posynomial:
    """The surrogate as a posynomial over already-registered variables.

    Each dict in ``round_vars`` maps names to :class:`Monomial` variables:
    eta, boost, inv_boost, ell[u], varsigma_bar[u], size[u], recruited[u],
    total, inv_total, inv_selected, inv_minimum, gap, inv_ell_bar, ell_max,
    tau_hat[u], inv_ell[u], inv_size[u].  Inverses are separate symbols so
    the expression stays a genuine posynomial; the defining equalities live
    in the encoder.
    """
    beta, theta = params.smoothness, params.theta
    one_minus = 1.0 - params.zeta_max
    r0 = round_vars[0]
    terms = [Monomial(4.0 * math.sqrt(params.ell_hat_max) * initial_loss
                      / (one_minus * params.alpha_step
                         * math.sqrt(K * n_users))) * r0["inv_boost"]]
    for r in round_vars:
        inv_eta_b = r["inv_eta"] * r["inv_boost"]
        for u in range(n_users):
            if drift[u] > 0:
                terms.append((4.0 / (K * one_minus)) * drift[u]
                             * r["tau_hat"][u] * inv_eta_b)
        c8 = 8.0 / (K * one_minus)
        for u in range(n_users):
            terms.append(c8 * beta ** 2 * theta ** 2 * sigma_cap[u]
                         * r["eta"] ** 2.0 * r["ell"][u] * r["varsigma_bar"][u]
                         * r["inv_ell_bar"] * r["inv_total"] * r["inv_size"][u])
            terms.append(c8 * theta ** 2 * beta / 2.0 * sigma_cap[u]
                         * r["eta"] * r["boost"] * r["recruited"][u] ** 2.0
                         * r["varsigma_bar"][u] * r["inv_selected"] ** 2.0
                         * r["inv_ell"][u])
            terms.append(c8 * 24.0 * theta ** 2 * beta ** 2 * sigma_cap[u]
                         * r["gap"] ** 2.0 * r["inv_total"] ** 2.0
                         * r["eta"] ** 2.0 * r["ell"][u] * r["varsigma_bar"][u]
                         * r["inv_ell_bar"] * r["inv_size"][u] ** 2.0)
        terms.append(c8 * params.x2 * beta ** 2 * r["eta"] ** 2.0
                     * r["ell_max"] ** 2.0 * r["inv_ell_bar"])
        terms.append(c8 * 6.0 * params.x2 * r["gap"] ** 2.0 * r["inv_total"]
                     * r["inv_minimum"] * r["inv_ell_bar"])
    return Posynomial(terms)


def max_unrecruited(sizes: np.ndarray, params: BoundParams, eta: float,
                    ell_max: float, k: int = 0) -> int:
    """Largest number of users that may stay unrecruited under the
    recruitment-gap condition, leaving out the smallest datasets first."""
    sizes = np.sort(np.asarray(sizes, dtype=float))
    total = float(sizes.sum())
    mn = float(sizes.min()) if sizes.size else 0.0
    denom_max = 1.0 - 4.0 * eta ** 2 * params.smoothness ** 2 \
        * ell_max * (ell_max - 1.0)
    n_k = params.varpi ** k * (1.0 - params.zeta) * mn * denom_max
    ceiling = total * min(params.zeta_hat * mn / (48.0 * params.x1),
                          n_k / (48.0 * params.x2))
    count, gap = 0, 0.0
    for s in sizes:
        if (gap + s) ** 2 < ceiling:
            gap += s
            count += 1
        else:
            break
    return count
