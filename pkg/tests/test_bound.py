import math

import numpy as np
import pytest

from fedslice.bound import (BoundParams, CorollaryConstants, RoundStats,
                            StepSizeViolation, check_sufficient_conditions,
                            corollary1_bound, eta_ceiling, max_unrecruited,
                            phi_posynomial, phi_value, theorem1_bound)
from fedslice.gp.algebra import VariableRegistry


def _params(**over):
    base = dict(smoothness=1.0, theta=3.0, x1=1.0, x2=1e-3, zeta=0.5,
                zeta_hat=0.125, zeta_max=0.5, alpha_step=0.1,
                vartheta=0.9, varpi=0.9, sigma_max=1.0,
                ell_hat_min=4.0, ell_hat_max=16.0)
    base.update(over)
    return BoundParams(**base)


def _stats(u=4, ell=2.0, batch_frac=0.5, recruited=None, eta=5e-3,
           sizes=None):
    sizes = np.full(u, 1000.0) if sizes is None else np.asarray(sizes, float)
    rec = np.ones(u) if recruited is None else np.asarray(recruited, float)
    return RoundStats(
        sizes=sizes,
        batch_sizes=np.ceil(batch_frac * sizes),
        sigma=np.full(u, 0.5),
        sgd_iters=np.full(u, ell),
        recruited=rec,
        drift=np.full(u, 1e-6),
        duration=1.0,
        tau_compute=np.full(u, 0.01),
        eta=eta,
        boost=1.0,
        loss_prev=2.0,
        loss_next=1.5,
    )


def test_full_batch_zeroes_sampling_terms():
    rep = theorem1_bound([_stats(batch_frac=1.0)], _params())
    assert rep.terms["c"] == 0.0
    assert rep.terms["e"] == 0.0
    assert rep.terms["f"] == 0.0
    assert rep.terms["d"] > 0.0          # heterogeneity survives


def test_full_participation_zeroes_recruitment_terms():
    rep = theorem1_bound([_stats(recruited=np.ones(4))], _params())
    assert rep.terms["f"] == 0.0
    assert rep.terms["g"] == 0.0
    assert rep.terms["c"] > 0.0


def test_single_iteration_zeroes_multistep_terms():
    # keep the recruitment gap small enough for the step-size ceiling
    rep = theorem1_bound([_stats(ell=1.0, recruited=np.array([1, 1, 1, 0.0]),
                                 sizes=np.array([1e3, 1e3, 1e3, 10.0]))],
                         _params())
    assert rep.terms["c"] == 0.0
    assert rep.terms["d"] == 0.0
    assert rep.terms["f"] == 0.0
    assert rep.terms["g"] > 0.0          # partial recruitment survives


def test_eta_ceiling_violation_names_active_form():
    s = _stats(eta=10.0)
    with pytest.raises(StepSizeViolation) as ei:
        theorem1_bound([s], _params())
    assert "recruitment-gap" in str(ei.value)
    ceiling, which = eta_ceiling(_params(), s, use_zeta_hat=True)
    assert "zeta-hat" in which
    assert 0 < ceiling <= 0.5


def test_bound_nonnegative_and_monotone_in_batch_fraction():
    prev = None
    for frac in (0.2, 0.5, 0.9, 1.0):
        rep = theorem1_bound([_stats(batch_frac=frac)], _params())
        assert rep.value >= 0.0
        if prev is not None:
            assert rep.value <= prev + 1e-12
        prev = rep.value


def test_loss_surrogate_mode_flagged():
    s = _stats()
    s.loss_prev = float("nan")
    s.loss_next = float("nan")
    with pytest.raises(ValueError):
        theorem1_bound([s], _params())
    rep = theorem1_bound([s], _params(), loss_surrogate=1.0)
    assert rep.loss_term_surrogate


def _consts(**over):
    base = dict(beta=1.0, theta=1.0, x2=1e-3, zeta_max=0.5, alpha=0.1,
                n_users=8.0, sigma_max=0.25, loss_gap=1.0, boost=1.0,
                ell_min=1.0, ell_max=2.0, ell_hat_min=8.0, ell_hat_max=16.0,
                ups_max=0.25, vartheta=0.9, varpi=0.9)
    base.update(over)
    return CorollaryConstants(**base)


def test_corollary_decreases_in_rounds_and_limits():
    c = _consts()
    vals = [corollary1_bound(K, c) for K in (16, 64, 256, 1024)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert corollary1_bound(10 ** 9, c) < 1e-2
    assert corollary1_bound(10 ** 9, c) < corollary1_bound(10 ** 7, c)


def test_corollary_loglog_slope_is_half():
    # heterogeneity large enough that the 1/sqrt(K) terms dominate the
    # window (the last closed-form term carries a 1/x2 factor)
    c = _consts(x2=0.1)
    ks = np.array([16, 64, 256, 1024], dtype=float)
    vals = np.array([corollary1_bound(int(k), c) for k in ks])
    slope = np.polyfit(np.log(ks), np.log(vals), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_corollary_geometric_term_grows_toward_one():
    lo = corollary1_bound(64, _consts(vartheta=0.45))
    hi = corollary1_bound(64, _consts(vartheta=0.9))
    assert hi > lo


def test_corollary_matches_term_by_term_reference():
    """Independent re-evaluation of each closed-form term."""
    c = _consts()
    K = 100
    om = 1.0 - c.zeta_max
    denom = c.ell_hat_min * K - 4 * c.alpha ** 2 * c.n_users * c.beta ** 2 \
        * c.ell_max * (c.ell_max - 1)
    ref = 0.0
    ref += 4 * math.sqrt(c.ell_hat_max) * c.loss_gap \
        / (c.boost * om * c.alpha * math.sqrt(K * c.n_users))
    ref += 4 * c.beta * c.alpha * math.sqrt(c.n_users) * c.boost \
        * c.sigma_max * c.theta ** 2 / (om * math.sqrt(c.ell_hat_min * K)
                                        * c.ell_min)
    ref += (c.vartheta ** K - 1) / (K * (c.vartheta - 1))
    ref += (c.varpi ** K - 1) / (K * (c.varpi - 1))
    ref += 8 * c.beta ** 2 * c.theta ** 2 * c.alpha ** 2 * c.n_users \
        * (c.ell_max - 1) * c.sigma_max / (om * denom)
    ref += 8 * c.x2 * c.alpha ** 2 * c.n_users * c.beta ** 2 * c.ell_max \
        * (c.ell_max - 1) / (om * denom)
    ref += 4 * c.ups_max * c.theta ** 2 * c.beta ** 2 * c.alpha ** 2 \
        * c.n_users ** 2 * (c.ell_max - 1) * c.sigma_max \
        * (c.varpi ** K - 1) / (c.x2 * c.ell_max * K * (c.varpi - 1))
    assert corollary1_bound(K, c) == pytest.approx(ref, rel=1e-12)


def test_corollary_rejects_too_small_k():
    with pytest.raises(ValueError):
        corollary1_bound(1, _consts(alpha=10.0))


def test_sufficient_conditions_verdicts():
    params = _params()
    s = _stats(eta=params.alpha_step / math.sqrt(100 * 8.0 / 4))
    out = check_sufficient_conditions(0, s, params, n_users=4,
                                      total_rounds=100,
                                      ell_bounds=(4.0, 16.0))
    names = [v.name for v in out]
    assert names == ["latency", "recruitment", "step_size", "sampling_noise"]
    by = {v.name: v for v in out}
    assert by["recruitment"].passed       # full recruitment: zero gap
    assert by["sampling_noise"].passed
    # zero drift: trivially unconstrained latency
    s0 = _stats()
    s0.drift = np.zeros(4)
    out0 = check_sufficient_conditions(0, s0, params, 4, 100)
    assert out0[0].passed and math.isinf(out0[0].slack)
    # recruitment gap beyond the ceiling fails with negative slack
    sbad = _stats(recruited=np.array([1.0, 0, 0, 0]))
    outb = check_sufficient_conditions(0, sbad, params, 4, 100)
    byb = {v.name: v for v in outb}
    assert not byb["recruitment"].passed
    assert byb["recruitment"].slack < 0


def test_phi_zero_sampling_terms_at_full_batch():
    params = _params()
    rounds = [dict(eta=5e-3, boost=1.0, ell=np.full(4, 2.0),
                   varsigma_bar=np.zeros(4), sigma_cap=np.full(4, 1.0),
                   sizes=np.full(4, 1000.0), recruited=np.ones(4),
                   total=4000.0, selected=4000.0, minimum=1000.0,
                   drift=np.zeros(4), tau_hat=np.full(4, 1.0),
                   ell_max=2.0, ell_bar_max=0.9)]
    v_full = phi_value(params, 1.0, 10, 4, rounds)
    # only the initial-loss and heterogeneity terms survive
    rounds2 = [dict(rounds[0], varsigma_bar=np.full(4, 1.0))]
    assert phi_value(params, 1.0, 10, 4, rounds2) > v_full


def test_phi_initial_loss_scales_as_inverse_sqrt_rounds():
    params = _params()
    def head(K):
        return 4.0 * math.sqrt(params.ell_hat_max) * 1.0 / (
            1.0 * (1.0 - params.zeta_max) * params.alpha_step
            * math.sqrt(K * 4))
    assert head(40) == pytest.approx(head(10) / 2.0, rel=1e-12)
    rounds = [dict(eta=5e-3, boost=1.0, ell=np.full(4, 2.0),
                   varsigma_bar=np.zeros(4), sigma_cap=np.zeros(4),
                   sizes=np.full(4, 1000.0), recruited=np.ones(4),
                   total=4000.0, selected=4000.0, minimum=1000.0,
                   drift=np.zeros(4), tau_hat=np.full(4, 1.0),
                   ell_max=2.0, ell_bar_max=0.9)]
    # with heterogeneity off, only the initial-loss term survives and the
    # whole value follows the 1/sqrt(K) scaling
    params0 = _params(x2=0.0)
    v1 = phi_value(params0, 1.0, 10, 4, rounds)
    v4 = phi_value(params0, 1.0, 40, 4, rounds)
    assert v4 == pytest.approx(v1 / 2.0, rel=1e-9)


def test_phi_numeric_equals_symbolic_posynomial():
    """Dual-path check: the posynomial evaluates to the numeric value."""
    params = _params()
    U = 3
    reg = VariableRegistry()
    names = {}
    rng = np.random.default_rng(21)
    point = {}

    def mk(name, val):
        m = reg.add(name, 1e-12, 1e12)
        names[name] = m
        point[name] = val
        return m

    eta = mk("eta", 5e-3)
    boost = mk("boost", 1.3)
    ell = [mk(f"ell{u}", float(rng.uniform(1, 4))) for u in range(U)]
    sigb = [mk(f"sigb{u}", float(rng.uniform(0.1, 2.0))) for u in range(U)]
    size = [mk(f"size{u}", float(rng.uniform(500, 1500))) for u in range(U)]
    rec = [mk(f"rec{u}", float(rng.uniform(0.5, 1.0))) for u in range(U)]
    total = mk("total", 3100.0)
    sel = mk("sel", 2500.0)
    mn = mk("mn", 600.0)
    gap = mk("gap", 600.0)
    elb = mk("elb", 0.8)
    elmax = mk("elmax", 3.5)
    tau_hat = [mk(f"th{u}", float(rng.uniform(0.5, 2.0))) for u in range(U)]
    drift = np.array([1e-6, 2e-6, 0.0])
    sigma_cap = np.full(U, 0.7)

    round_vars = [{
        "eta": eta, "inv_eta": eta ** -1.0, "boost": boost,
        "inv_boost": boost ** -1.0, "ell": ell,
        "inv_ell": [e ** -1.0 for e in ell], "varsigma_bar": sigb,
        "size": size, "inv_size": [s ** -1.0 for s in size],
        "recruited": rec, "total": total, "inv_total": total ** -1.0,
        "inv_selected": sel ** -1.0, "inv_minimum": mn ** -1.0,
        "gap": gap, "inv_ell_bar": elb ** -1.0, "ell_max": elmax,
        "tau_hat": tau_hat,
    }]
    posy = phi_posynomial(params, 1.0, 10, U, reg, round_vars, drift,
                          sigma_cap)
    x = np.array([point[n] for n in reg.names])
    sym = posy.value(x)

    rounds = [dict(eta=point["eta"], boost=point["boost"],
                   ell=np.array([point[f"ell{u}"] for u in range(U)]),
                   varsigma_bar=np.array([point[f"sigb{u}"] for u in range(U)]),
                   sigma_cap=sigma_cap,
                   sizes=np.array([point[f"size{u}"] for u in range(U)]),
                   recruited=np.array([point[f"rec{u}"] for u in range(U)]),
                   total=point["total"], selected=point["sel"],
                   minimum=point["mn"],
                   drift=drift,
                   tau_hat=np.array([point[f"th{u}"] for u in range(U)]),
                   ell_max=point["elmax"], ell_bar_max=point["elb"])]
    num = phi_value(params, 1.0, 10, U, rounds)
    # the numeric path uses (total - selected) where the symbolic one uses
    # the gap variable; align them for the comparison
    assert point["gap"] == point["total"] - point["sel"]
    assert sym == pytest.approx(num, rel=1e-12)


def test_max_unrecruited_decreases_in_x1():
    # the allowance scales like sqrt(zeta_hat N / (48 x1)); a population in
    # the thousands makes the integer counts move
    sizes = np.full(2000, 50.0)
    counts = [max_unrecruited(sizes, _params(zeta=0.97, zeta_hat=0.9, x1=x1),
                              eta=1e-3, ell_max=2.0)
              for x1 in (1.0, 4.0, 16.0)]
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[0] > counts[2]
    # more users raise the allowance
    big = max_unrecruited(np.full(8000, 50.0),
                          _params(zeta=0.97, zeta_hat=0.9, x1=1.0),
                          eta=1e-3, ell_max=2.0)
    assert big >= counts[0]
