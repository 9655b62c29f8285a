"""Acceptance suite: one test per criterion, each printing a verdict line.

Budgets are wall-clock ceilings asserted per criterion.  Everything runs
on the primary component alone with pinned tolerances.
"""

import math
import time

import numpy as np
import pytest

from fedslice.bound import (BoundParams, CorollaryConstants, RoundStats,
                            corollary1_bound, max_unrecruited,
                            theorem1_bound)
from fedslice.config import ExperimentConfig
from fedslice.datasets import RoundWindow, dataset_size
from fedslice.gp.algebra import Monomial, Posynomial, VariableRegistry, condense
from fedslice.gp.encode import encode_problem
from fedslice.gp.program import GPProgram
from fedslice.gp.solver import solve_convex
from fedslice.gp.successive import run_successive_gp
from fedslice.latency import cumulative_transfer
from fedslice.learning import (GradientChunk, boost_factor, disperse,
                               make_tasks, aggregate)
from fedslice.network import build_scenario
from fedslice.simulate import simulate
from oracles import fine_step_transfer, rk4_piecewise_dataset


def _verdict(n, name, budget_s, t0):
    elapsed = time.time() - t0
    assert elapsed < budget_s, f"criterion {n} overran: {elapsed:.1f}s"
    print(f"\nACCEPTANCE {n} ({name}): PASS in {elapsed:.1f}s")


def test_acceptance_01_latency_oracle_equivalence():
    """Transfer recursions vs fine-step bit accounting, 50 micro-instances."""
    t0 = time.time()
    rng = np.random.default_rng(2024)
    for trial in range(50):
        n_flus = int(rng.integers(1, 4))
        n_prbs = int(rng.integers(1, 3))
        n_x = int(rng.integers(2, 5))
        spacing = rng.uniform(0.02, 0.15, size=n_x)
        payload = float(rng.uniform(1e4, 8e4))

        # broadcast/dispatch shape: channels = PRBs
        fr = rng.dirichlet(np.ones(n_prbs), size=n_x).T
        rates = rng.uniform(2e5, 4e6, size=(n_prbs, n_x))
        active = rng.uniform(size=n_x) < 0.8
        active[int(rng.integers(n_x))] = True
        res = cumulative_transfer(payload, fr, rates, active, spacing,
                                  require_complete=False)
        busy, delivered, _ = fine_step_transfer(payload, fr, rates, active,
                                                spacing)
        if busy > 1e-4:
            assert abs(res.latency - busy) / busy <= 5e-3, f"trial {trial}"
        assert abs(res.delivered - delivered) / payload <= 5e-3

        # dispersion shape: channels = heads x PRBs, plus waiting times
        n_ch = n_flus * n_prbs
        fr2 = rng.dirichlet(np.ones(n_ch), size=n_x).T
        rates2 = rng.uniform(2e5, 4e6, size=(n_ch, n_x))
        res2 = cumulative_transfer(payload, fr2, rates2, active, spacing,
                                   require_complete=False)
        busy2, delivered2, air2 = fine_step_transfer(payload, fr2, rates2,
                                                     active, spacing)
        if busy2 > 1e-4:
            assert abs(res2.latency - busy2) / busy2 <= 5e-3
        assert abs(res2.delivered - delivered2) / payload <= 5e-3
        # per-head waiting contributions from the two airtime ledgers
        for head in range(n_flus):
            rows = slice(head * n_prbs, (head + 1) * n_prbs)
            mine = res2.airtime[rows].max(axis=0).sum()
            ref = air2[rows].max(axis=0).sum()
            assert abs(mine - ref) <= max(5e-3 * max(ref, 1e-12), 2e-4)
    _verdict(1, "latency oracle equivalence", 30.0, t0)


def test_acceptance_02_dataset_closed_form_vs_rk4():
    t0 = time.time()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        start = float(rng.uniform(0.0, 5.0))
        tau = float(rng.uniform(0.05, 2.0))
        train = float(rng.uniform(0.05, 2.0))
        end = start + tau + train + float(rng.uniform(0.1, 3.0))
        w = RoundWindow(t_start=start, t_end=end, tau_down=tau,
                        train_end=start + tau + train)
        carry = float(rng.uniform(10.0, 2000.0))
        gd, gu = rng.uniform(-5.0, 5.0, size=2)
        t = float(rng.uniform(start, end))
        closed = dataset_size(carry, gd, gu, w, t)
        ref = rk4_piecewise_dataset(carry, gd, gu, start, tau, w.train_end,
                                    end, t)
        assert closed == pytest.approx(ref, rel=1e-6, abs=1e-6)
    _verdict(2, "dataset closed form vs RK4", 10.0, t0)


def test_acceptance_03_amgm_condensation():
    t0 = time.time()
    rng = np.random.default_rng(5)
    n = 5
    for _ in range(1000):
        terms = [Monomial(float(rng.uniform(0.1, 4.0)),
                          {v: float(rng.uniform(-2, 2)) for v in range(n)})
                 for _ in range(int(rng.integers(2, 6)))]
        g = Posynomial(terms)
        z = rng.uniform(0.3, 3.0, size=n)
        y = rng.uniform(0.3, 3.0, size=n)
        ghat = condense(g, z)
        assert ghat.value(z) == pytest.approx(g.value(z), rel=1e-12)
        assert ghat.value(y) <= g.value(y) * (1.0 + 1e-12)
    _verdict(3, "AM-GM condensation soundness", 5.0, t0)


def test_acceptance_04_gp_solver_correctness():
    t0 = time.time()
    reg = VariableRegistry()
    x = reg.add("x", 1e-6, 1e6)
    y = reg.add("y", 1e-6, 1e6)
    prog = GPProgram(reg)
    prog.set_objective((x * y) ** -1.0)
    prog.add_leq(x / 2.0)
    prog.add_leq(y / 3.0)
    st = run_successive_gp(prog, np.array([0.5, 0.5]))
    assert st.x[0] == pytest.approx(2.0, rel=1e-6)
    assert st.x[1] == pytest.approx(3.0, rel=1e-6)
    assert st.objective_trace[-1] == pytest.approx(1.0 / 6.0, rel=1e-6)

    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(5, 21))
        vreg = VariableRegistry()
        for i in range(n):
            vreg.add(f"v{i}", 1e-4, 1e4)
        p = GPProgram(vreg)
        x0 = rng.uniform(0.5, 2.0, size=n)
        p.set_objective(Posynomial(
            [Monomial(float(rng.uniform(0.5, 2.0)),
                      {v: float(rng.uniform(-1.5, 1.5)) for v in range(n)})
             for _ in range(3)]))
        for _c in range(int(rng.integers(3, 9))):
            g = Posynomial(
                [Monomial(float(rng.uniform(0.1, 2.0)),
                          {int(v): float(rng.uniform(-1, 1))
                           for v in rng.choice(n, size=3, replace=False)})
                 for _ in range(int(rng.integers(1, 4)))])
            p.add_leq(g * Monomial(float(rng.uniform(0.4, 0.9)) / g.value(x0)))
        res = solve_convex(p.condense_at(x0).to_convex(), np.log(x0),
                           tol=1e-8)
        assert res.kkt_residual <= 1e-6
        assert p.max_constraint_residual(res.x) <= 1e-8
    _verdict(4, "GP solver correctness", 30.0, t0)


@pytest.fixture(scope="module")
def instance_2x4x2():
    cfg = ExperimentConfig(scenario={
        "seed": 1, "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
        "flus_per_oru": [2, 2], "rounds": 1, "fgtis_per_round": 4,
        "n_licensed_prbs": 2, "n_unlicensed_prbs": 2}, model_dim=100)
    return cfg, build_scenario(cfg.scenario)


def test_acceptance_05_successive_gp_monotone_and_closed(instance_2x4x2):
    t0 = time.time()
    cfg, sc = instance_2x4x2
    enc = encode_problem(sc, cfg)
    st = run_successive_gp(enc.program, enc.x0, criterion=cfg.outer_criterion,
                           max_outer=100, closure_target=1e-3)
    tr = st.objective_trace
    assert st.outer_iterations <= 100
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(tr, tr[1:])), \
        "objective trace increased"
    assert st.max_penalty_deviation <= 1e-3
    assert st.converged
    _verdict(5, "successive-GP monotonicity and penalty closure", 300.0, t0)


def test_acceptance_06_zero_term_identities():
    t0 = time.time()
    params = BoundParams(smoothness=1.0, theta=3.0, x1=1.0, x2=1e-3,
                         zeta=0.5, zeta_hat=0.125, zeta_max=0.5,
                         alpha_step=0.1, sigma_max=1.0)

    def stats(ell, batch_frac, recruited, sizes=None):
        sizes = np.full(4, 1000.0) if sizes is None else sizes
        return RoundStats(sizes=sizes, batch_sizes=np.ceil(batch_frac * sizes),
                          sigma=np.full(4, 0.5), sgd_iters=np.full(4, ell),
                          recruited=recruited, drift=np.full(4, 1e-6),
                          duration=1.0, tau_compute=np.full(4, 0.01),
                          eta=1e-3, boost=1.0, loss_prev=2.0, loss_next=1.5)

    rep = theorem1_bound([stats(2.0, 1.0, np.ones(4))], params)
    assert rep.terms["c"] == 0.0 and rep.terms["e"] == 0.0 \
        and rep.terms["f"] == 0.0
    rep = theorem1_bound([stats(2.0, 0.5, np.ones(4))], params)
    assert rep.terms["f"] == 0.0 and rep.terms["g"] == 0.0
    rep = theorem1_bound([stats(1.0, 0.5, np.array([1, 1, 1, 0.0]),
                                sizes=np.array([1e3, 1e3, 1e3, 10.0]))],
                         params)
    assert rep.terms["c"] == 0.0 and rep.terms["d"] == 0.0 \
        and rep.terms["f"] == 0.0
    _verdict(6, "zero-term identities of the bound", 1.0, t0)


def test_acceptance_07_sqrt_rate_of_closed_form():
    t0 = time.time()
    c = CorollaryConstants(beta=1.0, theta=1.0, x2=0.1, zeta_max=0.5,
                           alpha=0.1, n_users=8.0, sigma_max=0.25,
                           loss_gap=1.0, boost=1.0, ell_min=1.0, ell_max=2.0,
                           ell_hat_min=8.0, ell_hat_max=16.0, ups_max=0.25,
                           vartheta=0.9, varpi=0.9)
    ks = np.array([16.0, 64.0, 256.0, 1024.0])
    vals = np.array([corollary1_bound(int(k), c) for k in ks])
    slope = float(np.polyfit(np.log(ks), np.log(vals), 1)[0])
    assert abs(slope + 0.5) <= 0.1, f"log-log slope {slope}"
    _verdict(7, "O(1/sqrt(K)) closed-form rate", 1.0, t0)


def test_acceptance_08_qualitative_trends(instance_2x4x2):
    t0 = time.time()
    # (a) more scheduling instants cut both latency and energy
    results = {}
    for n_fgti in (5, 11):
        cfg = ExperimentConfig(scenario={
            "seed": 1, "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
            "flus_per_oru": [2, 2], "rounds": 2, "fgtis_per_round": n_fgti},
            model_dim=200)
        res = simulate(cfg, with_training=False)
        results[n_fgti] = (res.total_latency(), res.total_energy())
    assert results[11][0] < results[5][0], "latency did not decrease"
    assert results[11][1] < results[5][1], "energy did not decrease"

    # (b) a 10x heavier energy weight lowers energy, raises latency and
    # the bound surrogate (balanced weights so all three terms bind)
    comp = {}
    for c3 in (1.0, 10.0):
        cfg = ExperimentConfig(scenario={
            "seed": 1, "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
            "flus_per_oru": [2, 2], "rounds": 1, "fgtis_per_round": 4,
            "n_licensed_prbs": 1, "n_unlicensed_prbs": 1}, model_dim=100,
            weight_bound=1e-3, weight_latency=1.0, weight_energy=c3)
        sc = build_scenario(cfg.scenario)
        enc = encode_problem(sc, cfg)
        st = run_successive_gp(enc.program, enc.x0, criterion=1e-4,
                               max_outer=20)
        comp[c3] = {n: enc.component_value(st.x, n)
                    for n in ("phi", "latency", "energy")}
    assert comp[10.0]["energy"] < comp[1.0]["energy"]
    assert comp[10.0]["latency"] > comp[1.0]["latency"]
    assert comp[10.0]["phi"] > comp[1.0]["phi"]

    # (c) heavier cross-user heterogeneity shrinks the unrecruited allowance
    sizes = np.full(2000, 50.0)
    counts = [max_unrecruited(sizes,
                              BoundParams(smoothness=1.0, theta=3.0, x1=x1,
                                          x2=1e-3, zeta=0.97, zeta_hat=0.9,
                                          zeta_max=0.97, alpha_step=0.1,
                                          sigma_max=1.0),
                              eta=1e-3, ell_max=2.0)
              for x1 in (1.0, 4.0, 16.0)]
    assert counts[0] > counts[-1]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    _verdict(8, "qualitative trend reproduction", 300.0, t0)


def test_acceptance_09_partition_invariance():
    t0 = time.time()
    rng = np.random.default_rng(500)
    dim = 128
    cell = np.array([0, 0, 1, 1])
    lam = np.array([1.0, 0.0, 1.0, 0.0])
    lam_bar = np.array([0.0, 1.0, 0.0, 1.0])
    sizes = rng.uniform(30, 90, size=4)
    iters = rng.integers(1, 4, size=4).astype(float)
    grads = {u: rng.normal(size=dim) for u in range(4)}
    boost = boost_factor(sizes, lam + lam_bar, iters, mode="verbatim")
    head_grads = {0: grads[0], 2: grads[2]}
    baseline = aggregate(dim, cell, lam, lam_bar, sizes, iters, head_grads,
                         [GradientChunk(owner=u, target={1: 0, 3: 2}[u],
                                        prb=0, fgti=0, index=np.arange(dim),
                                        values=grads[u]) for u in (1, 3)],
                         boost)
    for trial in range(100):
        trng = np.random.default_rng(9000 + trial)
        chunks = []
        for u in (1, 3):
            n_parts = int(trng.integers(1, 7))
            fr = trng.dirichlet(np.ones(n_parts))
            sched = [(int(trng.choice([0, 2])), int(trng.integers(2)),
                      int(trng.integers(4)), float(f)) for f in fr]
            chunks.extend(disperse(grads[u], u, sched))
        got = aggregate(dim, cell, lam, lam_bar, sizes, iters, head_grads,
                        chunks, boost)
        err = np.linalg.norm(got - baseline) / np.linalg.norm(baseline)
        assert err <= 1e-12, f"schedule {trial}: {err}"
    _verdict(9, "hierarchical aggregation partition invariance", 10.0, t0)


def test_acceptance_10_end_to_end_convex_training():
    t0 = time.time()
    cfg = ExperimentConfig(scenario={
        "seed": 1, "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
        "flus_per_oru": [2, 2], "rounds": 200, "fgtis_per_round": 5,
        "growth_down": [0.0, 0.0], "growth_up": [0.0, 0.0]},
        model_dim=60, learning_rate=0.9, boost_mode="normalized",
        minibatch_fraction=1.0, sgd_iterations=1)
    res = simulate(cfg)
    assert len(res.grad_norms) == 200
    assert res.grad_norms[-1] < 1e-3, f"final grad norm {res.grad_norms[-1]}"
    _verdict(10, "synthetic convex training end-to-end", 60.0, t0)
