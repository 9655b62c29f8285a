import numpy as np
import pytest

from fedslice.config import ExperimentConfig
from fedslice.gp.algebra import Posynomial, Signomial, VariableRegistry
from fedslice.gp.encode import ProblemSizeError, encode_problem
from fedslice.gp.program import GPProgram
from fedslice.network import build_scenario


def _cfg(**scenario_over):
    scenario = {"seed": 1, "oru_positions_m": [[0.0, 0.0]],
                "flus_per_oru": [2], "rounds": 1, "fgtis_per_round": 4,
                "n_licensed_prbs": 1, "n_unlicensed_prbs": 1}
    scenario.update(scenario_over)
    return ExperimentConfig(scenario=scenario, model_dim=50)


@pytest.fixture(scope="module")
def tiny():
    cfg = _cfg()
    sc = build_scenario(cfg.scenario)
    return encode_problem(sc, cfg), sc, cfg


def test_constraint_count_matches_hand_enumeration(tiny):
    """1 radio unit / 2 users / 1+1 PRBs / 4 instants, enumerated by family.

    The window split for 4 instants is broadcast={0}, d2d={1}, upload={2}.
    Each split equality contributes one fwd and one rev inequality.
    """
    enc, sc, cfg = tiny
    U, R, Rb = 2, 1, 1
    n_pairs = 2          # ordered feeder->head pairs within the cell
    bc = d2d = up = 1    # window lengths

    eq = 0               # split equalities
    mono = 0             # exact monomial equalities
    leq = 0              # plain / condensable inequalities
    cnr = 0              # signomial window conditions

    # per-user scalars: lamhat defs, varsigma-bar defs; exclusivity
    eq += 2 * U
    leq += U
    # timing: t0 tie is monomial, the chain is split
    mono += 1
    eq += 4 - 1
    # recruitment gates and the per-cell recruited-max softmax
    eq += U                       # grec defs
    eq += 1                       # Lmax p-sum
    mono += 1                     # Lmax tie
    # R2F block: power budget, phi sum, couplings; rate stacks per (u,r,x)
    leq += bc * (1 + 3 * R)       # budget + 3 couplings per PRB
    eq += bc                      # phi sum equality
    eq += bc * R * U * 2          # J def + SINR def per link
    eq += bc * R * U              # min-gate arguments
    eq += bc * R                  # Jmin p-sum
    mono += bc * R                # broadcast min-rate tie
    # broadcast chunks: tch def + Tmin (p-sum + eps-tie) + slot softmax
    eq += bc * R                  # tch defs
    eq += bc * R * 2              # Tmin tilde + eps tie
    eq += bc                      # slot softmax p-sum
    mono += bc                    # slot softmax tie
    mono += 1                     # tau_dn tie (single-slot window)
    leq += 1                      # broadcast delivery
    # dataset chain
    eq += U                       # sizes
    mono += U                     # compute-latency ties
    eq += 3                       # total, selected, gap
    eq += 1                       # min p-sum
    mono += 1                     # min tie
    # D2C block
    leq += d2d * U                # power budgets
    leq += d2d * n_pairs * Rb * 3      # q gates
    leq += d2d * n_pairs * Rb * 2      # psi coupling + strict
    leq += d2d * U * Rb * 1            # power coupling
    leq += d2d * n_pairs * Rb          # power strict
    leq += d2d * U * 2                 # psi sum bounds
    leq += d2d * U                     # head coverage
    eq += d2d * n_pairs * Rb * 2       # rate stacks
    eq += d2d * n_pairs * Rb           # tch defs
    eq += d2d * n_pairs * Rb * 2       # Tmin pairs
    eq += d2d * U                      # slot softmax p-sums
    mono += d2d * U                    # slot softmax ties
    mono += U                          # tau_d2d ties
    leq += U                           # d2d delivery
    # waiting time: per-pair per-slot PRB softmax, pair sums, head softmax
    eq += d2d * n_pairs
    mono += d2d * n_pairs
    eq += n_pairs                      # Wpair defs
    eq += U                            # tauW p-sums
    mono += U                          # tauW ties
    # C2R block
    leq += up * U                      # power budgets
    leq += up * U * R * 6              # q/pow/psi couplings
    leq += up * U * 2                  # psi sum bounds
    eq += up * U * R * 2               # rate stacks
    eq += up * U * R                   # tch defs
    eq += up * U * R * 2               # Tmin pairs
    eq += up * U                       # slot softmax p-sums
    mono += up * U                     # slot softmax ties
    mono += U                          # tau_up ties
    leq += U                           # upload delivery
    # events and completion
    eq += U                            # d2d-start events
    eq += U                            # d2d-end events (feeders = all users here)
    eq += U * 2                        # compute/wait softmax p-sums + up-start
    mono += U                          # compute/wait ties
    eq += U                            # upload-chain defs
    leq += 1 + U * 2                   # window containments
    cnr += bc * 1                      # broadcast window CNR per cell
    cnr += d2d * U * 2                 # feeder window CNRs
    cnr += up * U * 2                  # head window CNRs
    eq += 1                            # duration p-sum
    mono += 1                          # duration tie
    # bound chain and sufficient conditions
    eq += 1 + 1 + 1 + 1                # ell sum, ell max p-sum, ellBar, ellM1
    mono += 1 + 1                      # ell max tie, eta def
    eq += U                            # tau-hat defs
    eq += 1                            # boost weight-sum (normalized mode)
    mono += 1                          # boost tie
    leq += 1                           # latency condition
    leq += 2                           # recruitment-gap pair
    leq += 2                           # step-size ceilings
    leq += U                           # sampling-noise per user

    got = enc.constraint_count
    assert got["cnr"] == cnr
    assert got["mono_eq"] == mono
    assert got["equality"] == eq
    assert got["leq"] == leq
    # every split equality contributes exactly two ratio constraints
    n_ratio = sum(1 for c in enc.program.constraints
                  if c.name.endswith("/fwd") or c.name.endswith("/rev"))
    assert n_ratio == 2 * got["equality"]


def test_size_budget_enforced():
    cfg = _cfg()
    sc = build_scenario(cfg.scenario)
    with pytest.raises(ProblemSizeError) as ei:
        encode_problem(sc, cfg, var_budget=10)
    assert ei.value.n_vars > 10


def test_multi_round_rejected():
    cfg = _cfg(rounds=2)
    sc = build_scenario(cfg.scenario)
    with pytest.raises(ValueError):
        encode_problem(sc, cfg)


def test_golden_sdc1_transcription():
    """The generic signomial rewrite reproduces the hand-derived ratio
    (tau + t*beta) / (t + tau*beta) <= 1 for the broadcast window rule."""
    reg = VariableRegistry()
    tau = reg.add("tau", 1e-6, 1e6)
    t = reg.add("t", 1e-6, 1e6)
    beta = reg.add("beta", 1e-6, 1.0)
    prog = GPProgram(reg)
    prog.add_signomial_leq((tau * t ** -1.0 - 1.0) * (1.0 - beta), "sdc1")
    c = prog.constraints[0]
    rng = np.random.default_rng(0)
    for _ in range(50):
        pt = rng.uniform(0.2, 3.0, size=3)
        hand = (pt[0] + pt[1] * pt[2]) / (pt[1] + pt[0] * pt[2])
        # clearing t from the denominator multiplies num and den alike
        assert c.num.value(pt) / c.den.value(pt) == pytest.approx(hand,
                                                                  rel=1e-12)


def test_golden_prb_gate_transcription():
    """q - min(a, b, c) <= 0 splits into three eps-guarded ratios."""
    reg = VariableRegistry()
    q = reg.add("q", 1e-6, 1.0)
    a = reg.add("a", 1e-6, 1.0)
    prog = GPProgram(reg)
    eps = 1e-6
    prog.add_leq(q, Posynomial.from_obj(eps + a), "gate")
    c = prog.constraints[0]
    pt = np.array([0.7, 0.4])
    assert c.num.value(pt) / c.den.value(pt) == pytest.approx(
        0.7 / (eps + 0.4), rel=1e-12)


def test_golden_compute_latency_transcription():
    """tau = ell a B / f as an exact monomial tie, matching the hand form
    (f tau + f) / (ell a B + f) = 1 after clearing the shared +f term."""
    reg = VariableRegistry()
    tau = reg.add("tau", 1e-9, 1e3)
    f = reg.add("f", 1e6, 1e10)
    ell = reg.add("ell", 1.0, 8.0)
    bsz = reg.add("bsz", 1.0, 1e5)
    a_u = 3960.0
    mono = tau * f * (1.0 / a_u) * ell ** -1.0 * bsz ** -1.0
    rng = np.random.default_rng(1)
    for _ in range(50):
        pt = np.array([0.0, 10 ** rng.uniform(8, 9), rng.uniform(1, 8),
                       rng.uniform(10, 1e4)])
        pt[0] = pt[2] * a_u * pt[3] / pt[1]          # satisfy the tie
        assert mono.value(pt) == pytest.approx(1.0, rel=1e-12)
        hand = (pt[1] * pt[0] + pt[1]) / (pt[2] * a_u * pt[3] + pt[1])
        assert hand == pytest.approx(1.0, rel=1e-12)


def test_encode_components_positive_at_init(tiny):
    enc, _, _ = tiny
    for name in ("phi", "latency", "energy"):
        assert enc.component_value(enc.x0, name) > 0.0


def test_extracted_decisions_have_full_shapes(tiny):
    enc, sc, _ = tiny
    dv = enc.extract_decisions(enc.x0)
    dv.validate(sc)
    rd = dv.rounds[0]
    assert rd.lam.shape == (2,)
    assert rd.prb_d2d.shape == (2, 2, 1, 4)
    # out-of-window entries are structurally zero
    bc_w, d2d_w, up_w = enc.windows
    for x in range(4):
        if x not in d2d_w:
            assert rd.prb_d2d[:, :, :, x].sum() == 0.0
        if x not in bc_w:
            assert rd.beta_down[:, x].sum() == 0.0


def test_objective_weights_respected():
    cfg = _cfg()
    sc = build_scenario(cfg.scenario)
    enc_a = encode_problem(sc, ExperimentConfig(scenario=cfg.scenario,
                                                model_dim=50,
                                                weight_energy=1.0))
    enc_b = encode_problem(sc, ExperimentConfig(scenario=cfg.scenario,
                                                model_dim=50,
                                                weight_energy=2.0))
    ea = enc_a.program.objective.value(enc_a.x0)
    eb = enc_b.program.objective.value(enc_b.x0)
    diff = eb - ea
    assert diff == pytest.approx(enc_a.component_value(enc_a.x0, "energy"),
                                 rel=1e-9)
