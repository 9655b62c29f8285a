"""Symbolic encoding of the orchestration problem as a signomial program.

One generic pipeline reproduces every constraint family programmatically:

* rate equalities are posynomialized with the truncated-exponential power
  trick (an auxiliary ``J`` with ``J**C`` standing in for ``2**(R/B)``),
  rates carried in bandwidth units (spectral efficiency),
* min/max couplings become p-norm auxiliaries,
* every posynomial equality is split into an inequality pair with a
  penalized slack B >= 1,
* subtraction-bearing window conditions are expanded as signomials and
  rewritten as posynomial ratios (denominators condensed per iteration).

The timeline is structured: the round's grid is divided into broadcast,
D2D, and upload windows, so transmission variables exist only where their
mode may be active (which also enforces the R2F/C2R non-simultaneity
structurally).  The "stop transmitting once done" side of the scheduling
pairs is handled at rounding time; inside the relaxation it couples the
window ends to fractional recruitment in a way that empties the feasible
set.  Channel realizations are frozen from the scenario's deterministic
channel state.  The encoder covers a single global round; multi-round
experiments reuse the optimized round layout.

The initial point is role-based (alternating head/feeder per cell, like
the simulator's fixed policy), with window spans sized from the initial
link rates so every payload fits its window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..airtime import SINR_CAP
from ..bound import BoundParams, phi_posynomial
from ..config import ExperimentConfig
from ..control import DecisionVector, RoundDecisions
from ..heuristic import assign_roles, window_slots
from ..network import NetworkScenario
from .algebra import Monomial, Posynomial, VariableRegistry
from .program import GPProgram

__all__ = ["EncodedProblem", "ProblemSizeError", "encode_problem"]

_LN2 = math.log(2.0)


class ProblemSizeError(ValueError):
    def __init__(self, n_vars: int, budget: int):
        super().__init__(f"encoded problem needs {n_vars} variables, over the "
                         f"budget of {budget}")
        self.n_vars = n_vars
        self.budget = budget


@dataclass
class EncodedProblem:
    program: GPProgram
    x0: np.ndarray
    scenario: NetworkScenario
    cfg: ExperimentConfig
    windows: tuple
    components: dict                      # name -> Posynomial
    var_index: dict                       # structured name -> vid
    constraint_count: dict = field(default_factory=dict)

    def component_value(self, x: np.ndarray, name: str) -> float:
        return self.components[name].value(x)

    def extract_decisions(self, x: np.ndarray) -> DecisionVector:
        return _extract(self, x)


class _Builder:
    """Tracks variables, their initial values, and the split equalities."""

    def __init__(self, cfg: ExperimentConfig):
        self.reg = VariableRegistry()
        self.prog = GPProgram(self.reg)
        self.init: dict[int, float] = {}
        self.cfg = cfg
        self.n_split = 0
        self.count: dict[str, int] = {}
        self.penalty_weight = 1.0         # rescaled once the objective is known

    def tally(self, family: str) -> None:
        self.count[family] = self.count.get(family, 0) + 1

    def var(self, name: str, value: float, lo: float | None = None,
            hi: float | None = None) -> Monomial:
        value = float(max(value, 1e-300))
        lo = max(value * 1e-8, 1e-300) if lo is None else lo
        hi = max(value * 1e8, lo * 10.0) if hi is None else hi
        value = min(max(value, lo), hi)
        m = self.reg.add(name, lo, hi)
        self.init[_vid(m)] = value
        return m

    def x0(self) -> np.ndarray:
        x = np.ones(len(self.reg))
        for vid, val in self.init.items():
            x[vid] = val
        return x

    def split_eq(self, f, g, name: str) -> None:
        """Posynomial equality f = g via the penalized inequality pair."""
        b = self.prog.new_penalty_var(f"B/{name}")
        x = self.x0()
        fv = Posynomial.from_obj(f).value(x)
        gv = Posynomial.from_obj(g).value(x)
        self.init[_vid(b)] = max(1.02, 1.02 * gv / max(fv, 1e-300))
        self.prog.add_split_equality(f, g, b, self.penalty_weight, name)
        self.n_split += 1
        self.tally("equality")

    def mono_eq(self, mono, name: str) -> None:
        self.prog.add_monomial_eq(mono, name)
        self.tally("mono_eq")

    def leq(self, num, den=None, name: str = "") -> None:
        self.prog.add_leq(num, den, name)
        self.tally("leq")

    def cnr(self, expr, name: str) -> None:
        self.prog.add_signomial_leq(expr, name=name,
                                    slack=self.cfg.epsilon * 1e4)
        self.tally("cnr")


def _vid(m: Monomial) -> int:
    return next(iter(m.exps))


def _softmin_aux(b: _Builder, name: str, args: list[Monomial],
                 values: list[float], p: float, eps: float) -> Monomial:
    """aux = (sum a_i**-p)**(-1/p) - eps  over monomial-variable args."""
    tilde_val = sum(max(val, 1e-300) ** (-p) for val in values)
    tilde = b.var(f"{name}~", tilde_val)
    b.split_eq(tilde, Posynomial([a ** -p for a in args]), f"{name}~def")
    raw = tilde_val ** (-1.0 / p)
    out = b.var(name, max(raw - eps, raw * 1e-3))
    if eps > 0.0:
        b.split_eq(out * tilde ** (1.0 / p) + eps * tilde ** (1.0 / p),
                   Monomial(1.0), f"{name}def")
    else:
        b.mono_eq(out * tilde ** (1.0 / p), f"{name}def")
    return out


def _softmax_aux(b: _Builder, name: str, args: list[Monomial],
                 values: list[float], p: float) -> Monomial:
    """aux = (sum a_i**p)**(1/p); exact monomial tie to the p-sum."""
    tilde_val = sum(max(val, 1e-300) ** p for val in values)
    tilde = b.var(f"{name}~", tilde_val)
    b.split_eq(tilde, Posynomial([a ** p for a in args]), f"{name}~def")
    out = b.var(name, tilde_val ** (1.0 / p))
    b.mono_eq(out * tilde ** (-1.0 / p), f"{name}def")
    return out


def _rate_stack(b: _Builder, name: str, signal: Monomial, sig_val: float,
                interf_terms: list[Monomial], interf_val: float,
                noise: float, C: int) -> tuple[Monomial, float]:
    """Auxiliary spectral-efficiency variable tied to its SINR.

    ``J**C * (I + BN0) = S + I + BN0`` with ``J = 1 + ln2 R/C +
    (ln2 R / (sqrt2 C))**2`` defines R in bandwidth units; the init value
    inverts the truncated series exactly.
    """
    gamma = min(sig_val / (interf_val + noise), SINR_CAP)
    q = (1.0 + gamma) ** (1.0 / C)
    z = -1.0 + math.sqrt(max(2.0 * q - 1.0, 1e-300))
    r_val = max(z * C / _LN2, 1e-9)
    r = b.var(f"R/{name}", r_val, lo=1e-12, hi=60.0)
    j = b.var(f"J/{name}", q, lo=1.0 + 1e-15, hi=16.0)
    c1 = _LN2 / C
    b.split_eq(j, 1.0 + c1 * r + (c1 ** 2 / 2.0) * (r * r), f"Jdef/{name}")
    rhs = Posynomial([signal, Monomial(noise)] + interf_terms)
    lhs = Posynomial([Monomial(noise)] + interf_terms)
    b.split_eq(j ** float(C) * lhs, rhs, f"SINRdef/{name}")
    return r, r_val


def _se(gamma: float) -> float:
    return math.log2(1.0 + min(gamma, SINR_CAP))


def encode_problem(scenario: NetworkScenario, cfg: ExperimentConfig,
                   var_budget: int = 4000) -> EncodedProblem:
    """Assemble objective and all four constraint families symbolically.

    Raises :class:`ProblemSizeError` when the scenario exceeds the dense
    inner solver's variable budget, and ``ValueError`` for multi-round
    scenarios (the optimizer reuses one optimized round layout).
    """
    ecfg = cfg
    eps = ecfg.epsilon
    p = ecfg.p_norm
    C = ecfg.maclaurin_c
    if scenario.rounds != 1:
        raise ValueError("the symbolic encoding covers one global round; "
                         "optimize a rounds=1 scenario and replay the layout")
    B_, U = scenario.n_orus, scenario.n_flus
    if U == 0:
        raise ValueError("nothing to optimize: scenario has no users")
    R, Rb = scenario.n_licensed_prbs, scenario.n_unlicensed_prbs
    N = scenario.fgtis_per_round
    K = 1
    k = 0
    bc_w, d2d_w, up_w = window_slots(N)
    if len(d2d_w) == 0 or len(up_w) == 0:
        raise ValueError("need at least 4 FGTIs per round to place the "
                         "broadcast, D2D, and upload windows")
    payload = ecfg.bits_per_element * ecfg.model_dim
    kappa = 2.0 ** (-1.0 / p)     # worst-case two-arg p-norm min undershoot
    channels = scenario.channels()
    p_oru = np.array([o.p_max for o in scenario.orus])
    p_flu = np.array([f.p_max for f in scenario.flus])
    bw_l, bw_u = scenario.licensed_bandwidth, scenario.unlicensed_bandwidth
    noise_l = bw_l * scenario.noise_psd
    noise_u = bw_u * scenario.noise_psd
    a_cycles = np.array([f.cycles_per_sample for f in scenario.flus])
    cap = np.array([f.chipset_capacitance for f in scenario.flus])
    drift = np.array([f.drift_bound for f in scenario.flus])
    sigma_cap = np.array([f.sigma_max for f in scenario.flus])
    growth_down = np.array([f.growth_down for f in scenario.flus])
    init_sizes = np.array([f.initial_dataset_size for f in scenario.flus])
    params = BoundParams(
        smoothness=ecfg.smoothness,
        theta=max((f.dissimilarity for f in scenario.flus), default=1.0),
        x1=ecfg.hetero_x1, x2=ecfg.hetero_x2, zeta=ecfg.zeta,
        zeta_hat=ecfg.zeta_hat, zeta_max=ecfg.zeta,
        alpha_step=ecfg.alpha_step, vartheta=ecfg.vartheta, varpi=ecfg.varpi,
        sigma_max=ecfg.sigma_max,
        ell_hat_min=max(U, 1), ell_hat_max=max(U, 1) * 8.0,
    )

    # ---- role-based initial magnitudes -------------------------------------
    rl, rlb = assign_roles(scenario)
    HI, LO = 0.95, 0.04
    lam0 = np.where(rl > 0, HI, LO)
    lamb0 = np.where(rlb > 0, HI, LO)
    lamhat0 = np.minimum(lam0 + lamb0, 1.0 - eps)
    pow0_l, pow0_u = 0.96 / R, 0.96 / Rb
    beta0 = 0.995
    sig0 = min(ecfg.minibatch_fraction, 0.98)
    ell0 = max(ecfg.sgd_iterations, 1.0)
    pairs = [(u, uh) for bb in range(B_)
             for u in scenario.cell_members(bb)
             for uh in scenario.cell_members(bb) if u != uh]
    targets = {u: [uh for (uu, uh) in pairs if uu == u] for u in range(U)}

    # ---- pre-pass: window spans from interference-aware rate floors --------
    g_of0 = channels.oru_flu_gains(k, bc_w[0])
    span_bc = 1e-3
    for bb in range(B_):
        members = scenario.cell_members(bb)
        if not members:
            continue
        others = [b2 for b2 in range(B_)
                  if b2 != bb and scenario.cell_members(b2)]
        worst_se = min(
            _se(g_of0[bb, u] * p_oru[bb] * pow0_l
                / (sum(g_of0[b2, u] * p_oru[b2] * pow0_l for b2 in others)
                   + noise_l)) for u in members)
        span_bc = max(span_bc, payload / max(R * bw_l * worst_se * 0.5, 1.0))
    tau_lc0 = np.array([ell0 * a_cycles[u] * sig0
                        * (init_sizes[u] + growth_down[u] * span_bc)
                        / scenario.flus[u].cpu_freq for u in range(U)])
    g_ff0 = channels.flu_flu_gains(k, d2d_w[0])
    span_d2d = 1e-3
    for (u, uh) in pairs:
        int_v = sum(g_ff0[u2, uh] * p_flu[u2] * pow0_u
                    for u2 in range(U)
                    if u2 not in (u, uh) and targets.get(u2))
        se = _se(g_ff0[u, uh] * p_flu[u] * pow0_u / (int_v + noise_u))
        n_ch = len(targets[u]) * Rb
        span_d2d = max(span_d2d, payload / max(n_ch * bw_u * se * 0.5, 1.0))
    g_of1 = channels.oru_flu_gains(k, up_w[0])
    span_up = 1e-3
    for u in range(U):
        bb = scenario.flu_cell[u]
        int_v = sum(g_of1[bb, u2] * p_flu[u2] * pow0_l
                    for u2 in range(U) if u2 != u)
        se = _se(g_of1[bb, u] * p_flu[u] * pow0_l / (int_v + noise_l))
        span_up = max(span_up, payload / max(R * bw_l * se * 0.5, 1.0))
    span_bc = 1.3 * span_bc + 1.5 * float(tau_lc0.max(initial=0.0))
    span_d2d *= 1.6
    span_up *= 1.6

    dt_init = np.empty(N)
    dt_init[0] = 0.02 * span_bc
    for x in bc_w:
        if x + 1 < N:
            dt_init[x + 1] = span_bc / len(bc_w)
    for x in d2d_w:
        if x + 1 < N:
            dt_init[x + 1] = span_d2d / len(d2d_w)
    for x in up_w:
        if x + 1 < N:
            dt_init[x + 1] = span_up / len(up_w)
    if up_w[-1] + 1 < N:
        dt_init[up_w[-1] + 1] = span_up / len(up_w)
    t_init = np.cumsum(dt_init)

    bld = _Builder(ecfg)
    v = bld.var
    ix: dict = {name: {} for name in (
        "t", "lam", "lam_bar", "ell", "varsigma", "freq", "beta_dn",
        "beta_d2d", "beta_up", "prb_d2d", "prb_up", "pow_dn", "pow_d2d",
        "pow_up", "phi_dn", "psi_d2d", "psi_up")}
    energy_terms: list[Posynomial] = []
    base = Monomial(1e-12)                # T^(k-1) = 0 for the encoded round

    # ---- scalar decisions ----------------------------------------------
    lam = [v(f"lam[{u}]", lam0[u], eps, 1.0) for u in range(U)]
    lamb = [v(f"lamb[{u}]", lamb0[u], eps, 1.0) for u in range(U)]
    lam_hat = [v(f"lamhat[{u}]", lamhat0[u], eps, 1.0) for u in range(U)]
    ell = [v(f"ell[{u}]", ell0, 1.0, 8.0) for u in range(U)]
    sig = [v(f"sig[{u}]", sig0, 0.05, 1.0) for u in range(U)]
    sigb = [v(f"sigb[{u}]", max(1.0 / sig0 - 1.0, 1e-6), 1e-8, 20.0)
            for u in range(U)]
    freq = [v(f"freq[{u}]", scenario.flus[u].cpu_freq,
              scenario.flus[u].cpu_freq * 0.5, scenario.flus[u].cpu_freq)
            for u in range(U)]
    for u in range(U):
        ix["lam"][(k, u)] = _vid(lam[u])
        ix["lam_bar"][(k, u)] = _vid(lamb[u])
        ix["ell"][(k, u)] = _vid(ell[u])
        ix["varsigma"][(k, u)] = _vid(sig[u])
        ix["freq"][(k, u)] = _vid(freq[u])
        bld.leq(lam[u] + lamb[u], name=f"recruit_excl[{u}]")
        bld.split_eq(lam_hat[u], lam[u] + lamb[u], f"lamhat[{u}]")
        bld.split_eq(sigb[u] * sig[u] + sig[u], Monomial(1.0),
                     f"sigbdef[{u}]")

    # ---- timing grid -----------------------------------------------------
    dts = [v(f"dt[{x}]", dt_init[x], dt_init[x] * 1e-4, dt_init[x] * 1e4)
           for x in range(N)]
    t = []
    for x in range(N):
        tx = v(f"t[{x}]", t_init[x], t_init[x] * 1e-6, t_init[x] * 1e6)
        t.append(tx)
        ix["t"][(k, x)] = _vid(tx)
    bld.mono_eq(t[0] * dts[0] ** -1.0, "t0def")
    for x in range(N - 1):
        bld.split_eq(t[x + 1], t[x] + dts[x + 1], f"tchain[{x}]")

    def spacing(x):
        return dts[x + 1], dt_init[x + 1]

    # ---- recruitment gates -------------------------------------------------
    g_rec, g_rec_val = [], []
    for u in range(U):
        gv = (1.0 + eps) / (lamhat0[u] + eps)
        g = v(f"grec[{u}]", gv, 1.0, (1.0 + eps) / (2 * eps))
        bld.split_eq(g * lam_hat[u] + eps * g, Monomial(1.0 + eps),
                     f"grecdef[{u}]")
        g_rec.append(g)
        g_rec_val.append(gv)
    lmax_cell = {}
    for bb in range(B_):
        members = scenario.cell_members(bb)
        if members:
            lmax_cell[bb] = _softmax_aux(bld, f"Lmax[{bb}]",
                                         [lam_hat[u] for u in members],
                                         [lamhat0[u] for u in members], p)

    # =================== R2F: powers, rates, broadcast ======================
    pow_dn, phi_dn, beta_dn = {}, {}, {}
    for bb in range(B_):
        if not scenario.cell_members(bb):
            continue
        for x in bc_w:
            beta_dn[(bb, x)] = v(f"bD[{bb},{x}]", beta0, eps, 1.0)
            ix["beta_dn"][(k, bb, x)] = _vid(beta_dn[(bb, x)])
            for r in range(R):
                pow_dn[(bb, r, x)] = v(f"pD[{bb},{r},{x}]", pow0_l, eps, 1.0)
                phi_dn[(bb, r, x)] = v(f"phiD[{bb},{r},{x}]", 0.98 / R,
                                       eps, 1.0)
                ix["pow_dn"][(k, bb, r, x)] = _vid(pow_dn[(bb, r, x)])
                ix["phi_dn"][(k, bb, r, x)] = _vid(phi_dn[(bb, r, x)])
            bld.leq(Posynomial([pow_dn[(bb, r, x)] for r in range(R)]),
                    name=f"powDbudget[{bb},{x}]")
            bld.split_eq(Posynomial([phi_dn[(bb, r, x)] for r in range(R)]),
                         Monomial(1.0), f"phiDsum[{bb},{x}]")
            for r in range(R):
                bld.leq(pow_dn[(bb, r, x)],
                        Posynomial.from_obj(eps + beta_dn[(bb, x)]),
                        f"powDcpl[{bb},{r},{x}]")
                bld.leq(beta_dn[(bb, x)],
                        Posynomial.from_obj((1.0 - eps) + pow_dn[(bb, r, x)]),
                        f"powDstrict[{bb},{r},{x}]")
                bld.leq(phi_dn[(bb, r, x)],
                        Posynomial.from_obj(eps + beta_dn[(bb, x)]),
                        f"phiDcpl[{bb},{r},{x}]")

    rate_dn, rate_dn_val = {}, {}
    for x in bc_w:
        gains = channels.oru_flu_gains(k, x)
        for bb in range(B_):
            members = scenario.cell_members(bb)
            if not members:
                continue
            for r in range(R):
                args, vals = [], []
                for u in members:
                    sig_m = gains[bb, u] * p_oru[bb] * pow_dn[(bb, r, x)]
                    sig_v = gains[bb, u] * p_oru[bb] * pow0_l
                    others = [b2 for b2 in range(B_)
                              if b2 != bb and scenario.cell_members(b2)]
                    interf = [gains[b2, u] * p_oru[b2] * pow_dn[(b2, r, x)]
                              for b2 in others]
                    int_v = sum(gains[b2, u] * p_oru[b2] * pow0_l
                                for b2 in others)
                    rr, rv = _rate_stack(bld, f"dn[{bb},{u},{r},{x}]", sig_m,
                                         sig_v, interf, int_v, noise_l, C)
                    a_val = g_rec_val[u] - beta0 + rv
                    a = v(f"aDn[{bb},{u},{r},{x}]", a_val)
                    bld.split_eq(a + beta_dn[(bb, x)], g_rec[u] + rr,
                                 f"aDndef[{bb},{u},{r},{x}]")
                    args.append(a)
                    vals.append(a_val)
                jmin_val = sum(max(val, 1e-300) ** (-p) for val in vals)
                jm = v(f"JminDn[{bb},{r},{x}]", jmin_val)
                bld.split_eq(jm, Posynomial([a ** -p for a in args]),
                             f"JminDndef[{bb},{r},{x}]")
                rd_val = beta0 * jmin_val ** (-1.0 / p)
                rdm = v(f"Rdn[{bb},{r},{x}]", rd_val, lo=1e-12, hi=60.0)
                bld.mono_eq(rdm * beta_dn[(bb, x)] ** -1.0 * jm ** (1.0 / p),
                            f"Rdndef[{bb},{r},{x}]")
                rate_dn[(bb, r, x)] = rdm
                rate_dn_val[(bb, r, x)] = rd_val

    tau_dn, tau_dn_val = {}, {}
    for bb in range(B_):
        members = scenario.cell_members(bb)
        if not members:
            continue
        ledger_expr: Posynomial | None = None
        ledger_val = 0.0
        parts, part_vals = [], []
        air = []                          # (Tmin, rate, pow)
        for xi, x in enumerate(bc_w):
            dtv, dtv0 = spacing(x)
            per_r, per_r_val = [], []
            for r in range(R):
                tch_val = max(payload - ledger_val, 1.0) * (0.98 / R) \
                    / (bw_l * rate_dn_val[(bb, r, x)] + 0.005)
                tch = v(f"tchDn[{bb},{r},{x}]", tch_val)
                f_side = tch * rate_dn[(bb, r, x)] * bw_l + tch
                if ledger_expr is not None:
                    f_side = f_side + ledger_expr * phi_dn[(bb, r, x)]
                bld.split_eq(f_side,
                             payload * phi_dn[(bb, r, x)]
                             + tch * beta_dn[(bb, x)],
                             f"tchDndef[{bb},{r},{x}]")
                tm = _softmin_aux(bld, f"TDn[{bb},{r},{x}]", [tch, dtv],
                                  [tch_val, dtv0], p, eps)
                tmv = min(tch_val, dtv0)
                per_r.append(tm)
                per_r_val.append(tmv)
                air.append((tm, rate_dn[(bb, r, x)], pow_dn[(bb, r, x)]))
            if xi < len(bc_w) - 1:
                inc = Posynomial([tm * rate_dn[(bb, r, x)] * bw_l
                                  for r, tm in enumerate(per_r)])
                inc_val = sum(tmv * rate_dn_val[(bb, r, x)] * bw_l
                              for r, tmv in enumerate(per_r_val))
                led = v(f"MDn[{bb},{x}]", max(ledger_val + inc_val, 1.0))
                bld.split_eq(led, inc if ledger_expr is None
                             else ledger_expr + inc, f"MDndef[{bb},{x}]")
                ledger_expr = Posynomial.from_obj(led)
                ledger_val += inc_val
            sx = _softmax_aux(bld, f"SDn[{bb},{x}]", per_r, per_r_val, p)
            parts.append(sx)
            part_vals.append(max(per_r_val))
        tdv = sum(part_vals)
        td = v(f"tauDn[{bb}]", tdv)
        if len(parts) == 1:
            bld.mono_eq(td * parts[0] ** -1.0, f"tauDndef[{bb}]")
        else:
            bld.split_eq(td, Posynomial(parts), f"tauDndef[{bb}]")
        tau_dn[bb], tau_dn_val[bb] = td, tdv
        bld.leq((payload * kappa * len(members) ** (-1.0 / p))
                * lmax_cell[bb],
                Posynomial([tm * rr * bw_l for tm, rr, _ in air]),
                f"deliverDn[{bb}]")
        energy_terms.append(Posynomial([tm * pw * p_oru[bb]
                                        for tm, _, pw in air]))

    # =================== dataset chain ======================================
    tau_lc, tau_lc_val = [], []
    ups_u, ups_u_val = [], []
    for u in range(U):
        bb = scenario.flu_cell[u]
        size_val = init_sizes[u] + growth_down[u] * tau_dn_val[bb]
        su = v(f"Ups[{u}]", size_val)
        bld.split_eq(su, init_sizes[u] + growth_down[u] * tau_dn[bb],
                     f"Upsdef[{u}]")
        ups_u.append(su)
        ups_u_val.append(size_val)
        tl_val = (ell0 * a_cycles[u] * sig0 * size_val
                  / scenario.flus[u].cpu_freq)
        tl = v(f"tauLC[{u}]", tl_val)
        bld.mono_eq(tl * freq[u] * (1.0 / a_cycles[u])
                    * ell[u] ** -1.0 * sig[u] ** -1.0 * su ** -1.0,
                    f"tauLCdef[{u}]")
        tau_lc.append(tl)
        tau_lc_val.append(tl_val)
    ups_tot_val = float(sum(ups_u_val))
    ups_tot = v("UpsTot", ups_tot_val)
    bld.split_eq(ups_tot, Posynomial(ups_u), "UpsTotdef")
    ups_sel_val = float(sum(lamhat0[u] * ups_u_val[u] for u in range(U)))
    ups_sel = v("UpsSel", ups_sel_val)
    bld.split_eq(ups_sel, Posynomial([lam_hat[u] * ups_u[u]
                                      for u in range(U)]), "UpsSeldef")
    ups_min = _softmin_aux(bld, "UpsMin", list(ups_u), ups_u_val, p, 0.0)
    gap_val = max(ups_tot_val - ups_sel_val, 1e-6)
    gap = v("UpsGap", gap_val, lo=1e-9, hi=ups_tot_val)
    bld.split_eq(ups_tot, gap + ups_sel, "UpsGapdef")

    # =================== D2C: powers, rates, dispersion =====================
    beta_d2d, pow_d2d, prb_d2d, psi_d2d = {}, {}, {}, {}
    q0, psi0, powb0 = {}, {}, {}
    for u in range(U):
        tgt = targets[u]
        if not tgt:
            continue
        n_ch = len(tgt) * Rb
        bd0 = beta0 if rlb[u] > 0 else 0.5
        for x in d2d_w:
            beta_d2d[(u, x)] = v(f"bB[{u},{x}]", bd0, eps, 1.0)
            ix["beta_d2d"][(k, u, x)] = _vid(beta_d2d[(u, x)])
            for uh in tgt:
                for r in range(Rb):
                    qv = 0.9 * min(lamb0[u], lam0[uh], bd0)
                    q = v(f"qB[{u},{uh},{r},{x}]", qv, eps, 1.0)
                    prb_d2d[(u, uh, r, x)] = q
                    q0[(u, uh, r, x)] = qv
                    sv = min(0.9 * qv, 1.02 * lamb0[u] / n_ch)
                    s = v(f"psiB[{u},{uh},{r},{x}]", sv, eps, 1.0)
                    psi_d2d[(u, uh, r, x)] = s
                    psi0[(u, uh, r, x)] = sv
                    ix["prb_d2d"][(k, u, uh, r, x)] = _vid(q)
                    ix["psi_d2d"][(k, u, uh, r, x)] = _vid(s)
                    for gate, gname in ((lamb[u], "lamb"),
                                        (beta_d2d[(u, x)], "beta"),
                                        (lam[uh], "lamhead")):
                        bld.leq(q, Posynomial.from_obj(eps + gate),
                                f"qBcpl_{gname}[{u},{uh},{r},{x}]")
                    bld.leq(s, Posynomial.from_obj(eps + q),
                            f"psiBcpl[{u},{uh},{r},{x}]")
                    bld.leq(q, Posynomial.from_obj((1.0 - eps) + s),
                            f"psiBstrict[{u},{uh},{r},{x}]")
            for r in range(Rb):
                pv = min(pow0_u, 0.9 * (eps + sum(q0[(u, uh, r, x)]
                                                  for uh in tgt)))
                pow_d2d[(u, r, x)] = v(f"pB[{u},{r},{x}]", pv, eps, 1.0)
                powb0[(u, r, x)] = pv
                ix["pow_d2d"][(k, u, r, x)] = _vid(pow_d2d[(u, r, x)])
                bld.leq(pow_d2d[(u, r, x)],
                        Posynomial([Monomial(eps)]
                                   + [prb_d2d[(u, uh, r, x)] for uh in tgt]),
                        f"powBcpl[{u},{r},{x}]")
                for uh in tgt:
                    bld.leq(prb_d2d[(u, uh, r, x)],
                            Posynomial.from_obj((1.0 - eps)
                                                + pow_d2d[(u, r, x)]),
                            f"powBstrict[{u},{uh},{r},{x}]")
            bld.leq(Posynomial([pow_d2d[(u, r, x)] for r in range(Rb)]),
                    name=f"powBbudget[{u},{x}]")
            frac_sum = Posynomial([psi_d2d[(u, uh, r, x)]
                                   for uh in tgt for r in range(Rb)])
            bld.leq(frac_sum, name=f"psiBsumUb[{u},{x}]")
            bld.leq(lamb[u], frac_sum, f"psiBsumLb[{u},{x}]")
    for uh in range(U):
        feeders = [u for (u, uu) in pairs if uu == uh]
        for x in d2d_w:
            here = [prb_d2d[(u, uh, r, x)] for u in feeders for r in range(Rb)
                    if (u, uh, r, x) in prb_d2d]
            if here:
                bld.leq(lam[uh], Posynomial(here), f"coverHead[{uh},{x}]")

    rate_d2d, rate_d2d_val = {}, {}
    for x in d2d_w:
        gff = channels.flu_flu_gains(k, x)
        for (u, uh) in pairs:
            for r in range(Rb):
                sig_m = gff[u, uh] * p_flu[u] * pow_d2d[(u, r, x)]
                sig_v = gff[u, uh] * p_flu[u] * powb0[(u, r, x)]
                txers = [u2 for u2 in range(U)
                         if u2 not in (u, uh) and (u2, r, x) in pow_d2d]
                interf = [gff[u2, uh] * p_flu[u2] * pow_d2d[(u2, r, x)]
                          for u2 in txers]
                int_v = sum(gff[u2, uh] * p_flu[u2] * powb0[(u2, r, x)]
                            for u2 in txers)
                rr, rv = _rate_stack(bld, f"bb[{u},{uh},{r},{x}]", sig_m,
                                     sig_v, interf, int_v, noise_u, C)
                rate_d2d[(u, uh, r, x)] = rr
                rate_d2d_val[(u, uh, r, x)] = rv

    tau_d2d, tau_d2d_val = {}, {}
    tmin_d2d = {}
    for u in range(U):
        tgt = targets[u]
        if not tgt:
            tau_d2d[u], tau_d2d_val[u] = None, 0.0
            continue
        ledger_expr, ledger_val = None, 0.0
        parts, part_vals = [], []
        for xi, x in enumerate(d2d_w):
            dtv, dtv0 = spacing(x)
            per_c, per_c_val = [], []
            for uh in tgt:
                for r in range(Rb):
                    tch_val = max(payload - ledger_val, 1.0) \
                        * psi0[(u, uh, r, x)] \
                        / (bw_u * rate_d2d_val[(u, uh, r, x)] + 0.005)
                    tch = v(f"tchB[{u},{uh},{r},{x}]", tch_val)
                    f_side = tch * rate_d2d[(u, uh, r, x)] * bw_u + tch
                    if ledger_expr is not None:
                        f_side = f_side + ledger_expr * psi_d2d[(u, uh, r, x)]
                    bld.split_eq(f_side,
                                 payload * psi_d2d[(u, uh, r, x)]
                                 + tch * beta_d2d[(u, x)],
                                 f"tchBdef[{u},{uh},{r},{x}]")
                    tm = _softmin_aux(bld, f"TB[{u},{uh},{r},{x}]",
                                      [tch, dtv], [tch_val, dtv0], p, eps)
                    tmv = min(tch_val, dtv0)
                    tmin_d2d[(u, uh, r, x)] = (tm, tmv)
                    per_c.append((tm, rate_d2d[(u, uh, r, x)],
                                  rate_d2d_val[(u, uh, r, x)], tmv))
                    per_c_val.append(tmv)
            if xi < len(d2d_w) - 1:
                inc = Posynomial([tm * rr * bw_u for tm, rr, _, _ in per_c])
                inc_val = sum(rv * bw_u * tmv for _, _, rv, tmv in per_c)
                led = v(f"MB[{u},{x}]", max(ledger_val + inc_val, 1.0))
                bld.split_eq(led, inc if ledger_expr is None
                             else ledger_expr + inc, f"MBdef[{u},{x}]")
                ledger_expr = Posynomial.from_obj(led)
                ledger_val += inc_val
            sx = _softmax_aux(bld, f"SB[{u},{x}]",
                              [tm for tm, _, _, _ in per_c], per_c_val, p)
            parts.append(sx)
            part_vals.append(max(per_c_val))
        tdv = sum(part_vals)
        td = v(f"tauB[{u}]", tdv)
        if len(parts) == 1:
            bld.mono_eq(td * parts[0] ** -1.0, f"tauBdef[{u}]")
        else:
            bld.split_eq(td, Posynomial(parts), f"tauBdef[{u}]")
        tau_d2d[u], tau_d2d_val[u] = td, tdv
        bld.leq((payload * kappa) * lamb[u],
                Posynomial([tmin_d2d[(u, uh, r, x)][0]
                            * rate_d2d[(u, uh, r, x)] * bw_u
                            for uh in tgt for r in range(Rb) for x in d2d_w]),
                f"deliverB[{u}]")
        energy_terms.append(Posynomial(
            [lamb[u] * tmin_d2d[(u, uh, r, x)][0] * pow_d2d[(u, r, x)]
             * p_flu[u] for uh in tgt for r in range(Rb) for x in d2d_w]
            + [lamb[u] * freq[u] ** 3.0 * tau_lc[u] * (cap[u] / 2.0)]))

    tau_wait, tau_wait_val = {}, {}
    for uh in range(U):
        feeders = [u for (u, uu) in pairs if uu == uh]
        if not feeders:
            tau_wait[uh], tau_wait_val[uh] = None, 0.0
            continue
        w_args, w_vals = [], []
        for u in feeders:
            per_x_parts, per_x_vals = [], []
            for x in d2d_w:
                tms = [tmin_d2d[(u, uh, r, x)] for r in range(Rb)]
                sxw = _softmax_aux(bld, f"SW[{u},{uh},{x}]",
                                   [tm for tm, _ in tms],
                                   [tv_ for _, tv_ in tms], p)
                per_x_parts.append(sxw)
                per_x_vals.append(max(tv_ for _, tv_ in tms))
            wv = tau_lc_val[u] + sum(per_x_vals)
            wp = v(f"Wpair[{u},{uh}]", wv)
            bld.split_eq(wp, Posynomial([tau_lc[u]] + per_x_parts),
                         f"Wpairdef[{u},{uh}]")
            w_args.append(wp)
            w_vals.append(wv)
        tau_wait[uh] = _softmax_aux(bld, f"tauW[{uh}]", w_args, w_vals, p)
        tau_wait_val[uh] = (sum(val ** p for val in w_vals)) ** (1.0 / p)

    # =================== C2R: powers, rates, dispatch =======================
    beta_up, pow_up, prb_up, psi_up = {}, {}, {}, {}
    qu0, powu0, psiu0 = {}, {}, {}
    for u in range(U):
        bu0 = beta0 if rl[u] > 0 else 0.5
        qv = 0.9 * min(lam0[u], bu0)
        for x in up_w:
            beta_up[(u, x)] = v(f"bU[{u},{x}]", bu0, eps, 1.0)
            ix["beta_up"][(k, u, x)] = _vid(beta_up[(u, x)])
            for r in range(R):
                pv = min(pow0_l, 0.9 * (eps + qv))
                pow_up[(u, r, x)] = v(f"pU[{u},{r},{x}]", pv, eps, 1.0)
                powu0[(u, r, x)] = pv
                qq = v(f"qU[{u},{r},{x}]", qv, eps, 1.0)
                prb_up[(u, r, x)] = qq
                qu0[(u, r, x)] = qv
                sv = min(0.9 * qv, 1.02 * lam0[u] / R)
                ss = v(f"psiU[{u},{r},{x}]", sv, eps, 1.0)
                psi_up[(u, r, x)] = ss
                psiu0[(u, r, x)] = sv
                ix["pow_up"][(k, u, r, x)] = _vid(pow_up[(u, r, x)])
                ix["prb_up"][(k, u, r, x)] = _vid(qq)
                ix["psi_up"][(k, u, r, x)] = _vid(ss)
                bld.leq(qq, Posynomial.from_obj(eps + lam[u]),
                        f"qUcpl_lam[{u},{r},{x}]")
                bld.leq(qq, Posynomial.from_obj(eps + beta_up[(u, x)]),
                        f"qUcpl_beta[{u},{r},{x}]")
                bld.leq(pow_up[(u, r, x)], Posynomial.from_obj(eps + qq),
                        f"powUcpl[{u},{r},{x}]")
                bld.leq(qq, Posynomial.from_obj((1.0 - eps)
                                                + pow_up[(u, r, x)]),
                        f"powUstrict[{u},{r},{x}]")
                bld.leq(ss, Posynomial.from_obj(eps + qq),
                        f"psiUcpl[{u},{r},{x}]")
                bld.leq(qq, Posynomial.from_obj((1.0 - eps) + ss),
                        f"psiUstrict[{u},{r},{x}]")
            bld.leq(Posynomial([pow_up[(u, r, x)] for r in range(R)]),
                    name=f"powUbudget[{u},{x}]")
            frac_sum = Posynomial([psi_up[(u, r, x)] for r in range(R)])
            bld.leq(frac_sum, name=f"psiUsumUb[{u},{x}]")
            bld.leq(lam[u], frac_sum, f"psiUsumLb[{u},{x}]")

    rate_up, rate_up_val = {}, {}
    for x in up_w:
        gains = channels.oru_flu_gains(k, x)
        for u in range(U):
            bb = scenario.flu_cell[u]
            for r in range(R):
                sig_m = gains[bb, u] * p_flu[u] * pow_up[(u, r, x)]
                sig_v = gains[bb, u] * p_flu[u] * powu0[(u, r, x)]
                interf = [gains[bb, u2] * p_flu[u2] * pow_up[(u2, r, x)]
                          for u2 in range(U) if u2 != u]
                int_v = sum(gains[bb, u2] * p_flu[u2] * powu0[(u2, r, x)]
                            for u2 in range(U) if u2 != u)
                rr, rv = _rate_stack(bld, f"up[{u},{r},{x}]", sig_m, sig_v,
                                     interf, int_v, noise_l, C)
                rate_up[(u, r, x)] = rr
                rate_up_val[(u, r, x)] = rv

    tau_up, tau_up_val = {}, {}
    for u in range(U):
        ledger_expr, ledger_val = None, 0.0
        parts, part_vals = [], []
        air = []
        for xi, x in enumerate(up_w):
            dtv, dtv0 = spacing(x)
            per_r, per_r_val = [], []
            for r in range(R):
                tch_val = max(payload - ledger_val, 1.0) * psiu0[(u, r, x)] \
                    / (bw_l * rate_up_val[(u, r, x)] + 0.005)
                tch = v(f"tchU[{u},{r},{x}]", tch_val)
                f_side = tch * rate_up[(u, r, x)] * bw_l + tch
                if ledger_expr is not None:
                    f_side = f_side + ledger_expr * psi_up[(u, r, x)]
                bld.split_eq(f_side, payload * psi_up[(u, r, x)]
                             + tch * beta_up[(u, x)], f"tchUdef[{u},{r},{x}]")
                tm = _softmin_aux(bld, f"TU[{u},{r},{x}]", [tch, dtv],
                                  [tch_val, dtv0], p, eps)
                tmv = min(tch_val, dtv0)
                per_r.append(tm)
                per_r_val.append(tmv)
                air.append((tm, rate_up[(u, r, x)], pow_up[(u, r, x)]))
            if xi < len(up_w) - 1:
                inc = Posynomial([tm * rate_up[(u, r, x)] * bw_l
                                  for r, tm in enumerate(per_r)])
                inc_val = sum(tmv * rate_up_val[(u, r, x)] * bw_l
                              for r, tmv in enumerate(per_r_val))
                led = v(f"MU[{u},{x}]", max(ledger_val + inc_val, 1.0))
                bld.split_eq(led, inc if ledger_expr is None
                             else ledger_expr + inc, f"MUdef[{u},{x}]")
                ledger_expr = Posynomial.from_obj(led)
                ledger_val += inc_val
            sx = _softmax_aux(bld, f"SU[{u},{x}]", per_r, per_r_val, p)
            parts.append(sx)
            part_vals.append(max(per_r_val))
        tuv = sum(part_vals)
        tu = v(f"tauU[{u}]", tuv)
        if len(parts) == 1:
            bld.mono_eq(tu * parts[0] ** -1.0, f"tauUdef[{u}]")
        else:
            bld.split_eq(tu, Posynomial(parts), f"tauUdef[{u}]")
        tau_up[u], tau_up_val[u] = tu, tuv
        bld.leq((payload * kappa) * lam[u],
                Posynomial([tm * rr * bw_l for tm, rr, _ in air]),
                f"deliverU[{u}]")
        energy_terms.append(Posynomial(
            [lam[u] * tm * pw * p_flu[u] for tm, _, pw in air]
            + [lam[u] * freq[u] ** 3.0 * tau_lc[u] * (cap[u] / 2.0)]))

    # =================== events, windows, completion ========================
    psi_d2d_s, psi_d2d_e, psi_up_s = {}, {}, {}
    m_aux, m_val = {}, {}
    d_chain, d_chain_val = {}, {}
    for u in range(U):
        bb = scenario.flu_cell[u]
        v1 = tau_dn_val[bb] + tau_lc_val[u]
        s1 = v(f"PsiBs[{u}]", v1)
        bld.split_eq(s1, base + tau_dn[bb] + tau_lc[u], f"PsiBsdef[{u}]")
        psi_d2d_s[u] = (s1, v1)
        if tau_d2d[u] is not None:
            v2 = v1 + tau_d2d_val[u]
            s2 = v(f"PsiBe[{u}]", v2)
            bld.split_eq(s2, s1 + tau_d2d[u], f"PsiBedef[{u}]")
            psi_d2d_e[u] = (s2, v2)
        wait_args = ([tau_lc[u]] if tau_wait[u] is None
                     else [tau_lc[u], tau_wait[u]])
        wait_vals = ([tau_lc_val[u]] if tau_wait[u] is None
                     else [tau_lc_val[u], tau_wait_val[u]])
        m_aux[u] = _softmax_aux(bld, f"mLCW[{u}]", wait_args, wait_vals, p)
        m_val[u] = (sum(val ** p for val in wait_vals)) ** (1.0 / p)
        v3 = tau_dn_val[bb] + m_val[u]
        s3 = v(f"PsiUs[{u}]", v3)
        bld.split_eq(s3, base + tau_dn[bb] + m_aux[u], f"PsiUsdef[{u}]")
        psi_up_s[u] = (s3, v3)
        dv = tau_dn_val[bb] + m_val[u] + tau_up_val[u]
        dd = v(f"Dup[{u}]", dv)
        bld.split_eq(dd, tau_dn[bb] + m_aux[u] + tau_up[u], f"Dupdef[{u}]")
        d_chain[u], d_chain_val[u] = dd, dv

    x_d2d0, x_up0 = d2d_w[0], up_w[0]
    for bb in range(B_):
        if scenario.cell_members(bb):
            bld.leq(base + tau_dn[bb], Posynomial.from_obj(t[x_d2d0]),
                    f"bcWindow[{bb}]")
    for u in range(U):
        bld.leq(psi_d2d_s[u][0], Posynomial.from_obj(t[x_d2d0]),
                f"d2dReady[{u}]")
        bld.leq(psi_up_s[u][0], Posynomial.from_obj(t[x_up0]),
                f"upReady[{u}]")

    # scheduling-window CNRs (the "active while inside the window" pairs;
    # the post-window exclusions are re-imposed by the rounding audit)
    for bb in range(B_):
        if not scenario.cell_members(bb):
            continue
        for x in bc_w:
            bld.cnr(((base + tau_dn[bb]) * lmax_cell[bb] * t[x] ** -1.0 - 1.0)
                    * (1.0 - beta_dn[(bb, x)]), f"sdc1[{bb},{x}]")
    for u in range(U):
        if tau_d2d[u] is None:
            continue
        s1, e1 = psi_d2d_s[u][0], psi_d2d_e[u][0]
        for x in d2d_w:
            ti = t[x] ** -1.0
            bld.cnr((lamb[u] * e1 * ti - 1.0) * (1.0 - lamb[u] * s1 * ti)
                    * (1.0 - beta_d2d[(u, x)]), f"sdc2f[{u},{x}]")
            bld.cnr((lamb[u] * s1 * ti - 1.0) * beta_d2d[(u, x)],
                    f"sdc2c1[{u},{x}]")
    for u in range(U):
        s3 = psi_up_s[u][0]
        e3 = Posynomial.from_obj(s3 + tau_up[u])
        for x in up_w:
            ti = t[x] ** -1.0
            bld.cnr((lam[u] * e3 * ti - 1.0) * (1.0 - lam[u] * s3 * ti)
                    * (1.0 - beta_up[(u, x)]), f"sdc3f[{u},{x}]")
            bld.cnr((lam[u] * s3 * ti - 1.0) * beta_up[(u, x)],
                    f"sdc3c1[{u},{x}]")

    dur = _softmax_aux(bld, "dur", [lam[u] * d_chain[u] for u in range(U)],
                       [lam0[u] * d_chain_val[u] for u in range(U)], p)
    dur_val = (sum((lam0[u] * d_chain_val[u]) ** p
                   for u in range(U))) ** (1.0 / p)
    total_latency = Posynomial.from_obj(dur)

    # =================== bound chain and sufficient conditions ==============
    ell_sum_val = ell0 * U
    ell_sum = v("ellSum", ell_sum_val)
    bld.split_eq(ell_sum, Posynomial(ell), "ellSumdef")
    ell_max = _softmax_aux(bld, "ellMax", ell, [ell0] * U, p)
    ell_max_val = ell0 * U ** (1.0 / p)
    eta_val = ecfg.alpha_step / math.sqrt(K * ell_sum_val / max(U, 1))
    eta = v("eta", eta_val)
    bld.mono_eq(eta * ell_sum ** 0.5
                * (math.sqrt(K / max(U, 1)) / ecfg.alpha_step), "etadef")
    elb_val = max(1.0 - 4.0 * eta_val ** 2 * params.smoothness ** 2
                  * ell_max_val ** 2, 0.05)
    elb = v("ellBar", elb_val, lo=1e-4, hi=1.0)
    bld.split_eq(elb + (4.0 * params.smoothness ** 2)
                 * (eta * eta * ell_max * ell_max), Monomial(1.0), "ellBardef")
    em1_val = max(ell_max_val - 1.0, 1e-3)
    em1 = v("ellM1", em1_val, lo=1e-6)
    bld.split_eq(em1 + 1.0, Posynomial.from_obj(ell_max), "ellM1def")
    tau_hat = []
    for u in range(U):
        thv = max(dur_val - lamhat0[u] * tau_lc_val[u], dur_val * 1e-3)
        th = v(f"tauHat[{u}]", thv)
        bld.split_eq(th + lam_hat[u] * tau_lc[u], Posynomial.from_obj(dur),
                     f"tauHatdef[{u}]")
        tau_hat.append(th)
    if ecfg.boost_mode == "verbatim":
        w_terms, w_vals = [], []
        for u in range(U):
            wv = ups_sel_val * ell0 / (lamhat0[u] * ups_u_val[u])
            ww = v(f"wB[{u}]", wv)
            bld.mono_eq(ww * lam_hat[u] * ups_u[u] * ups_sel ** -1.0
                        * ell[u] ** -1.0, f"wBdef[{u}]")
            w_terms.append(ww)
            w_vals.append(wv)
        boost = v("boost", sum(w_vals))
        bld.split_eq(boost, Posynomial(w_terms), "boostdef")
    else:
        sw_val = sum(lamhat0[u] * ups_u_val[u] / (ups_sel_val * ell0)
                     for u in range(U))
        sw = v("swB", sw_val)
        bld.split_eq(sw, Posynomial([lam_hat[u] * ups_u[u] * ups_sel ** -1.0
                                     * ell[u] ** -1.0 for u in range(U)]),
                     "swBdef")
        boost = v("boost", 1.0 / sw_val)
        bld.mono_eq(boost * sw, "boostdef")

    d_sum = float(drift.sum())
    if d_sum > 0:
        rhs = Posynomial(
            [drift[u] * (lam[u] * tau_lc[u]) for u in range(U)
             if drift[u] > 0]
            + [drift[u] * (lamb[u] * tau_lc[u]) for u in range(U)
               if drift[u] > 0]
            + [((1.0 - ecfg.zeta) * ecfg.vartheta ** k / 4.0) * (eta * boost)])
        bld.leq(d_sum * dur, rhs, "condL")
    bld.leq(gap * gap * (48.0 * ecfg.hetero_x1 / ecfg.zeta_hat)
            * ups_tot ** -1.0 * ups_min ** -1.0, name="condU1")
    bld.leq(gap * gap * (48.0 * ecfg.hetero_x2
                         / (ecfg.varpi ** k * (1.0 - ecfg.zeta)))
            * ups_tot ** -1.0 * ups_min ** -1.0 * elb ** -1.0, name="condU2")
    bld.leq(eta * (2.0 * params.smoothness), name="condEtaBox")
    bld.leq(eta * eta * ell_max * em1
            * (4.0 * params.smoothness ** 2
               * (2.0 * ecfg.hetero_x1 + ecfg.zeta)
               / (ecfg.zeta - ecfg.zeta_hat)), name="condEta")
    for u in range(U):
        bld.leq(sigb[u] * (sigma_cap[u] / ecfg.sigma_max) * ups_u[u] ** -1.0,
                name=f"condSigma[{u}]")

    phi_round_vars = [{
        "eta": eta, "inv_eta": eta ** -1.0, "boost": boost,
        "inv_boost": boost ** -1.0, "ell": ell,
        "inv_ell": [e ** -1.0 for e in ell],
        "varsigma_bar": sigb, "size": ups_u,
        "inv_size": [s ** -1.0 for s in ups_u],
        "recruited": lam_hat, "total": ups_tot,
        "inv_total": ups_tot ** -1.0, "inv_selected": ups_sel ** -1.0,
        "inv_minimum": ups_min ** -1.0, "gap": gap,
        "inv_ell_bar": elb ** -1.0, "ell_max": ell_max,
        "tau_hat": tau_hat,
    }]

    if len(bld.reg) > var_budget:
        raise ProblemSizeError(len(bld.reg), var_budget)

    # =================== objective ==========================================
    initial_loss = 1.0
    phi = phi_posynomial(params, initial_loss, K, max(U, 1), bld.reg,
                         phi_round_vars, drift, sigma_cap)
    total_energy = energy_terms[0]
    for term in energy_terms[1:]:
        total_energy = total_energy + term
    obj_terms = []
    if ecfg.weight_bound > 0:
        obj_terms.append(ecfg.weight_bound * phi)
    if ecfg.weight_latency > 0:
        obj_terms.append(ecfg.weight_latency * total_latency)
    if ecfg.weight_energy > 0:
        obj_terms.append(ecfg.weight_energy * total_energy)
    if not obj_terms:
        obj_terms.append(Posynomial.from_obj(1e-9 * total_latency))
    obj = Posynomial.from_obj(obj_terms[0])
    for term in obj_terms[1:]:
        obj = obj + term
    bld.prog.set_objective(obj)

    x0 = bld.x0()
    scale = obj.value(x0)
    weight = (ecfg.penalty_weight if ecfg.penalty_weight is not None
              else 1e3 * max(scale, 1e-6) / max(bld.n_split, 1))
    bld.prog.penalties = [(vid, weight) for vid, _ in bld.prog.penalties]

    return EncodedProblem(
        program=bld.prog, x0=x0, scenario=scenario, cfg=ecfg,
        windows=(bc_w, d2d_w, up_w),
        components={"phi": phi, "latency": total_latency,
                    "energy": total_energy},
        var_index=ix, constraint_count=dict(bld.count))


def _extract(enc: EncodedProblem, x: np.ndarray) -> DecisionVector:
    """Read the optimizer's point back into a full decision vector."""
    sc = enc.scenario
    B_, U = sc.n_orus, sc.n_flus
    R, Rb = sc.n_licensed_prbs, sc.n_unlicensed_prbs
    N = sc.fgtis_per_round
    ix = enc.var_index
    rounds = []
    for k in range(sc.rounds):
        def get(d, key, default=0.0):
            vid = ix[d].get((k,) + key)
            return float(x[vid]) if vid is not None else default

        rd = RoundDecisions(
            t=np.array([get("t", (xx,), float(xx + 1)) for xx in range(N)]),
            lam=np.array([get("lam", (u,)) for u in range(U)]),
            lam_bar=np.array([get("lam_bar", (u,)) for u in range(U)]),
            sgd_iters=np.array([get("ell", (u,), 1.0) for u in range(U)]),
            batch_frac=np.array([min(get("varsigma", (u,), 1.0), 1.0)
                                 for u in range(U)]),
            cpu_freq=np.array([get("freq", (u,), sc.flus[u].cpu_freq)
                               for u in range(U)]),
            beta_down=np.array([[get("beta_dn", (b, xx)) for xx in range(N)]
                                for b in range(B_)]),
            beta_d2d=np.array([[get("beta_d2d", (u, xx)) for xx in range(N)]
                               for u in range(U)]),
            beta_up=np.array([[get("beta_up", (u, xx)) for xx in range(N)]
                              for u in range(U)]),
            prb_d2d=np.array([[[[get("prb_d2d", (u, uh, r, xx))
                                 for xx in range(N)] for r in range(Rb)]
                               for uh in range(U)] for u in range(U)]),
            prb_up=np.array([[[get("prb_up", (u, r, xx)) for xx in range(N)]
                              for r in range(R)] for u in range(U)]),
            pow_down=np.array([[[get("pow_dn", (b, r, xx)) for xx in range(N)]
                                for r in range(R)] for b in range(B_)]),
            pow_d2d=np.array([[[get("pow_d2d", (u, r, xx)) for xx in range(N)]
                               for r in range(Rb)] for u in range(U)]),
            pow_up=np.array([[[get("pow_up", (u, r, xx)) for xx in range(N)]
                              for r in range(R)] for u in range(U)]),
            frac_down=np.array([[[get("phi_dn", (b, r, xx)) for xx in range(N)]
                                 for r in range(R)] for b in range(B_)]),
            frac_d2d=np.array([[[[get("psi_d2d", (u, uh, r, xx))
                                  for xx in range(N)] for r in range(Rb)]
                                for uh in range(U)] for u in range(U)]),
            frac_up=np.array([[[get("psi_up", (u, r, xx)) for xx in range(N)]
                               for r in range(R)] for u in range(U)]),
        )
        for xx in range(1, N):
            if rd.t[xx] <= rd.t[xx - 1]:
                rd.t[xx] = rd.t[xx - 1] * (1.0 + 1e-9) + 1e-12
        rounds.append(rd)
    return DecisionVector(rounds)
