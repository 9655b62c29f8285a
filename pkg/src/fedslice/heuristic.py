"""Deterministic decision construction: phase timeline plus staggering.

Used both as the fixed-decision policy of the simulator and as the
feasible starting point of the successive-GP optimizer.  Each round's
grid is split into a broadcast window, a D2D window, and an upload
window; users are staggered round-robin over their window's instants so
that more instants mean fewer simultaneous co-channel transmitters.
"""

from __future__ import annotations

import math

import numpy as np

from .control import DecisionVector, RoundDecisions
from .network import NetworkScenario, prb_bandwidth

__all__ = ["assign_roles", "estimate_horizon", "window_slots",
           "build_round_decisions", "build_decisions"]


def assign_roles(scenario: NetworkScenario) -> tuple[np.ndarray, np.ndarray]:
    """Alternate head/feeder roles per cell; first member is always a head."""
    lam = np.zeros(scenario.n_flus)
    lam_bar = np.zeros(scenario.n_flus)
    for b in range(scenario.n_orus):
        for i, u in enumerate(scenario.cell_members(b)):
            if i % 2 == 0:
                lam[u] = 1.0
            else:
                lam_bar[u] = 1.0
    return lam, lam_bar


def estimate_horizon(scenario: NetworkScenario, payload: float,
                     sgd_iters: float, batch_guess: float) -> float:
    """Generous first guess of one round's wall-clock span."""
    bw = prb_bandwidth(scenario.licensed_numerology)
    d = max(scenario.placement_radius, 1.0)
    gain = 10.0 ** ((-30.0 - 30.0 * math.log10(d)) / 10.0) * 0.1
    p = min(f.p_max for f in scenario.flus) if scenario.n_flus else 0.5
    snr = gain * p / (bw * scenario.noise_psd)
    rate = bw * math.log2(1.0 + max(snr, 1e-3))
    t_comm = 3.0 * payload / rate          # three transfer phases
    f_min = min((f.cpu_freq for f in scenario.flus), default=1e9)
    a = scenario.flus[0].cycles_per_sample if scenario.n_flus else 4000.0
    t_comp = sgd_iters * a * batch_guess / f_min
    return 3.0 * (t_comm + t_comp)


def window_slots(n_fgtis: int) -> tuple[range, range, range]:
    """Split usable instants (all but the last) into the three phases."""
    usable = max(n_fgtis - 1, 1)
    n_bc = max(1, usable // 4)
    n_up = max(1, usable - n_bc - max(1, (usable - n_bc) // 2))
    n_d2d = max(usable - n_bc - n_up, 0)
    if n_d2d == 0 and usable >= 3:
        n_up -= 1
        n_d2d = 1
    bc = range(0, n_bc)
    d2d = range(n_bc, n_bc + n_d2d)
    up = range(n_bc + n_d2d, usable)
    return bc, d2d, up


def build_round_decisions(scenario: NetworkScenario, t_start: float,
                          horizon: float, lam: np.ndarray,
                          lam_bar: np.ndarray, sgd_iters: float,
                          batch_frac: float,
                          stagger: bool = True) -> RoundDecisions:
    B, U = scenario.n_orus, scenario.n_flus
    R, Rb = scenario.n_licensed_prbs, scenario.n_unlicensed_prbs
    N = scenario.fgtis_per_round
    dt = horizon / N
    t = t_start + dt * np.arange(N)
    bc, d2d, up = window_slots(N)

    rd = RoundDecisions(
        t=t, lam=lam.astype(float), lam_bar=lam_bar.astype(float),
        sgd_iters=np.full(U, float(sgd_iters)),
        batch_frac=np.full(U, float(batch_frac)),
        cpu_freq=np.array([f.cpu_freq for f in scenario.flus]),
        beta_down=np.zeros((B, N)), beta_d2d=np.zeros((U, N)),
        beta_up=np.zeros((U, N)),
        prb_d2d=np.zeros((U, U, Rb, N)), prb_up=np.zeros((U, R, N)),
        pow_down=np.zeros((B, R, N)), pow_d2d=np.zeros((U, Rb, N)),
        pow_up=np.zeros((U, R, N)),
        frac_down=np.zeros((B, R, N)), frac_d2d=np.zeros((U, U, Rb, N)),
        frac_up=np.zeros((U, R, N)),
    )

    # staggering: with more instants in a window, fewer entities transmit
    # simultaneously on the shared PRBs, cutting co-channel interference
    for b in range(B):
        if any(lam[u] + lam_bar[u] > 0 for u in scenario.cell_members(b)):
            for x in bc:
                rd.beta_down[b, x] = 1.0
                rd.pow_down[b, :, x] = 1.0 / R
                rd.frac_down[b, :, x] = 1.0 / R

    feeders = [u for u in range(U) if lam_bar[u] > 0]
    for i, u in enumerate(feeders):
        slots = ([list(d2d)[i % len(d2d)]] if stagger and len(d2d) > 1
                 else list(d2d))
        heads = [v for v in scenario.cell_members(scenario.flu_cell[u])
                 if lam[v] > 0]
        if not heads or not slots:
            continue
        n_ch = len(heads) * Rb
        for x in slots:
            rd.beta_d2d[u, x] = 1.0
            rd.pow_d2d[u, :, x] = 1.0 / Rb
            for v in heads:
                rd.prb_d2d[u, v, :, x] = 1.0
                rd.frac_d2d[u, v, :, x] = 1.0 / n_ch

    heads = [u for u in range(U) if lam[u] > 0]
    for i, u in enumerate(heads):
        slots = ([list(up)[i % len(up)]] if stagger and len(up) > 1
                 else list(up))
        for x in slots:
            rd.beta_up[u, x] = 1.0
            rd.prb_up[u, :, x] = 1.0
            rd.pow_up[u, :, x] = 1.0 / R
            rd.frac_up[u, :, x] = 1.0 / R
    return rd


def build_decisions(scenario: NetworkScenario, payload: float,
                    sgd_iters: float, batch_frac: float,
                    stagger: bool = True,
                    horizon: float | None = None) -> DecisionVector:
    """Fixed-policy decisions for every round (identical phase layout).

    Round k's grid starts where round k-1's grid ended; the simulator
    retries with a doubled horizon if a payload does not complete.
    """
    lam, lam_bar = assign_roles(scenario)
    batch_guess = float(np.mean([f.initial_dataset_size
                                 for f in scenario.flus])) * batch_frac \
        if scenario.n_flus else 1.0
    h = horizon if horizon is not None else estimate_horizon(
        scenario, payload, sgd_iters, batch_guess)
    rounds = []
    t0 = 0.0
    for _k in range(scenario.rounds):
        rd = build_round_decisions(scenario, t0, h, lam, lam_bar,
                                   sgd_iters, batch_frac, stagger=stagger)
        rounds.append(rd)
        t0 += h
    return DecisionVector(rounds)
