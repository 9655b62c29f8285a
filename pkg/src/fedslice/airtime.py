"""SINR and achievable rates for the three communication modes.

R2F: radio unit to user (licensed downlink, broadcast at the minimum rate
over the recruited users).  C2R: head user to radio unit (licensed
uplink).  D2C: feeder user to head user (unlicensed D2D).  All functions
are pure; scalar forms mirror the per-link equations and ``FgtiRates``
evaluates whole matrices for one fine-granular time instant.
"""

from __future__ import annotations

import numpy as np

from .control import RoundDecisions
from .network import ChannelState, NetworkScenario

__all__ = [
    "SINR_CAP",
    "sinr",
    "shannon_rate",
    "FgtiRates",
]

SINR_CAP = 1e12


def sinr(gain_signal: float, power_signal: float, gains_interf,
         powers_interf, bandwidth: float, noise_psd: float) -> float:
    """Generic SINR with the cap that guards downstream exponents."""
    interference = float(np.dot(np.asarray(gains_interf, dtype=float),
                                np.asarray(powers_interf, dtype=float)))
    g = gain_signal * power_signal / (interference + bandwidth * noise_psd)
    return min(g, SINR_CAP)


def shannon_rate(bandwidth: float, gamma: float) -> float:
    """bits/s over one PRB: B log2(1 + SINR)."""
    return bandwidth * np.log2(1.0 + min(gamma, SINR_CAP))


class FgtiRates:
    """All link rates of one FGTI under the given decisions.

    Effective transmit powers fold the schedule and recruitment gates in,
    so an unscheduled entity neither transmits nor interferes.
    """

    def __init__(self, scenario: NetworkScenario, channels: ChannelState,
                 rd: RoundDecisions, k: int, x: int):
        self.sc = scenario
        self.rd = rd
        self.x = x
        self.g_of = channels.oru_flu_gains(k, x)      # (B, U)
        self.g_ff = channels.flu_flu_gains(k, x)      # (U, U)
        B, U = scenario.n_orus, scenario.n_flus
        p_oru = np.array([o.p_max for o in scenario.orus])
        p_flu = np.array([f.p_max for f in scenario.flus])
        lam_hat = rd.recruited()
        # (B, R): downlink power actually radiated per PRB
        self.p_down = rd.pow_down[:, :, x] * rd.beta_down[:, x][:, None] * p_oru[:, None]
        # (U, R): licensed uplink power of scheduled heads
        up_gate = rd.beta_up[:, x] * (rd.lam > 0.5)
        self.p_up = rd.pow_up[:, :, x] * up_gate[:, None] * p_flu[:, None]
        # (U, Rbar): unlicensed power of scheduled feeders
        d2d_gate = rd.beta_d2d[:, x] * (rd.lam_bar > 0.5)
        self.p_d2d = rd.pow_d2d[:, :, x] * d2d_gate[:, None] * p_flu[:, None]
        self.lam_hat = lam_hat
        self.bw_l = scenario.licensed_bandwidth
        self.bw_u = scenario.unlicensed_bandwidth
        self.noise_l = self.bw_l * scenario.noise_psd
        self.noise_u = self.bw_u * scenario.noise_psd

    # -- R2F ---------------------------------------------------------------

    def sinr_downlink(self, b: int, u: int, r: int) -> float:
        sig = self.g_of[b, u] * self.p_down[b, r]
        if sig == 0.0:
            return 0.0
        interf = float(self.g_of[:, u] @ self.p_down[:, r]) - sig
        return min(sig / (interf + self.noise_l), SINR_CAP)

    def rate_downlink(self, b: int, u: int, r: int) -> float:
        return shannon_rate(self.bw_l, self.sinr_downlink(b, u, r))

    def broadcast_rate(self, b: int, r: int) -> float:
        """Minimum downlink rate over the recruited users of cell b.

        Zero when the radio unit is not scheduled; raises if it is
        scheduled with nobody recruited.
        """
        if self.rd.beta_down[b, self.x] <= 0.5:
            return 0.0
        members = [u for u in self.sc.cell_members(b) if self.lam_hat[u] > 0.5]
        if not members:
            raise ValueError(f"O-RU {b} scheduled to broadcast with no recruited FLU")
        return min(self.rate_downlink(b, u, r) for u in members)

    # -- C2R ---------------------------------------------------------------

    def sinr_uplink(self, u: int, r: int) -> float:
        b = self.sc.flu_cell[u]
        sig = self.g_of[b, u] * self.p_up[u, r]
        if sig == 0.0:
            return 0.0
        interf = float(self.g_of[b, :] @ self.p_up[:, r]) - sig
        return min(sig / (interf + self.noise_l), SINR_CAP)

    def rate_uplink(self, u: int, r: int) -> float:
        return shannon_rate(self.bw_l, self.sinr_uplink(u, r))

    # -- D2C ---------------------------------------------------------------

    def sinr_d2d(self, u: int, u_head: int, r: int) -> float:
        sig = self.g_ff[u, u_head] * self.p_d2d[u, r]
        if sig == 0.0:
            return 0.0
        interf = float(self.g_ff[:, u_head] @ self.p_d2d[:, r])
        interf -= sig + self.g_ff[u_head, u_head] * self.p_d2d[u_head, r]
        return min(sig / (max(interf, 0.0) + self.noise_u), SINR_CAP)

    def rate_d2d(self, u: int, u_head: int, r: int) -> float:
        return shannon_rate(self.bw_u, self.sinr_d2d(u, u_head, r))

    # -- matrices for the latency recursions --------------------------------

    def broadcast_rate_matrix(self) -> np.ndarray:
        """(B, R) broadcast rates; zero rows where unscheduled."""
        B, R = self.sc.n_orus, self.sc.n_licensed_prbs
        out = np.zeros((B, R))
        for b in range(B):
            if self.rd.beta_down[b, self.x] > 0.5:
                for r in range(R):
                    out[b, r] = self.broadcast_rate(b, r)
        return out

    def uplink_rate_matrix(self) -> np.ndarray:
        U, R = self.sc.n_flus, self.sc.n_licensed_prbs
        out = np.zeros((U, R))
        for u in range(U):
            if self.p_up[u].any():
                for r in range(R):
                    out[u, r] = self.rate_uplink(u, r)
        return out

    def d2d_rate_matrix(self) -> np.ndarray:
        """(U, U, Rbar) feeder-to-head rates; zero where not transmitting."""
        U, Rb = self.sc.n_flus, self.sc.n_unlicensed_prbs
        out = np.zeros((U, U, Rb))
        for u in range(U):
            if not self.p_d2d[u].any():
                continue
            for uh in range(U):
                if uh == u:
                    continue
                for r in range(Rb):
                    out[u, uh, r] = self.rate_d2d(u, uh, r)
        return out
