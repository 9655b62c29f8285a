"""Communication/computation latencies and energies of one global round.

The three transfer latencies share one recursion: at each fine-granular
time instant the remaining payload is split over the assigned channels by
the transmission fractions, each chunk needs ``chunk / rate`` seconds, the
instant contributes ``min(slowest chunk, instant length)`` to the entity's
cumulative latency, and the delivered-bit ledger advances by ``airtime *
rate`` per channel.  Following the derivations, the recursion runs over
all but the final instant of the round's grid (the final instant has no
successor inside the grid); a payload still pending afterwards raises
``IncompleteTransmission`` with the remaining bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .airtime import FgtiRates
from .control import RoundDecisions
from .network import NetworkScenario

__all__ = [
    "IncompleteTransmission",
    "TransferResult",
    "cumulative_transfer",
    "compute_latency",
    "broadcast_latency",
    "dispersion_latency",
    "dispatch_latency",
    "waiting_time",
    "broadcast_energy",
    "compute_energy",
    "dispersion_energy",
    "dispatch_energy",
    "RoundMetrics",
]


class IncompleteTransmission(RuntimeError):
    def __init__(self, remaining_bits: float, entity: str):
        super().__init__(f"{entity}: {remaining_bits:.1f} bits undelivered "
                         "within the configured FGTIs")
        self.remaining_bits = remaining_bits


@dataclass
class TransferResult:
    latency: float                 # cumulative busy time, seconds
    delivered: float               # bits on the ledger at the end
    airtime: np.ndarray            # (n_channels, N) per-channel on-air time
    delivered_per: np.ndarray      # (n_channels, N) bits delivered per slot
    ledger: np.ndarray             # (N,) ledger value before each FGTI


def cumulative_transfer(payload: float, fractions: np.ndarray,
                        rates: np.ndarray, active: np.ndarray,
                        spacing: np.ndarray, entity: str = "transfer",
                        require_complete: bool = True) -> TransferResult:
    """Run the shared chunked-transfer recursion.

    ``fractions`` and ``rates`` are (n_channels, N); ``active`` (N,) gates
    whole instants; ``spacing`` (N,) is ``t_{x+1} - t_x``.  Completed
    payloads contribute zero from then on (the remaining-payload factor
    hits zero), so truncating at completion is exact.
    """
    n_ch, N = fractions.shape
    airtime = np.zeros((n_ch, N))
    delivered_per = np.zeros((n_ch, N))
    ledger = np.zeros(N)
    delivered = 0.0
    latency = 0.0
    for x in range(N):
        ledger[x] = delivered
        if not active[x]:
            continue
        remaining = payload - delivered
        if remaining <= payload * 1e-15:
            continue                      # completed: zero remaining factor
        targets = remaining * fractions[:, x]
        with np.errstate(divide="ignore", invalid="ignore"):
            chunk_tau = np.where(targets > 0.0,
                                 targets / np.where(rates[:, x] > 0.0,
                                                    rates[:, x], np.nan),
                                 0.0)
        chunk_tau = np.where(np.isnan(chunk_tau), np.inf, chunk_tau)
        on_air = np.minimum(chunk_tau, spacing[x])
        airtime[:, x] = on_air
        delivered_per[:, x] = on_air * rates[:, x]
        delivered += float(delivered_per[:, x].sum())
        latency += float(min(chunk_tau.max(initial=0.0), spacing[x]))
    remaining = payload - delivered
    if require_complete and remaining > max(1e-9, payload * 1e-9):
        raise IncompleteTransmission(remaining, entity)
    return TransferResult(latency=latency, delivered=min(delivered, payload),
                          airtime=airtime, delivered_per=delivered_per,
                          ledger=ledger)


def _usable_fgtis(rd: RoundDecisions) -> int:
    # all but the final grid instant; a single-instant grid keeps its one
    # slot with the median-extension spacing
    return rd.n_fgtis - 1 if rd.n_fgtis > 1 else 1


def compute_latency(sgd_iters: float, cycles_per_sample: float,
                    batch_size: float, cpu_freq: float) -> float:
    """Seconds to run the local SGD iterations on the mini-batch."""
    if cpu_freq <= 0:
        raise ValueError("cpu_freq must be positive")
    return sgd_iters * cycles_per_sample * batch_size / cpu_freq


def broadcast_latency(scenario: NetworkScenario, rd: RoundDecisions,
                      rates: list[FgtiRates], b: int,
                      payload: float) -> TransferResult:
    """Cumulative broadcast latency of radio unit b and its bit ledger."""
    N_use = _usable_fgtis(rd)
    spacing = rd.fgti_spacing()[:N_use]
    R = scenario.n_licensed_prbs
    frac = rd.frac_down[b, :, :N_use]
    rate = np.zeros((R, N_use))
    active = rd.beta_down[b, :N_use] > 0.5
    for x in range(N_use):
        if active[x]:
            rate[:, x] = rates[x].broadcast_rate_matrix()[b]
    if not active.any():
        return cumulative_transfer(payload, frac, rate,
                                   np.zeros(N_use, dtype=bool), spacing,
                                   require_complete=False)
    return cumulative_transfer(payload, frac, rate, active, spacing,
                               entity=f"broadcast[oru={b}]")


def dispersion_latency(scenario: NetworkScenario, rd: RoundDecisions,
                       rates: list[FgtiRates], u: int,
                       payload: float) -> TransferResult:
    """Feeder u's D2D transfer over (head, PRB) channels.

    Channel index ``uh * n_unlicensed_prbs + r`` keeps the airtime matrix
    addressable by the waiting-time computation.
    """
    N_use = _usable_fgtis(rd)
    spacing = rd.fgti_spacing()[:N_use]
    U, Rb = scenario.n_flus, scenario.n_unlicensed_prbs
    frac = rd.frac_d2d[u, :, :, :N_use].reshape(U * Rb, N_use)
    rate = np.zeros((U * Rb, N_use))
    active = (rd.beta_d2d[u, :N_use] > 0.5) & (rd.lam_bar[u] > 0.5)
    for x in range(N_use):
        if active[x]:
            rate[:, x] = rates[x].d2d_rate_matrix()[u].reshape(U * Rb)
    if not active.any():
        return cumulative_transfer(payload, frac, rate,
                                   np.zeros(N_use, dtype=bool), spacing,
                                   require_complete=False)
    return cumulative_transfer(payload, frac, rate, active, spacing,
                               entity=f"dispersion[flu={u}]")


def dispatch_latency(scenario: NetworkScenario, rd: RoundDecisions,
                     rates: list[FgtiRates], u: int,
                     payload: float) -> TransferResult:
    """Head u's licensed upload over its PRB channels."""
    N_use = _usable_fgtis(rd)
    spacing = rd.fgti_spacing()[:N_use]
    R = scenario.n_licensed_prbs
    frac = rd.frac_up[u, :, :N_use]
    rate = np.zeros((R, N_use))
    active = (rd.beta_up[u, :N_use] > 0.5) & (rd.lam[u] > 0.5)
    for x in range(N_use):
        if active[x]:
            rate[:, x] = rates[x].uplink_rate_matrix()[u]
    if not active.any():
        return cumulative_transfer(payload, frac, rate,
                                   np.zeros(N_use, dtype=bool), spacing,
                                   require_complete=False)
    return cumulative_transfer(payload, frac, rate, active, spacing,
                               entity=f"dispatch[flu={u}]")


def waiting_time(scenario: NetworkScenario, rd: RoundDecisions,
                 dispersions: dict[int, TransferResult],
                 tau_compute: np.ndarray, u_head: int) -> float:
    """Longest feeder chain into the head: compute plus D2D transfer.

    Only feeders that actually disperse bits toward ``u_head`` count; a
    head with no feeders waits zero.
    """
    Rb = scenario.n_unlicensed_prbs
    worst = 0.0
    found = False
    for u, res in dispersions.items():
        if u == u_head:
            continue
        rows = slice(u_head * Rb, (u_head + 1) * Rb)
        if res.delivered_per[rows].sum() <= 0.0:
            continue
        found = True
        per_x = res.airtime[rows].max(axis=0)   # max over PRBs per instant
        worst = max(worst, float(tau_compute[u] + per_x.sum()))
    return worst if found else 0.0


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def broadcast_energy(scenario: NetworkScenario, rd: RoundDecisions,
                     res: TransferResult, b: int) -> float:
    N_use = res.airtime.shape[1]
    p = scenario.orus[b].p_max
    return float((res.airtime * rd.pow_down[b, :, :N_use]).sum() * p)


def compute_energy(cpu_freq: float, tau_compute: float,
                   chipset_capacitance: float) -> float:
    """Dynamic CPU energy: f^3 * tau * alpha / 2."""
    return cpu_freq ** 3 * tau_compute * chipset_capacitance / 2.0


def dispersion_energy(scenario: NetworkScenario, rd: RoundDecisions,
                      res: TransferResult, u: int) -> float:
    N_use = res.airtime.shape[1]
    U, Rb = scenario.n_flus, scenario.n_unlicensed_prbs
    air = res.airtime.reshape(U, Rb, N_use)
    p = scenario.flus[u].p_max
    return float((air * rd.pow_d2d[u, :, :N_use][None, :, :]).sum() * p)


def dispatch_energy(scenario: NetworkScenario, rd: RoundDecisions,
                    res: TransferResult, u: int) -> float:
    N_use = res.airtime.shape[1]
    p = scenario.flus[u].p_max
    return float((res.airtime * rd.pow_up[u, :, :N_use]).sum() * p)


@dataclass
class RoundMetrics:
    """Per-round latencies, energies, and transfer ledgers."""

    k: int
    t_start: float
    t_end: float
    tau_down: np.ndarray           # (B,)
    tau_compute: np.ndarray        # (U,)
    tau_d2d: np.ndarray            # (U,)
    tau_up: np.ndarray             # (U,)
    tau_wait: np.ndarray           # (U,)
    e_down: np.ndarray             # (B,)
    e_compute: np.ndarray          # (U,)
    e_d2d: np.ndarray              # (U,)
    e_up: np.ndarray               # (U,)
    dataset_sizes: np.ndarray      # (U,) at the training snapshot
    batch_sizes: np.ndarray        # (U,)
    extras: dict = field(default_factory=dict)

    def total_energy(self) -> float:
        return float(self.e_down.sum() + self.e_compute.sum()
                     + self.e_d2d.sum() + self.e_up.sum())

    def duration(self) -> float:
        return self.t_end - self.t_start

    def csv_rows(self, seed: int) -> list[tuple]:
        rows = []
        for b, v in enumerate(self.tau_down):
            rows.append((seed, self.k, f"oru{b}", "tau_down_s", v))
        for b, v in enumerate(self.e_down):
            rows.append((seed, self.k, f"oru{b}", "e_down_j", v))
        per_flu = {
            "tau_compute_s": self.tau_compute, "tau_d2d_s": self.tau_d2d,
            "tau_up_s": self.tau_up, "tau_wait_s": self.tau_wait,
            "e_compute_j": self.e_compute, "e_d2d_j": self.e_d2d,
            "e_up_j": self.e_up, "dataset_size": self.dataset_sizes,
            "batch_size": self.batch_sizes,
        }
        for metric, arr in per_flu.items():
            for u, v in enumerate(arr):
                rows.append((seed, self.k, f"flu{u}", metric, v))
        rows.append((seed, self.k, "round", "duration_s", self.duration()))
        rows.append((seed, self.k, "round", "total_energy_j", self.total_energy()))
        return rows
