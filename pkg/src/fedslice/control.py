"""Control decisions, discrete-event times, and constraint residuals.

The decision vector carries every control variable of the orchestration
problem, per round: recruitment indicators (relaxed to [0, 1] during
optimization), SGD counts, mini-batch fractions, CPU frequencies, and the
per-FGTI schedules, PRB assignments, power fractions, and transmission
fractions.  ``constraint_residuals`` evaluates every scheduling /
allocation / transmission constraint as ``max(0, lhs - rhs)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkScenario

__all__ = [
    "RoundDecisions",
    "DecisionVector",
    "DEventTimes",
    "devent_times",
    "round_completion",
    "ResidualReport",
    "constraint_residuals",
    "round_and_repair",
]

_EPS = 1e-6


@dataclass
class RoundDecisions:
    """All decisions of one global round (arrays indexed [entity..., fgti])."""

    t: np.ndarray                 # (N,) FGTI times, strictly increasing
    lam: np.ndarray               # (U,) CHU recruitment
    lam_bar: np.ndarray           # (U,) DPU recruitment
    sgd_iters: np.ndarray         # (U,)
    batch_frac: np.ndarray        # (U,) in (0, 1]
    cpu_freq: np.ndarray          # (U,) Hz
    beta_down: np.ndarray         # (B, N)
    beta_d2d: np.ndarray          # (U, N)
    beta_up: np.ndarray           # (U, N)
    prb_d2d: np.ndarray           # (U, U, Rbar, N)  dpu -> chu
    prb_up: np.ndarray            # (U, R, N)
    pow_down: np.ndarray          # (B, R, N)
    pow_d2d: np.ndarray           # (U, Rbar, N)
    pow_up: np.ndarray            # (U, R, N)
    frac_down: np.ndarray         # (B, R, N)
    frac_d2d: np.ndarray          # (U, U, Rbar, N)
    frac_up: np.ndarray           # (U, R, N)

    @property
    def n_fgtis(self) -> int:
        return len(self.t)

    def recruited(self) -> np.ndarray:
        return self.lam + self.lam_bar

    def fgti_spacing(self) -> np.ndarray:
        """Delta_x including the successor of the final FGTI.

        The final spacing uses the median spacing of the round (the grid
        only promises a successor strictly after the last FGTI).
        """
        if len(self.t) == 1:
            return np.array([1.0])
        d = np.diff(self.t)
        return np.concatenate([d, [float(np.median(d))]])

    def copy(self) -> "RoundDecisions":
        return RoundDecisions(**{k: np.array(getattr(self, k))
                                 for k in self.__dataclass_fields__})


@dataclass
class DecisionVector:
    rounds: list[RoundDecisions]

    def validate(self, scenario: NetworkScenario) -> None:
        B, U = scenario.n_orus, scenario.n_flus
        R, Rb = scenario.n_licensed_prbs, scenario.n_unlicensed_prbs
        for k, rd in enumerate(self.rounds):
            N = rd.n_fgtis
            shapes = {
                "t": (N,), "lam": (U,), "lam_bar": (U,), "sgd_iters": (U,),
                "batch_frac": (U,), "cpu_freq": (U,),
                "beta_down": (B, N), "beta_d2d": (U, N), "beta_up": (U, N),
                "prb_d2d": (U, U, Rb, N), "prb_up": (U, R, N),
                "pow_down": (B, R, N), "pow_d2d": (U, Rb, N),
                "pow_up": (U, R, N), "frac_down": (B, R, N),
                "frac_d2d": (U, U, Rb, N), "frac_up": (U, R, N),
            }
            for name, want in shapes.items():
                got = getattr(rd, name).shape
                if got != want:
                    raise ValueError(f"round {k}: {name} has shape {got}, expected {want}")
            if np.any(np.diff(rd.t) <= 0):
                raise ValueError(f"round {k}: FGTI times must be strictly increasing")

    def to_json(self) -> str:
        payload = []
        for rd in self.rounds:
            payload.append({k: np.asarray(getattr(rd, k)).tolist()
                            for k in rd.__dataclass_fields__})
        return json.dumps({"schema": "decision-vector/1", "rounds": payload},
                          sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DecisionVector":
        doc = json.loads(text)
        rounds = [RoundDecisions(**{k: np.array(v, dtype=float)
                                    for k, v in blk.items()})
                  for blk in doc["rounds"]]
        return DecisionVector(rounds)


@dataclass
class DEventTimes:
    """Occurrence times of the six communication-task events, per FLU."""

    t_start: float                   # T^(k-1)
    download_start: np.ndarray       # (U,)
    download_end: np.ndarray
    d2d_start: np.ndarray
    d2d_end: np.ndarray
    upload_start: np.ndarray
    upload_end: np.ndarray


def devent_times(t_start: float, tau_down_cell: np.ndarray,
                 tau_compute: np.ndarray, tau_d2d: np.ndarray,
                 tau_wait: np.ndarray, tau_up: np.ndarray) -> DEventTimes:
    """Chain the event times of one round from the latency outputs.

    ``tau_down_cell`` is the broadcast latency of each FLU's own O-RU; the
    upload of a head FLU starts after both its local training and the wait
    for all of its feeder uploads complete.
    """
    for name, arr in (("tau_down", tau_down_cell), ("tau_compute", tau_compute),
                      ("tau_d2d", tau_d2d), ("tau_wait", tau_wait),
                      ("tau_up", tau_up)):
        if np.any(np.asarray(arr) < 0):
            raise ValueError(f"{name} contains negative latencies")
    down_end = t_start + tau_down_cell
    d2d_start = down_end + tau_compute
    d2d_end = d2d_start + tau_d2d
    up_start = down_end + np.maximum(tau_compute, tau_wait)
    up_end = up_start + tau_up
    return DEventTimes(
        t_start=t_start,
        download_start=np.full_like(down_end, t_start),
        download_end=down_end,
        d2d_start=d2d_start,
        d2d_end=d2d_end,
        upload_start=up_start,
        upload_end=up_end,
    )


def round_completion(t_start: float, lam: np.ndarray,
                     tau_down_cell: np.ndarray, tau_compute: np.ndarray,
                     tau_wait: np.ndarray, tau_up: np.ndarray) -> float:
    """Completion time of the round; empty max convention gives T^(k-1)."""
    lam = np.asarray(lam, dtype=float)
    dur = tau_down_cell + np.maximum(tau_compute, tau_wait) + tau_up
    masked = lam * dur
    return float(t_start + (masked.max() if masked.size else 0.0))


# ---------------------------------------------------------------------------
# constraint residuals
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    residuals: dict[str, float] = field(default_factory=dict)

    def record(self, name: str, value: float) -> None:
        v = max(0.0, float(value))
        if v > self.residuals.get(name, 0.0):
            self.residuals[name] = v
        elif name not in self.residuals:
            self.residuals[name] = v

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def feasible(self, tol: float = 1e-6) -> bool:
        return self.max_residual() <= tol

    def violations(self, tol: float = 1e-6) -> dict[str, float]:
        return {k: v for k, v in self.residuals.items() if v > tol}


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def constraint_residuals(scenario: NetworkScenario, rd: RoundDecisions,
                         events: DEventTimes) -> ResidualReport:
    """Evaluate every control-coupling constraint of one round.

    Residuals are ``max(0, lhs - rhs)``; the vector is feasible when every
    residual is below tolerance.  Boundary conventions: schedules must be
    exactly 0 when an FGTI coincides with a window edge.
    """
    rep = ResidualReport()
    U = scenario.n_flus
    t0 = events.t_start
    lam, lam_bar = rd.lam, rd.lam_bar
    lam_hat = rd.recruited()
    t = rd.t
    N = rd.n_fgtis

    # recruitment exclusivity and batch-fraction boxes
    rep.record("recruitment_exclusive", float((lam + lam_bar - 1.0).max(initial=0.0)))
    if U:
        rep.record("batch_frac_box", float(max((rd.batch_frac - 1.0).max(),
                                               (1e-12 - rd.batch_frac).max())))

    for b in range(scenario.n_orus):
        members = scenario.cell_members(b)
        max_lam_hat = max((lam_hat[u] for u in members), default=0.0)
        tau_edge = events.download_end[members[0]] if members else t0
        for x in range(N):
            beta = rd.beta_down[b, x]
            tx = max(t[x], 1e-12)        # the grid may start at exactly zero
            # broadcast window CNR pair
            a_term = (tau_edge / tx) * max_lam_hat - 1.0
            rep.record("sdc1_forward", a_term * (1.0 - beta))
            rep.record("sdc1_complement",
                       (1.0 - (tau_edge / tx) * max_lam_hat) * beta)
            if _near(t[x], tau_edge):
                rep.record("sdc1_boundary", beta)
            # power/fraction coupling with the broadcast schedule
            for r in range(scenario.n_licensed_prbs):
                rep.record("pow_down_coupling", rd.pow_down[b, r, x] - beta)
                rep.record("pow_down_strict", (beta - rd.pow_down[b, r, x]) - (1.0 - _EPS))
                rep.record("frac_down_coupling", rd.frac_down[b, r, x] - beta)
                rep.record("frac_down_strict", (beta - rd.frac_down[b, r, x]) - (1.0 - _EPS))
            rep.record("pow_down_budget", rd.pow_down[b, :, x].sum() - 1.0)
            if beta > 0.5:
                rep.record("frac_down_sum", abs(rd.frac_down[b, :, x].sum() - 1.0))

    for u in range(U):
        b = scenario.flu_cell[u]
        peers = scenario.cell_members(b)
        up_s, up_e = events.upload_start[u], events.upload_end[u]
        d2d_s, d2d_e = events.d2d_start[u], events.d2d_end[u]
        for x in range(N):
            tx = max(t[x], 1e-12)
            bb, bu = rd.beta_d2d[u, x], rd.beta_up[u, x]
            # feeder-upload window CNR pair
            fwd = ((lam_bar[u] * d2d_e / tx - 1.0)
                   * (1.0 - lam_bar[u] * d2d_s / tx) * (1.0 - bb))
            rep.record("sdc2_forward", fwd)
            comp = max(lam_bar[u] * d2d_s / tx - 1.0,
                       1.0 - lam_bar[u] * d2d_e / tx) * bb
            rep.record("sdc2_complement", comp)
            if _near(tx, d2d_s) or _near(tx, d2d_e):
                rep.record("sdc2_boundary", bb)
            # head-upload window CNR pair
            fwd = ((lam[u] * up_e / tx - 1.0)
                   * (1.0 - lam[u] * up_s / tx) * (1.0 - bu))
            rep.record("sdc3_forward", fwd)
            comp = max(lam[u] * up_s / tx - 1.0,
                       1.0 - lam[u] * up_e / tx) * bu
            rep.record("sdc3_complement", comp)
            if _near(tx, up_s) or _near(tx, up_e):
                rep.record("sdc3_boundary", bu)

            for r in range(scenario.n_licensed_prbs):
                rep.record("prb_up_coupling",
                           rd.prb_up[u, r, x] - min(lam[u], bu))
                rep.record("pow_up_coupling", rd.pow_up[u, r, x] - rd.prb_up[u, r, x])
                rep.record("pow_up_strict",
                           (rd.prb_up[u, r, x] - rd.pow_up[u, r, x]) - (1.0 - _EPS))
                rep.record("frac_up_coupling", rd.frac_up[u, r, x] - rd.prb_up[u, r, x])
                rep.record("frac_up_strict",
                           (rd.prb_up[u, r, x] - rd.frac_up[u, r, x]) - (1.0 - _EPS))
            rep.record("pow_up_budget", rd.pow_up[u, :, x].sum() - 1.0)
            rep.record("pow_d2d_budget", rd.pow_d2d[u, :, x].sum() - 1.0)
            if bu > 0.5 and lam[u] > 0.5:
                rep.record("frac_up_sum", abs(rd.frac_up[u, :, x].sum() - 1.0))
            if bb > 0.5 and lam_bar[u] > 0.5:
                rep.record("frac_d2d_sum", abs(rd.frac_d2d[u, :, :, x].sum() - 1.0))

            for up in peers:
                for r in range(scenario.n_unlicensed_prbs):
                    q = rd.prb_d2d[u, up, r, x]
                    rep.record("prb_d2d_coupling",
                               q - min(lam_bar[u], bb, lam[up]))
                    rep.record("prb_d2d_head_busy",
                               q + rd.beta_up[up, :x + 1].max(initial=0.0) - 1.0)
                    rep.record("frac_d2d_coupling", rd.frac_d2d[u, up, r, x] - q)
                    rep.record("frac_d2d_strict",
                               (q - rd.frac_d2d[u, up, r, x]) - (1.0 - _EPS))
            # no self-dispersion
            rep.record("no_self_dispersion",
                       max(rd.prb_d2d[u, u, :, x].max(initial=0.0),
                           rd.frac_d2d[u, u, :, x].max(initial=0.0)))
            for r in range(scenario.n_unlicensed_prbs):
                rep.record("pow_d2d_coupling",
                           rd.pow_d2d[u, r, x] - rd.prb_d2d[u, :, r, x].max(initial=0.0))
                rep.record("pow_d2d_strict",
                           (rd.prb_d2d[u, :, r, x].max(initial=0.0)
                            - rd.pow_d2d[u, r, x]) - (1.0 - _EPS))

        # every recruited head must have at least one feeder dispersing to
        # it while any of its feeders is mid-dispersion (before the head's
        # own upload starts); outside those spans the requirement is moot
        if lam[u] > 0.5:
            feeders = [v for v in peers
                       if lam_bar[v] > 0.5 and v != u
                       and rd.prb_d2d[v, u].sum() > 0]
            for x in range(N):
                if t[x] >= up_s:
                    continue
                live = any(events.d2d_start[v] < t[x] < events.d2d_end[v]
                           for v in feeders)
                if live:
                    rep.record("d2d_cover_head",
                               1.0 - rd.prb_d2d[:, u, :, x].sum())

    # R2F and C2R never overlap: all broadcasts end before any head upload
    heads = [u for u in range(U) if lam[u] > 0.5]
    if heads:
        first_upload = min(events.upload_start[u] for u in heads)
        for b in range(scenario.n_orus):
            members = scenario.cell_members(b)
            if members:
                rep.record("r2f_c2r_ordering",
                           events.download_end[members[0]] - first_upload)

    # FGTI ordering
    if N > 1:
        rep.record("fgti_ordering", float((-np.diff(t)).max()))
    return rep


def trim_schedules(rd: RoundDecisions, scenario: NetworkScenario,
                   events: DEventTimes) -> RoundDecisions:
    """Zero schedule mass outside the realized transfer windows.

    Instants outside an entity's (start, end) window contribute nothing to
    its transfer (the payload is either not yet sendable or already
    delivered), so trimming leaves every latency/energy metric unchanged
    while making the window-exclusion constraints hold exactly.
    """
    out = rd.copy()
    U = scenario.n_flus
    for b in range(scenario.n_orus):
        members = scenario.cell_members(b)
        if not members:
            continue
        end = events.download_end[members[0]]
        for x in range(out.n_fgtis):
            if not (events.t_start <= out.t[x] < end - 1e-15):
                out.beta_down[b, x] = 0.0
                out.pow_down[b, :, x] = 0.0
                out.frac_down[b, :, x] = 0.0
    for u in range(U):
        for x in range(out.n_fgtis):
            t = out.t[x]
            if out.lam_bar[u] > 0.5:
                if not (events.d2d_start[u] <= t < events.d2d_end[u] - 1e-15):
                    out.beta_d2d[u, x] = 0.0
                    out.prb_d2d[u, :, :, x] = 0.0
                    out.frac_d2d[u, :, :, x] = 0.0
                    out.pow_d2d[u, :, x] = 0.0
            else:
                out.beta_d2d[u, x] = 0.0
                out.prb_d2d[u, :, :, x] = 0.0
                out.frac_d2d[u, :, :, x] = 0.0
                out.pow_d2d[u, :, x] = 0.0
            if out.lam[u] > 0.5:
                if not (events.upload_start[u] <= t
                        < events.upload_end[u] - 1e-15):
                    out.beta_up[u, x] = 0.0
                    out.prb_up[u, :, x] = 0.0
                    out.frac_up[u, :, x] = 0.0
                    out.pow_up[u, :, x] = 0.0
            else:
                out.beta_up[u, x] = 0.0
                out.prb_up[u, :, x] = 0.0
                out.frac_up[u, :, x] = 0.0
                out.pow_up[u, :, x] = 0.0
    return out


def round_and_repair(rd: RoundDecisions, scenario: NetworkScenario,
                     threshold: float = 0.5) -> RoundDecisions:
    """Round relaxed binaries to {0, 1} and repair coupling violations.

    Recruitment picks the larger of (lam, lam_bar) when both round to one;
    feeders without any head in their cell are demoted to unrecruited, and
    schedules/PRBs inconsistent with recruitment are zeroed.
    """
    out = rd.copy()
    U = scenario.n_flus
    lam = (out.lam >= threshold).astype(float)
    lam_bar = (out.lam_bar >= threshold).astype(float)
    both = (lam + lam_bar) > 1.0
    keep_chu = out.lam >= out.lam_bar
    lam[both & ~keep_chu] = 0.0
    lam_bar[both & keep_chu] = 0.0
    for u in range(U):
        if lam_bar[u] == 1.0:
            peers = scenario.cell_members(scenario.flu_cell[u])
            if not any(lam[v] == 1.0 for v in peers if v != u):
                lam_bar[u] = 0.0          # greedy demotion: no head to feed
    out.lam, out.lam_bar = lam, lam_bar
    out.beta_down = (out.beta_down >= threshold).astype(float)
    out.beta_d2d = (out.beta_d2d >= threshold).astype(float) * lam_bar[:, None]
    out.beta_up = (out.beta_up >= threshold).astype(float) * lam[:, None]
    out.prb_d2d = (out.prb_d2d >= threshold).astype(float)
    out.prb_d2d *= lam_bar[:, None, None, None] * lam[None, :, None, None]
    out.prb_d2d *= out.beta_d2d[:, None, None, :]
    for u in range(U):
        out.prb_d2d[u, u] = 0.0
    out.prb_up = (out.prb_up >= threshold).astype(float)
    out.prb_up *= lam[:, None, None] * out.beta_up[:, None, :]
    out.sgd_iters = np.maximum(np.rint(out.sgd_iters), 0.0)
    # zero powers/fractions where the coupled assignment is off
    out.pow_down *= out.beta_down[:, None, :]
    out.frac_down *= out.beta_down[:, None, :]
    out.pow_up *= out.prb_up
    out.frac_up *= out.prb_up
    d2d_any = out.prb_d2d.max(axis=1)
    out.pow_d2d *= d2d_any
    out.frac_d2d *= out.prb_d2d
    # renormalize transmission fractions where active
    def _renorm(frac, axis):
        s = frac.sum(axis=axis, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            scaled = np.where(s > 0, frac / np.where(s > 0, s, 1.0), frac)
        return scaled
    out.frac_down = _renorm(out.frac_down, 1)
    out.frac_up = _renorm(out.frac_up, 1)
    U_axis = (1, 2)
    s = out.frac_d2d.sum(axis=U_axis, keepdims=True)
    out.frac_d2d = np.where(s > 0, out.frac_d2d / np.where(s > 0, s, 1.0),
                            out.frac_d2d)
    return out
