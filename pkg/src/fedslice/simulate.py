"""Round-loop simulation: latencies, energies, datasets, training, bound.

Rounds are sequential (each completion time anchors the next round's
dataset dynamics); everything within a round is a pure function of the
scenario, the decisions, and the per-round RNG streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import datasets as dyn
from . import latency as lat
from . import learning
from .airtime import FgtiRates
from .bound import BoundParams, RoundStats
from .config import ExperimentConfig
from .control import DecisionVector, DEventTimes, devent_times, round_completion
from .heuristic import build_decisions
from .network import NetworkScenario, build_scenario

__all__ = ["SimulationResult", "simulate", "run_rounds", "bound_params_from_config"]


@dataclass
class SimulationResult:
    metrics: list[lat.RoundMetrics]
    round_stats: list[RoundStats]
    events: list[DEventTimes]
    grad_norms: list[float]
    drift_margins: list[float]
    model: np.ndarray | None
    decisions: DecisionVector

    def total_latency(self) -> float:
        return self.metrics[-1].t_end if self.metrics else 0.0

    def total_energy(self) -> float:
        return sum(m.total_energy() for m in self.metrics)


def bound_params_from_config(cfg: ExperimentConfig,
                             scenario: NetworkScenario) -> BoundParams:
    theta = max((f.dissimilarity for f in scenario.flus), default=1.0)
    ell = max(1.0, float(cfg.sgd_iterations))
    return BoundParams(
        smoothness=cfg.smoothness, theta=theta, x1=cfg.hetero_x1,
        x2=cfg.hetero_x2, zeta=cfg.zeta, zeta_hat=cfg.zeta_hat,
        zeta_max=cfg.zeta, alpha_step=cfg.alpha_step,
        vartheta=cfg.vartheta, varpi=cfg.varpi, sigma_max=cfg.sigma_max,
        ell_hat_min=ell * max(scenario.n_flus, 1),
        ell_hat_max=ell * max(scenario.n_flus, 1),
    )


def _step_size(cfg: ExperimentConfig, scenario: NetworkScenario,
               sgd_iters: np.ndarray) -> float:
    if cfg.learning_rate is not None:
        return cfg.learning_rate
    ell_sum = max(float(sgd_iters.sum()), 1.0)
    n = max(scenario.n_flus, 1)
    return cfg.alpha_step / math.sqrt(scenario.rounds * ell_sum / n)


def _chunk_schedule(res: lat.TransferResult, scenario: NetworkScenario
                    ) -> list[tuple[int, int, int, float]]:
    """Delivered-bit shares as an exact gradient-partition schedule."""
    Rb = scenario.n_unlicensed_prbs
    total = res.delivered_per.sum()
    out = []
    if total <= 0:
        return out
    n_ch, N = res.delivered_per.shape
    for ch in range(n_ch):
        for x in range(N):
            bits = res.delivered_per[ch, x]
            if bits > 0:
                out.append((ch // Rb, ch % Rb, x, float(bits / total)))
    # exact renormalization against float drift
    s = sum(f for _, _, _, f in out)
    return [(a, b, c, f / s) for a, b, c, f in out]


def run_rounds(scenario: NetworkScenario, cfg: ExperimentConfig,
               decisions: DecisionVector,
               task: learning.SyntheticTask | None = None,
               sample_pools: list[np.ndarray] | None = None
               ) -> SimulationResult:
    """Execute every round under fixed decisions.

    ``task``/``sample_pools`` enable the training loop; without them the
    simulation reports latencies/energies/dataset stats only (the bound's
    loss term then needs the surrogate).
    """
    decisions.validate(scenario)
    channels = scenario.channels()
    payload = cfg.bits_per_element * cfg.model_dim
    U, B = scenario.n_flus, scenario.n_orus
    carry = np.array([f.initial_dataset_size for f in scenario.flus])
    growth_down = np.array([f.growth_down for f in scenario.flus])
    growth_up = np.array([f.growth_up for f in scenario.flus])
    drift_bounds = np.array([f.drift_bound for f in scenario.flus])

    model = np.zeros(task.dim) if task is not None else None
    metrics, stats_list, events_list = [], [], []
    grad_norms, drift_margins = [], []
    t_start = 0.0

    for k, rd in enumerate(decisions.rounds):
        rates = [FgtiRates(scenario, channels, rd, k, x)
                 for x in range(rd.n_fgtis)]
        lam, lam_bar = rd.lam, rd.lam_bar
        lam_hat = rd.recruited()

        tau_down = np.zeros(B)
        bres = {}
        for b in range(B):
            r = lat.broadcast_latency(scenario, rd, rates, b, payload)
            bres[b] = r
            tau_down[b] = r.latency
        tau_down_cell = np.array([tau_down[scenario.flu_cell[u]]
                                  for u in range(U)])

        sizes = np.maximum(carry + growth_down * tau_down_cell, 0.0)
        sizes_int = np.maximum(np.rint(sizes).astype(int), 0)
        batch = np.ceil(rd.batch_frac * sizes_int).astype(int)
        tau_compute = np.zeros(U)
        for u in range(U):
            if lam_hat[u] > 0.5 and sizes_int[u] > 0:
                tau_compute[u] = lat.compute_latency(
                    rd.sgd_iters[u], scenario.flus[u].cycles_per_sample,
                    batch[u], rd.cpu_freq[u])

        dres = {}
        tau_d2d = np.zeros(U)
        for u in range(U):
            if lam_bar[u] > 0.5:
                r = lat.dispersion_latency(scenario, rd, rates, u, payload)
                dres[u] = r
                tau_d2d[u] = r.latency
        tau_wait = np.zeros(U)
        for u in range(U):
            if lam[u] > 0.5:
                tau_wait[u] = lat.waiting_time(scenario, rd, dres,
                                               tau_compute, u)
        tau_up = np.zeros(U)
        ures = {}
        for u in range(U):
            if lam[u] > 0.5:
                r = lat.dispatch_latency(scenario, rd, rates, u, payload)
                ures[u] = r
                tau_up[u] = r.latency

        events = devent_times(t_start, tau_down_cell, tau_compute,
                              tau_d2d, tau_wait, tau_up)
        _apply_realized_windows(events, rd, dres, ures)
        t_end = round_completion(t_start, lam, tau_down_cell, tau_compute,
                                 tau_wait, tau_up)
        # a staggered policy may start transfers later than the eager event
        # chain assumes; the round cannot complete before they finish
        realized_end = max((events.upload_end[u] for u in range(U)
                            if lam[u] > 0.5), default=t_start)
        t_end = max(t_end, realized_end)
        if t_end <= t_start:             # nobody recruited: grid still advances
            t_end = t_start + (rd.t[-1] - rd.t[0]) if rd.n_fgtis > 1 else t_start

        e_down = np.array([lat.broadcast_energy(scenario, rd, bres[b], b)
                           for b in range(B)])
        e_comp = np.array([lat.compute_energy(rd.cpu_freq[u], tau_compute[u],
                                              scenario.flus[u].chipset_capacitance)
                           for u in range(U)])
        e_d2d = np.array([lat.dispersion_energy(scenario, rd, dres[u], u)
                          if u in dres else 0.0 for u in range(U)])
        e_up = np.array([lat.dispatch_energy(scenario, rd, ures[u], u)
                         if u in ures else 0.0 for u in range(U)])

        # ---- training step -------------------------------------------------
        sigma = np.zeros(U)
        loss_prev = loss_next = float("nan")
        eta = _step_size(cfg, scenario, rd.sgd_iters)
        if task is not None:
            snapshots = []
            for u in range(U):
                pool = sample_pools[u]
                n_u = min(sizes_int[u], len(pool))
                snap = learning.UserData(matrix=task.users[u].matrix,
                                         samples=pool[:max(n_u, 1)],
                                         theta=task.users[u].theta)
                snapshots.append(snap)
                sigma[u] = snap.sample_sigma()
            snap_sizes = np.maximum(sizes_int, 1)
            loss_prev = _global_loss(snapshots, snap_sizes, model)
            grads = {}
            chunks = []
            for u in range(U):
                if lam_hat[u] <= 0.5 or sizes_int[u] == 0:
                    continue
                rng = np.random.default_rng([scenario.seed, 7, k, u])
                w_final = learning.local_sgd(model, snapshots[u],
                                             int(rd.sgd_iters[u]), eta,
                                             rd.batch_frac[u], rng)
                g = learning.cumulative_gradient(model, w_final, eta)
                if lam[u] > 0.5:
                    grads[u] = g
                elif u in dres and dres[u].delivered > 0:
                    sched = _chunk_schedule(dres[u], scenario)
                    chunks.extend(learning.disperse(g, u, sched))
            boost = learning.boost_factor(snap_sizes, lam_hat, rd.sgd_iters,
                                          mode=cfg.boost_mode)
            direction = learning.aggregate(
                task.dim, np.array(scenario.flu_cell), lam, lam_bar,
                snap_sizes, rd.sgd_iters, grads, chunks, boost)
            model = model - eta * direction
            loss_next = _global_loss(snapshots, snap_sizes, model)
            grad_norms.append(float(np.linalg.norm(
                _global_grad(snapshots, snap_sizes, model))))

            # drift trace over the idle instants of this round
            margin = _drift_margin(scenario, rd, events, sample_pools, task,
                                   model, drift_bounds,
                                   carry, growth_down, growth_up,
                                   tau_down_cell, tau_compute, t_start, t_end)
            drift_margins.append(margin)
        else:
            boost = learning.boost_factor(np.maximum(sizes_int, 1), lam_hat,
                                          rd.sgd_iters, mode=cfg.boost_mode)

        metrics.append(lat.RoundMetrics(
            k=k, t_start=t_start, t_end=t_end, tau_down=tau_down,
            tau_compute=tau_compute, tau_d2d=tau_d2d, tau_up=tau_up,
            tau_wait=tau_wait, e_down=e_down, e_compute=e_comp, e_d2d=e_d2d,
            e_up=e_up, dataset_sizes=sizes, batch_sizes=batch.astype(float)))
        stats_list.append(RoundStats(
            sizes=sizes, batch_sizes=batch.astype(float), sigma=sigma,
            sgd_iters=rd.sgd_iters.copy(), recruited=lam_hat.copy(),
            drift=drift_bounds.copy(), duration=t_end - t_start,
            tau_compute=tau_compute, eta=eta, boost=boost,
            loss_prev=loss_prev, loss_next=loss_next))
        events_list.append(events)

        # dataset carryover into the next round
        train_end = t_start + tau_down_cell + tau_compute
        new_carry = np.zeros(U)
        for u in range(U):
            w = dyn.RoundWindow(t_start=t_start, t_end=t_end,
                                tau_down=tau_down_cell[u],
                                train_end=min(train_end[u], t_end)
                                if lam_hat[u] > 0.5 else t_start + tau_down_cell[u])
            new_carry[u] = dyn.dataset_size(carry[u], growth_down[u],
                                            growth_up[u], w, t_end)
        carry = new_carry
        t_start = t_end

    return SimulationResult(metrics=metrics, round_stats=stats_list,
                            events=events_list, grad_norms=grad_norms,
                            drift_margins=drift_margins, model=model,
                            decisions=decisions)


def _apply_realized_windows(events: DEventTimes, rd, dres, ures) -> None:
    """Overwrite the eager-chain D2D/upload windows with realized activity.

    The event chain assumes every entity starts transmitting as soon as it
    may; a staggered policy starts later, so the discrete-event times are
    taken from the first/last instants that actually carried airtime.
    """
    spacing = rd.fgti_spacing()

    def window(res):
        per_x = res.airtime.max(axis=0)
        live = np.flatnonzero(per_x > 0)
        if live.size == 0:
            return None
        first, last = int(live[0]), int(live[-1])
        # the transfer begins just before its first carrying instant, so
        # that instant sits strictly inside the open window
        start = rd.t[first] - 1e-9 * max(float(spacing[first]), 1e-9)
        return start, rd.t[last] + float(per_x[last])

    for u, res in dres.items():
        w = window(res)
        if w is not None:
            events.d2d_start[u], events.d2d_end[u] = w
    for u, res in ures.items():
        w = window(res)
        if w is not None:
            events.upload_start[u], events.upload_end[u] = w


def _global_loss(snapshots, sizes, w) -> float:
    weights = sizes / sizes.sum()
    return float(sum(wt * s.loss(w) for wt, s in zip(weights, snapshots)))


def _global_grad(snapshots, sizes, w) -> np.ndarray:
    weights = sizes / sizes.sum()
    out = np.zeros_like(w)
    for wt, s in zip(weights, snapshots):
        out += wt * s.grad(w)
    return out


def _drift_margin(scenario, rd, events, pools, task, model,
                  drift_bounds, carry, growth_down, growth_up,
                  tau_down_cell, tau_compute, t_start, t_end) -> float:
    """Worst finite-difference drift margin over this round's idle grid.

    Sample pairs are taken within each idle segment separately (before the
    download ends, and after local training ends); the training window is
    excluded because the dataset is frozen there by definition.
    """
    worst = -math.inf
    U = scenario.n_flus
    windows = []
    for v in range(U):
        windows.append(dyn.RoundWindow(
            t_start=t_start, t_end=t_end, tau_down=tau_down_cell[v],
            train_end=min(t_start + tau_down_cell[v] + tau_compute[v], t_end)))

    def total_size(t):
        return max(sum(dyn.dataset_size(carry[v], growth_down[v],
                                        growth_up[v], windows[v], t)
                       for v in range(U)), 1.0)

    for u in range(U):
        w = windows[u]
        segments = ([t for t in rd.t if t_start <= t <= events.download_end[u]],
                    [t for t in rd.t if w.train_end <= t <= t_end])
        for times in segments:
            if len(times) < 2:
                continue
            wl = []
            for t in times:
                n_t = int(round(dyn.dataset_size(carry[u], growth_down[u],
                                                 growth_up[u], w, t)))
                n_t = max(min(n_t, len(pools[u])), 1)
                loss_u = learning.UserData(
                    matrix=task.users[u].matrix, samples=pools[u][:n_t],
                    theta=task.users[u].theta).loss(model)
                wl.append(n_t / total_size(t) * loss_u)
            chk = dyn.drift_check(np.array(times), np.array(wl),
                                  drift_bounds[u])
            worst = max(worst, chk.worst_margin)
    return worst if math.isfinite(worst) else 0.0


def simulate(cfg: ExperimentConfig, seed: int | None = None,
             with_training: bool = True) -> SimulationResult:
    """Build the scenario and decisions from config and run all rounds.

    Retries with a doubled grid horizon when a transfer cannot finish
    within the configured instants (up to six doublings).
    """
    scenario_cfg = dict(cfg.scenario)
    if seed is not None:
        scenario_cfg["seed"] = seed
    scenario = build_scenario(scenario_cfg)
    payload = cfg.bits_per_element * cfg.model_dim

    task = pools = None
    if with_training and scenario.n_flus:
        max_pool = int(max(f.initial_dataset_size for f in scenario.flus) * 4
                       + 1000)
        task = learning.make_tasks(
            scenario.n_flus, cfg.training_dim,
            [max_pool] * scenario.n_flus, smoothness=cfg.smoothness,
            seed=scenario.seed)
        pools = [task.users[u].samples for u in range(scenario.n_flus)]

    horizon = None
    last_exc: Exception | None = None
    for _ in range(7):
        decisions = build_decisions(scenario, payload, cfg.sgd_iterations,
                                    cfg.minibatch_fraction, horizon=horizon)
        try:
            res = run_rounds(scenario, cfg, decisions, task=task,
                             sample_pools=pools)
            return _trim_and_rerun(scenario, cfg, res, task, pools)
        except lat.IncompleteTransmission as exc:
            last_exc = exc
            base = (decisions.rounds[0].t[-1] - decisions.rounds[0].t[0]
                    + decisions.rounds[0].fgti_spacing()[-1])
            horizon = 2.0 * float(base)
    raise last_exc


def _trim_and_rerun(scenario, cfg, res: SimulationResult, task, pools,
                    passes: int = 2) -> SimulationResult:
    """Trim schedules to the realized windows and re-simulate.

    Trimming removes only non-contributing schedule mass, so metrics are
    unchanged; one or two passes make the realized windows and the
    schedules agree exactly.
    """
    from .control import DecisionVector, trim_schedules

    for _ in range(passes):
        trimmed = DecisionVector([
            trim_schedules(rd, scenario, ev)
            for rd, ev in zip(res.decisions.rounds, res.events)])
        res = run_rounds(scenario, cfg, trimmed, task=task,
                         sample_pools=pools)
    return res
