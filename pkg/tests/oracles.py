"""Independent reference implementations used only by the tests.

These stay deliberately dumb: literal fine-step bit accounting on a fixed
time grid, and classic RK4 on the piecewise dataset ODE.  They share no
code with the recursions they check.
"""

from __future__ import annotations

import numpy as np


def fine_step_transfer(payload, fractions, rates, active, spacing,
                       step=1e-5):
    """Event-driven bit accounting on a uniform time grid.

    Within each instant, every channel accumulates ``rate * step`` toward
    its chunk target (the remaining payload times its fraction, set at the
    instant start) until the target or the instant boundary is hit.  The
    instant's busy time is when the last channel stops sending.

    Returns (total busy time, delivered bits, per-channel airtime matrix).
    """
    n_ch, n_x = fractions.shape
    airtime = np.zeros((n_ch, n_x))
    delivered = 0.0
    busy = 0.0
    for x in range(n_x):
        if not active[x] or delivered >= payload * (1.0 - 1e-15):
            continue
        remaining = payload - delivered
        targets = remaining * fractions[:, x]
        n_steps = int(np.ceil(spacing[x] / step))
        grid = step * np.arange(1, n_steps + 1)
        grid[-1] = min(grid[-1], spacing[x])
        slot_busy = 0.0
        for c in range(n_ch):
            if targets[c] <= 0.0:
                continue
            if rates[c, x] <= 0.0:
                slot_busy = spacing[x]
                airtime[c, x] = spacing[x]
                continue
            cum = np.minimum(rates[c, x] * grid, targets[c])
            done = np.searchsorted(cum, targets[c] * (1.0 - 1e-12))
            if done >= len(grid):       # not finished within the instant
                delivered += cum[-1]
                slot_busy = spacing[x]
                airtime[c, x] = spacing[x]
            else:
                delivered += targets[c]
                slot_busy = max(slot_busy, grid[done])
                airtime[c, x] = grid[done]
        busy += slot_busy
    return busy, delivered, airtime


def rk4_piecewise_dataset(carry, growth_down, growth_up, t_start, tau_down,
                          train_end, t_end, t_query, n_steps=400):
    """RK4 integration of the piecewise dataset-size dynamic up to t_query.

    The derivative is ``growth_down`` during the download, zero during
    training, and ``growth_up`` afterwards.  The nonnegativity clamp is a
    property of the size formula (applied to the accumulated value), so
    the integrator runs the plain dynamic and clamps the result.
    """
    def deriv(t):
        if t < t_start + tau_down:
            return growth_down
        if t <= train_end:
            return 0.0
        return growth_up

    breaks = sorted({t_start, t_start + tau_down, train_end, t_end, t_query})
    breaks = [b for b in breaks if t_start <= b <= t_query]
    if breaks[-1] < t_query:
        breaks.append(t_query)
    y = float(carry)
    t0 = t_start
    for t1 in breaks:
        if t1 <= t0:
            continue
        # the derivative is constant inside each segment; classify stage
        # points by the segment so boundary evaluations stay on-branch
        d_seg = deriv((t0 + t1) / 2.0)
        h = (t1 - t0) / n_steps
        for _ in range(n_steps):
            k1 = k2 = k3 = k4 = d_seg
            y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t0 = t1
    return max(y, 0.0)
