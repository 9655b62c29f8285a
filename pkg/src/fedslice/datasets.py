"""Dynamic dataset sizes, aggregate statistics, and model-drift checking.

Within one round the dataset of a user grows at one rate while its model
downloads, freezes during local training, and grows at a second rate
afterwards; the closed form below integrates that piecewise dynamic and
clamps at zero.  ``carryover_size`` accumulates the round-to-round
boundary term from the initial size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RoundWindow",
    "dataset_size",
    "carryover_size",
    "aggregate_sizes",
    "DriftCheck",
    "drift_check",
]


@dataclass(frozen=True)
class RoundWindow:
    """Timing of one round for one user's dataset dynamics."""

    t_start: float          # T^(k-1)
    t_end: float            # T^(k)
    tau_down: float         # broadcast latency of the user's radio unit
    train_end: float        # time local training finishes (Psi_u)


def dataset_size(carry: float, growth_down: float, growth_up: float,
                 window: RoundWindow, t: float) -> float:
    """Samples held at time t inside the round window (clamped at zero)."""
    if not (window.t_start <= t <= window.t_end + 1e-12):
        raise ValueError(f"t={t} outside round window "
                         f"[{window.t_start}, {window.t_end}]")
    raw = (carry
           + growth_down * min(t - window.t_start, window.tau_down)
           + growth_up * (max(t, window.train_end) - window.train_end))
    return max(raw, 0.0)


def carryover_size(initial_size: float, growth_down, growth_up,
                   windows: list[RoundWindow]) -> float:
    """Boundary size entering the next round, accumulated over past rounds."""
    h = float(initial_size)
    gd = np.broadcast_to(np.asarray(growth_down, dtype=float), (len(windows),))
    gu = np.broadcast_to(np.asarray(growth_up, dtype=float), (len(windows),))
    for w, gdk, guk in zip(windows, gd, gu):
        h += gdk * w.tau_down + guk * (w.t_end - w.train_end)
    return h


def aggregate_sizes(sizes: np.ndarray, recruited: np.ndarray):
    """(total, recruited total, minimum) of the per-user dataset sizes."""
    sizes = np.asarray(sizes, dtype=float)
    recruited = np.asarray(recruited, dtype=float)
    total = float(sizes.sum())
    selected = float((recruited * sizes).sum())
    smallest = float(sizes.min()) if sizes.size else 0.0
    return total, selected, smallest


@dataclass
class DriftCheck:
    passed: bool
    worst_margin: float      # max over sample pairs of (derivative - bound)
    n_pairs: int


def drift_check(times: np.ndarray, weighted_losses: np.ndarray,
                drift_bound, tol: float = 1e-9) -> DriftCheck:
    """Verify the weighted-local-loss growth rate against the drift bound.

    ``weighted_losses`` are samples of ``(|data_u| / |data|) * loss_u``
    taken at idle-window times; the finite-difference derivative between
    consecutive samples must not exceed the bound (a scalar or a per-pair
    array, evaluated at the left sample).  Positive margin = violation.
    """
    times = np.asarray(times, dtype=float)
    losses = np.asarray(weighted_losses, dtype=float)
    if times.shape != losses.shape or times.size < 2:
        raise ValueError("need at least two (time, loss) samples")
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing")
    deriv = np.diff(losses) / dt
    bound = np.broadcast_to(np.asarray(drift_bound, dtype=float), deriv.shape)
    margins = deriv - bound
    worst = float(margins.max())
    return DriftCheck(passed=bool(worst <= tol), worst_margin=worst,
                      n_pairs=len(deriv))
