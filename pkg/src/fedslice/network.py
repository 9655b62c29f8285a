"""Static network description: radio units, users, spectrum, channels.

The scenario is immutable once built and safe to share across workers.
Channel gains follow log-distance pathloss with Rayleigh fading, redrawn
independently per fine-granular time instant (block fading), and are
floored at ``GAIN_FLOOR`` so downstream SINR arithmetic never degenerates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FluParams",
    "OruParams",
    "NetworkScenario",
    "ChannelState",
    "prb_bandwidth",
    "channel_gain",
    "build_scenario",
    "SUBCARRIERS_PER_PRB",
    "REF_SUBCARRIER_SPACING_HZ",
    "GAIN_FLOOR",
]

SUBCARRIERS_PER_PRB = 12
REF_SUBCARRIER_SPACING_HZ = 15_000.0
GAIN_FLOOR = 1e-12

PATHLOSS_REF_DB = -30.0          # beta_0
PATHLOSS_REF_DIST_M = 1.0        # d_0
PATHLOSS_EXP_CELLULAR = 3.0
PATHLOSS_EXP_D2D = 3.2


def prb_bandwidth(numerology: int) -> float:
    """Bandwidth in Hz of one PRB at the given numerology.

    Twelve subcarriers spaced at ``2**numerology * 15 kHz``.
    """
    if numerology < 0:
        raise ValueError(f"numerology must be >= 0, got {numerology}")
    return SUBCARRIERS_PER_PRB * REF_SUBCARRIER_SPACING_HZ * (2 ** numerology)


def channel_gain(distance_m: float, fading_power: float,
                 d2d: bool = False) -> float:
    """Power gain |xi|^2 from log-distance pathloss times a fading draw.

    ``fading_power`` is |F|^2 for a complex normal F; gains are floored at
    ``GAIN_FLOOR``.  Distances below the reference distance are clamped
    with a warning.
    """
    if distance_m < PATHLOSS_REF_DIST_M:
        warnings.warn(f"distance {distance_m} m below reference; clamped",
                      stacklevel=2)
        distance_m = PATHLOSS_REF_DIST_M
    delta = PATHLOSS_EXP_D2D if d2d else PATHLOSS_EXP_CELLULAR
    pl_db = PATHLOSS_REF_DB - 10.0 * delta * np.log10(distance_m / PATHLOSS_REF_DIST_M)
    return max(10.0 ** (pl_db / 10.0) * fading_power, GAIN_FLOOR)


@dataclass(frozen=True)
class FluParams:
    """Per-user capabilities and dataset dynamics parameters."""

    p_max: float                   # W
    cpu_freq: float                # Hz
    cycles_per_sample: float
    chipset_capacitance: float     # alpha_u; effective capacitance is alpha_u / 2
    initial_dataset_size: float    # samples
    growth_down: float             # samples/s while the model downloads
    growth_up: float               # samples/s after local training ends
    drift_bound: float             # loss/s
    dissimilarity: float           # Theta_u
    sigma_max: float

    def __post_init__(self):
        if self.p_max <= 0 or self.cpu_freq <= 0:
            raise ValueError("p_max and cpu_freq must be positive")
        if self.initial_dataset_size < 0 or self.dissimilarity < 0:
            raise ValueError("dataset size and dissimilarity must be >= 0")


@dataclass(frozen=True)
class OruParams:
    position: tuple[float, float]  # meters
    p_max: float                   # W of the serving slice
    n_flus: int


class ChannelState:
    """Per-FGTI fading realizations for every link in the network.

    Gain lookups are deterministic given (seed, round, fgti, link); draws
    for different FGTIs are independent.
    """

    def __init__(self, scenario: "NetworkScenario"):
        self._sc = scenario

    def _rng(self, k: int, x: int, stream: int) -> np.random.Generator:
        return np.random.default_rng([self._sc.seed, k, x, stream])

    def oru_flu_gains(self, k: int, x: int) -> np.ndarray:
        """(n_orus, n_flus) power gains at FGTI x of round k."""
        sc = self._sc
        rng = self._rng(k, x, 1)
        f = rng.standard_normal((sc.n_orus, sc.n_flus, 2))
        power = (f ** 2).sum(axis=2) / 2.0
        pl = 10.0 ** ((PATHLOSS_REF_DB
                       - 10.0 * PATHLOSS_EXP_CELLULAR
                       * np.log10(np.maximum(sc.dist_oru_flu, PATHLOSS_REF_DIST_M))) / 10.0)
        return np.maximum(pl * power, GAIN_FLOOR)

    def flu_flu_gains(self, k: int, x: int) -> np.ndarray:
        """(n_flus, n_flus) symmetric D2D power gains; diagonal is zero-use."""
        sc = self._sc
        rng = self._rng(k, x, 2)
        f = rng.standard_normal((sc.n_flus, sc.n_flus, 2))
        power = (f ** 2).sum(axis=2) / 2.0
        power = np.triu(power, 1)
        power = power + power.T
        pl = 10.0 ** ((PATHLOSS_REF_DB
                       - 10.0 * PATHLOSS_EXP_D2D
                       * np.log10(np.maximum(sc.dist_flu_flu, PATHLOSS_REF_DIST_M))) / 10.0)
        g = np.maximum(pl * power, GAIN_FLOOR)
        np.fill_diagonal(g, GAIN_FLOOR)
        return g


@dataclass(frozen=True)
class NetworkScenario:
    """Topology, spectrum, and user parameters for one experiment."""

    seed: int
    orus: tuple[OruParams, ...]
    flus: tuple[FluParams, ...]
    flu_cell: tuple[int, ...]            # owning O-RU index per FLU
    flu_positions: np.ndarray            # (n_flus, 2) meters
    licensed_numerology: int
    unlicensed_numerology: int
    n_licensed_prbs: int
    n_unlicensed_prbs: int
    noise_psd: float                     # W/Hz
    rounds: int
    fgtis_per_round: int
    placement_radius: float = 50.0
    dist_oru_flu: np.ndarray = field(default=None, repr=False)
    dist_flu_flu: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.licensed_numerology < 0 or self.unlicensed_numerology < 0:
            raise ValueError("numerologies must be >= 0")
        if self.rounds < 1 or self.fgtis_per_round < 1:
            raise ValueError("rounds and fgtis_per_round must be >= 1")
        if len(self.flu_cell) != len(self.flus):
            raise ValueError("flu_cell must assign every FLU to one O-RU")
        oru_pos = np.array([o.position for o in self.orus], dtype=float)
        if self.n_flus:
            d_of = np.linalg.norm(
                oru_pos[:, None, :] - self.flu_positions[None, :, :], axis=2)
            d_ff = np.linalg.norm(
                self.flu_positions[:, None, :] - self.flu_positions[None, :, :], axis=2)
        else:
            d_of = np.zeros((self.n_orus, 0))
            d_ff = np.zeros((0, 0))
        object.__setattr__(self, "dist_oru_flu", d_of)
        object.__setattr__(self, "dist_flu_flu", d_ff)

    @property
    def n_orus(self) -> int:
        return len(self.orus)

    @property
    def n_flus(self) -> int:
        return len(self.flus)

    @property
    def licensed_bandwidth(self) -> float:
        return prb_bandwidth(self.licensed_numerology)

    @property
    def unlicensed_bandwidth(self) -> float:
        return prb_bandwidth(self.unlicensed_numerology)

    def cell_members(self, b: int) -> list[int]:
        return [u for u, c in enumerate(self.flu_cell) if c == b]

    def channels(self) -> ChannelState:
        return ChannelState(self)


def _draw_flu(rng: np.random.Generator, cfg: dict) -> FluParams:
    def rng_range(key, default):
        lo, hi = cfg.get(key, default)
        return float(rng.uniform(lo, hi))

    return FluParams(
        p_max=rng_range("flu_p_max_w", (0.5, 0.8)),
        cpu_freq=rng_range("flu_cpu_hz", (1.5e9, 2.0e9)),
        cycles_per_sample=float(cfg.get("cycles_per_sample", 3960)),
        chipset_capacitance=float(cfg.get("chipset_capacitance", 1e-27)),
        initial_dataset_size=rng_range("initial_dataset_size", (800, 1200)),
        growth_down=rng_range("growth_down", (3.0, 5.0)),
        growth_up=rng_range("growth_up", (3.0, 5.0)),
        drift_bound=float(cfg.get("drift_bound", 1e-6)),
        dissimilarity=float(cfg.get("dissimilarity", 3.0)),
        sigma_max=float(cfg.get("sigma_max", 1.0)),
    )


def build_scenario(config: dict) -> NetworkScenario:
    """Deterministic scenario from a validated config mapping.

    FLUs are placed uniformly in a disc of ``placement_radius_m`` around
    their O-RU; every random draw comes from the config seed.
    """
    from .config import validate_scenario_config

    cfg = validate_scenario_config(config)
    seed = cfg["seed"]
    rng = np.random.default_rng([seed, 0xFED])
    oru_positions = cfg["oru_positions_m"]
    flus_per_oru = cfg["flus_per_oru"]
    radius = cfg["placement_radius_m"]
    oru_pmax_range = cfg["oru_p_max_w"]

    orus, flus, cells, pos = [], [], [], []
    for b, p in enumerate(oru_positions):
        n_b = flus_per_oru[b]
        orus.append(OruParams(position=(float(p[0]), float(p[1])),
                              p_max=float(rng.uniform(*oru_pmax_range)),
                              n_flus=n_b))
        for _ in range(n_b):
            r = radius * np.sqrt(rng.uniform())
            th = rng.uniform(0.0, 2.0 * np.pi)
            pos.append([p[0] + r * np.cos(th), p[1] + r * np.sin(th)])
            flus.append(_draw_flu(rng, cfg))
            cells.append(b)

    return NetworkScenario(
        seed=seed,
        orus=tuple(orus),
        flus=tuple(flus),
        flu_cell=tuple(cells),
        flu_positions=(np.array(pos, dtype=float)
                       if pos else np.zeros((0, 2))),
        licensed_numerology=cfg["licensed_numerology"],
        unlicensed_numerology=cfg["unlicensed_numerology"],
        n_licensed_prbs=cfg["n_licensed_prbs"],
        n_unlicensed_prbs=cfg["n_unlicensed_prbs"],
        noise_psd=cfg["noise_psd_w_per_hz"],
        rounds=cfg["rounds"],
        fgtis_per_round=cfg["fgtis_per_round"],
        placement_radius=radius,
    )
