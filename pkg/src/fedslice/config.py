"""Config ingestion: scenario files, experiment files, schema validation.

Both files are JSON (key/value with nested lists).  Validation reports the
offending field path; defaults mirror the ablation parameter table
(docs/scenario_schema.md documents every field).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "ConfigError",
    "SCENARIO_DEFAULTS",
    "validate_scenario_config",
    "ExperimentConfig",
    "load_experiment_config",
    "load_scenario_file",
]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"config field '{path}': {message}")
        self.field_path = path


# noise: -174 dBm/Hz
_NOISE_PSD_W_PER_HZ = 10.0 ** (-174.0 / 10.0) * 1e-3

SCENARIO_DEFAULTS: dict = {
    "seed": 1,
    "oru_positions_m": [[0.0, 0.0], [200.0, 200.0], [400.0, 400.0],
                        [600.0, 600.0], [800.0, 800.0]],
    "flus_per_oru": [5, 5, 5, 5, 5],
    "placement_radius_m": 50.0,
    "oru_p_max_w": [3.0, 4.0],
    "flu_p_max_w": [0.5, 0.8],
    "flu_cpu_hz": [1.5e9, 2.0e9],
    "cycles_per_sample": 3960,
    "chipset_capacitance": 1e-27,
    "initial_dataset_size": [800, 1200],
    "growth_down": [3.0, 5.0],
    "growth_up": [3.0, 5.0],
    "drift_bound": 1e-6,
    "dissimilarity": 3.0,
    "sigma_max": 1.0,
    "licensed_numerology": 1,
    "unlicensed_numerology": 0,
    "n_licensed_prbs": 2,
    "n_unlicensed_prbs": 2,
    "noise_psd_w_per_hz": _NOISE_PSD_W_PER_HZ,
    "rounds": 1,
    "fgtis_per_round": 6,
}

_RANGE_FIELDS = ("oru_p_max_w", "flu_p_max_w", "flu_cpu_hz",
                 "initial_dataset_size", "growth_down", "growth_up")


def validate_scenario_config(config: dict) -> dict:
    """Merge with defaults and validate; raises ConfigError on violations."""
    if not isinstance(config, dict):
        raise ConfigError("", f"expected a mapping, got {type(config).__name__}")
    cfg = dict(SCENARIO_DEFAULTS)
    for key, value in config.items():
        if key not in SCENARIO_DEFAULTS:
            raise ConfigError(key, "unknown field")
        cfg[key] = value

    def _int(path, lo=None):
        v = cfg[path]
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(path, f"expected integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(path, f"must be >= {lo}, got {v}")
        return v

    def _num(path, lo=None, strict=False):
        v = cfg[path]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(path, f"expected number, got {v!r}")
        if lo is not None and (v <= lo if strict else v < lo):
            raise ConfigError(path, f"must be {'>' if strict else '>='} {lo}, got {v}")
        return float(v)

    _int("seed")
    _int("licensed_numerology", lo=0)
    _int("unlicensed_numerology", lo=0)
    _int("n_licensed_prbs", lo=1)
    _int("n_unlicensed_prbs", lo=1)
    _int("rounds", lo=1)
    _int("fgtis_per_round", lo=1)
    _num("placement_radius_m", lo=0.0, strict=True)
    _num("noise_psd_w_per_hz", lo=0.0, strict=True)
    _num("cycles_per_sample", lo=0.0, strict=True)
    _num("chipset_capacitance", lo=0.0, strict=True)
    _num("drift_bound")
    _num("dissimilarity", lo=0.0)
    _num("sigma_max", lo=0.0)

    pos = cfg["oru_positions_m"]
    if (not isinstance(pos, list) or not pos
            or any(not isinstance(p, (list, tuple)) or len(p) != 2 for p in pos)):
        raise ConfigError("oru_positions_m", "expected a non-empty list of [x, y] pairs")
    per = cfg["flus_per_oru"]
    if not isinstance(per, list) or len(per) != len(pos):
        raise ConfigError("flus_per_oru", "must list one count per O-RU")
    for i, n in enumerate(per):
        if not isinstance(n, int) or n < 0:
            raise ConfigError(f"flus_per_oru[{i}]", f"expected count >= 0, got {n!r}")
    for key in _RANGE_FIELDS:
        rng = cfg[key]
        if (not isinstance(rng, (list, tuple)) or len(rng) != 2
                or not all(isinstance(v, (int, float)) for v in rng)
                or rng[0] > rng[1]):
            raise ConfigError(key, f"expected [low, high] with low <= high, got {rng!r}")
        cfg[key] = (float(rng[0]), float(rng[1]))
    return cfg


def load_scenario_file(path: str | Path) -> dict:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(str(p), "scenario file not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(str(p), f"not valid JSON: {exc}")
    return validate_scenario_config(raw)


@dataclass
class ExperimentConfig:
    """Everything the drivers need beyond the scenario itself."""

    scenario: dict
    mode: str = "simulate"             # simulate | optimize | sweep | montecarlo
    weight_bound: float = 10.0         # c1
    weight_latency: float = 1e-2       # c2
    weight_energy: float = 1e-2        # c3
    zeta: float = 0.5
    zeta_hat: float | None = None      # defaults to zeta / 4
    vartheta: float = 0.9
    varpi: float = 0.9
    alpha_step: float = 0.1
    sigma_max: float = 1.0
    smoothness: float = 1.0            # beta of the loss
    hetero_x1: float = 1.0
    hetero_x2: float = 1e-3
    model_dim: int = 1000
    training_dim: int = 16          # dimension of the synthetic convex task
    bits_per_element: float = 32 * 32 * 4
    p_norm: float = 8.0
    maclaurin_c: int = 16
    epsilon: float = 1e-6
    penalty_weight: float | None = None    # default: 1e3 x objective scale
    solver_tol: float = 1e-8
    outer_criterion: float = 1e-4
    max_outer: int = 100
    boost_mode: str = "normalized"     # "verbatim" | "normalized"
    sgd_iterations: int = 1
    minibatch_fraction: float = 1.0
    learning_rate: float | None = None  # defaults to the step-size rule
    sweep_axis: str = ""
    sweep_values: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [1])
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("weight_bound", "weight_latency", "weight_energy"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "objective weights must be >= 0")
        if self.mode not in ("simulate", "optimize", "sweep", "montecarlo"):
            raise ConfigError("mode", f"unknown mode {self.mode!r}")
        if self.mode == "montecarlo" and not self.seeds:
            raise ConfigError("seeds", "montecarlo needs at least one seed")
        if not (0.0 < self.zeta < 1.0):
            raise ConfigError("zeta", "must lie in (0, 1)")
        if self.zeta_hat is None:
            self.zeta_hat = 0.25 * self.zeta
        if not (0.0 < self.zeta_hat < self.zeta):
            raise ConfigError("zeta_hat", "must lie in (0, zeta)")
        for name in ("vartheta", "varpi"):
            if not (abs(getattr(self, name)) < 1.0):
                raise ConfigError(name, "must satisfy |value| < 1")
        if self.boost_mode not in ("verbatim", "normalized"):
            raise ConfigError("boost_mode", f"unknown mode {self.boost_mode!r}")
        if not (0.0 < self.minibatch_fraction <= 1.0):
            raise ConfigError("minibatch_fraction", "must lie in (0, 1]")


_EXPERIMENT_KEYS = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}


def load_experiment_config(path: str | Path,
                           overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(str(p), "experiment config not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(str(p), f"not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(str(p), "expected a JSON object")
    raw.update(overrides or {})
    scenario = raw.pop("scenario", {})
    if isinstance(scenario, str):
        scenario = load_scenario_file(Path(p).parent / scenario)
    else:
        scenario = validate_scenario_config(scenario)
    unknown = set(raw) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    return ExperimentConfig(scenario=scenario, **raw)
