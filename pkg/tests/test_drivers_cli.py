import json
from pathlib import Path

import numpy as np
import pytest

from fedslice.cli import main
from fedslice.config import ExperimentConfig
from fedslice.drivers import run_montecarlo, run_simulate, run_sweep


def _cfg(**over):
    scenario = {"seed": 1, "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
                "flus_per_oru": [2, 2], "rounds": 1, "fgtis_per_round": 6}
    scenario.update(over.pop("scenario", {}))
    return ExperimentConfig(scenario=scenario, model_dim=80, **over)


def test_run_simulate_emits_metrics_and_bound(tmp_path):
    run_simulate(_cfg(), out_dir=tmp_path)
    csv_path = tmp_path / "metrics_seed1.csv"
    assert csv_path.exists()
    head = csv_path.read_text().splitlines()
    assert head[0] == "# schema: round-metrics/1"
    assert head[1] == "seed,round,entity,metric,value"
    assert any("tau_down_s" in line for line in head)
    doc = json.loads((tmp_path / "bound_seed1.json").read_text())
    assert doc["schema"] == "bound-report/1"
    assert set(doc["terms"]) == set("abcdefg")
    assert "round0" in doc["conditions"]


def test_outputs_byte_identical_across_reruns(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    run_simulate(_cfg(), out_dir=d1)
    run_simulate(_cfg(), out_dir=d2)
    assert (d1 / "metrics_seed1.csv").read_bytes() \
        == (d2 / "metrics_seed1.csv").read_bytes()
    assert (d1 / "bound_seed1.json").read_bytes() \
        == (d2 / "bound_seed1.json").read_bytes()


def test_sweep_rows_and_mean(tmp_path):
    cfg = _cfg(seeds=[1, 2])
    rows = run_sweep(cfg, axis="fgtis_per_round", values=[5, 7],
                     out_dir=tmp_path)
    per_seed = [r for r in rows if r[2] != "mean"]
    means = [r for r in rows if r[2] == "mean"]
    assert len(per_seed) == 2 * 2 * 2        # values x seeds x metrics
    assert len(means) == 4
    text = (tmp_path / "sweep.csv").read_text()
    assert text.startswith("# schema: sweep/1")


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ValueError):
        run_sweep(_cfg(), axis="nonsense", values=[1])


def test_hetero_sweep_uses_analytic_allowance():
    rows = run_sweep(_cfg(), axis="hetero_x1", values=[1.0, 4.0])
    vals = {r[1]: r[4] for r in rows if r[2] != "mean"}
    assert set(vals) == {1.0, 4.0}
    assert all(v >= 0 for v in vals.values())


def test_montecarlo_averages(tmp_path):
    cfg = _cfg(seeds=[1, 2, 3])
    rows = run_montecarlo(cfg, out_dir=tmp_path)
    assert rows[-1][0] == "mean"
    assert rows[-1][1] == pytest.approx(np.mean([r[1] for r in rows[:-1]]))


def _write_cfg(tmp_path, **over):
    doc = {"scenario": {"seed": 1,
                        "oru_positions_m": [[0.0, 0.0], [200.0, 200.0]],
                        "flus_per_oru": [2, 2], "rounds": 1,
                        "fgtis_per_round": 6},
           "model_dim": 80}
    doc.update(over)
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(doc))
    return p


def test_cli_simulate_ok(tmp_path, capsys):
    p = _write_cfg(tmp_path)
    code = main(["simulate", "--config", str(p), "--out",
                 str(tmp_path / "out")])
    assert code == 0
    assert "simulated 1 rounds" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"scenario": {"rounds": 0}}')
    code = main(["simulate", "--config", str(p)])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_file(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "nope.json")])
    assert code == 2


def test_cli_mode_flag_without_verb(tmp_path, capsys):
    p = _write_cfg(tmp_path)
    code = main(["--config", str(p), "--mode", "simulate",
                 "--out", str(tmp_path / "out")])
    assert code == 0


def test_cli_seed_override(tmp_path):
    p = _write_cfg(tmp_path)
    assert main(["simulate", "--config", str(p), "--seed", "7",
                 "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "metrics_seed7.csv").exists()
