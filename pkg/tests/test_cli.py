import csv
import json
import subprocess
from pathlib import Path
import sys

import numpy as np
import pytest

from ecnls import schema, spectral
from ecnls.cli import main
from ecnls.config import EXPERIMENTS, load_config
from ecnls.diagnostics import CSV_COLUMNS
from ecnls.ensembles import ModeEnsemble
from ecnls.spectral import TorusGrid

HEADER = "t,mass,energy,h1_sq,density_L4,virial,virial_rate,A,B,D,E,modE,scatter_cauchy"

SIMULATE = {
    "experiment": "simulate",
    "grid": {"dim": 1, "points_per_dim": 32},
    "initial": {"type": "modes", "weights": [1.0, 0.5], "modes": [
        {"lattice": [[0], [1]], "coefficients": [0.3, 0.0, 0.1, 0.2]},
        {"lattice": [[-2]], "coefficients": [0.0, 0.4]},
    ]},
    "evolution": {"dt": 0.01, "t_end": 0.05},
}


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(tmp_path, cfg, *extra, out="out"):
    code = main([cfg["experiment"], "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / out),
                 "--no-plots", *extra])
    return code, tmp_path / out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_simulate_outputs(tmp_path):
    code, out = run(tmp_path, SIMULATE)
    assert code == 0
    text = (out / "diagnostics.csv").read_text()
    assert text.splitlines()[0] == HEADER == ",".join(CSV_COLUMNS)
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 6 and rows[0]["A"] == "" and rows[0]["virial"] != ""
    s = summary(out)
    assert s["termination"] == "completed" and all(s["invariants"].values())


def test_same_seed_byte_identical(tmp_path):
    cfg = {**SIMULATE, "ensemble": {"method": "monte-carlo", "J": 16}, "seed": 7}
    _, a = run(tmp_path, cfg, out="a")
    _, b = run(tmp_path, cfg, out="b")
    _, c = run(tmp_path, {**cfg, "seed": 8}, out="c")
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
    assert (a / "diagnostics.csv").read_bytes() != (c / "diagnostics.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = {**SIMULATE, "ensemble": {"method": "monte-carlo", "J": 16}, "seed": 7}
    _, a = run(tmp_path, cfg, out="a")
    _, b = run(tmp_path, {**cfg, "seed": 1}, "--seed", "7", out="b")
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()


@pytest.mark.parametrize("bad", [
    {"evolution": {"dt": -1.0}},
    {"mystery": 1},
    {"grid": {"dim": 4, "points_per_dim": 32}},
    {"evolution": {"dt": 0.01, "dt_min": 0.1}},
    {"initial": {"type": "file", "path": "missing.json"}},
    {"experiment": "blowup"},
])
def test_config_errors_exit_2(tmp_path, bad):
    cfg = {**SIMULATE, **bad}
    code = main(["simulate", "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o"), "--no-plots"])
    assert code == 2


def test_non_json_config_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["simulate", "--config", str(p)]) == 2


def test_missing_config_exit_4(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 4


def test_file_initial_and_grid_mismatch(tmp_path):
    g = TorusGrid(1, 32)
    ens = ModeEnsemble(g, [1.0], 0.2 * g.plane_wave([1]))
    schema.dump(ens, tmp_path / "ens.json")
    cfg = {**SIMULATE, "initial": {"type": "file", "path": "ens.json"}}
    assert run(tmp_path, cfg)[0] == 0
    cfg["grid"] = {"dim": 1, "points_per_dim": 64}
    assert run(tmp_path, cfg, out="o2")[0] == 2


def test_operator_compare_mismatched_grid_exit_2(tmp_path):
    schema.dump(ModeEnsemble(TorusGrid(1, 64), [1.0], np.zeros(64)), tmp_path / "ens.json")
    cfg = {"experiment": "operator-compare", "grid": {"dim": 1, "points_per_dim": 32},
           "initial": {"type": "file", "path": "ens.json"}}
    assert run(tmp_path, cfg)[0] == 2


def test_numerical_failure_exit_3_with_partial_outputs(tmp_path):
    cfg = {"experiment": "simulate", "grid": {"dim": 2, "points_per_dim": 32, "period": 16.0},
           "initial": {"type": "bump", "amplitude": 3.0, "width": 1.0},
           "evolution": {"sign": -1, "dt": 0.05, "dt_min": 0.01, "t_end": 1.0, "energy_tol": 1e-14}}
    code, out = run(tmp_path, cfg)
    assert code == 3
    s = summary(out)
    assert s["termination"] == "numerical_failure" and "dt_underflow" in s["error"]
    assert len((out / "diagnostics.csv").read_text().splitlines()) >= 2


def test_unwritable_output_exit_4(tmp_path):
    (tmp_path / "blocker").write_text("")
    code = main(["simulate", "--config", str(write(tmp_path, SIMULATE)), "--out", str(tmp_path / "blocker" / "x")])
    assert code == 4


def test_threads_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("ECNLS_THREADS", "junk")
    monkeypatch.setattr(spectral, "_WORKERS", spectral.get_workers())
    assert run(tmp_path, SIMULATE, "--threads", "2")[0] == 0
    assert run(tmp_path, SIMULATE, "--threads", "0", out="o2")[0] == 2


def test_sphere_lemma_nmax(tmp_path):
    code = main(["sphere-lemma", "--nmax", "8", "--out", str(tmp_path / "s"), "--no-plots"])
    assert code == 0
    rep = json.loads((tmp_path / "s" / "sphere_report.json").read_text())
    assert len(rep["degrees"]) == 9
    assert all(r["spread_rel"] < 1e-9 for r in rep["degrees"])
    assert summary(tmp_path / "s")["max_spread"] < 1e-9


def test_sphere_lemma_rejects_large_degree(tmp_path):
    assert main(["sphere-lemma", "--nmax", "40", "--out", str(tmp_path / "s")]) == 2


def test_blowup_positive_energy_completes(tmp_path):
    cfg = {"experiment": "blowup", "grid": {"dim": 2, "points_per_dim": 32, "period": 16.0},
           "initial": {"type": "bump", "amplitude": 0.3, "width": 1.0},
           "evolution": {"dt": 0.01, "t_end": 0.1}}
    code, out = run(tmp_path, cfg)
    s = summary(out)
    assert code == 0 and s["termination"] == "completed"
    assert s["energy0"] >= 0 and s["invariants"] == {"criterion_applicable": False}


def test_equilibrium_check_summary(tmp_path):
    cfg = {"experiment": "equilibrium-check", "grid": {"dim": 1, "points_per_dim": 32},
           "initial": {"type": "equilibrium", "lattice": [[0], [1], [-2], [3], [4]],
                       "coefficients": [0.5, 0, 0.3, 0.1, 0, 0.4, 0.2, 0, 0.1, -0.1]},
           "evolution": {"dt": 0.02, "t_end": 0.2}, "dt_levels": 3}
    code, out = run(tmp_path, cfg)
    s = summary(out)
    assert code == 0
    assert s["density_drift"] < 1e-6
    assert len(s["phase_errors"]) == 3


def test_figures_written(tmp_path):
    out = tmp_path / "fig"
    code = main(["simulate", "--config", str(write(tmp_path, SIMULATE)), "--out", str(out)])
    assert code == 0
    figs = summary(out)["figures"]
    assert figs and all((out / f).stat().st_size > 0 for f in figs)


def test_snapshot_written(tmp_path):
    code, out = run(tmp_path, {**SIMULATE, "snapshots": True})
    assert code == 0
    snaps = sorted(out.glob("snapshot_*.json"))
    assert snaps and isinstance(schema.load(snaps[0]), ModeEnsemble)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ecnls", "sphere-lemma", "--nmax", "2", "--out",
                           str(tmp_path / "m"), "--no-plots"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "summary.json").exists()


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "configs").glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.experiment in EXPERIMENTS
