import json
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml

from offloadgame.cli import main

BASELINE = Path(__file__).resolve().parents[1] / "configs" / "baseline_2x2.yaml"


@pytest.fixture(scope="module")
def quick_config(tmp_path_factory):
    """Baseline scenario tuned for fast CLI runs."""
    raw = yaml.safe_load(BASELINE.read_text())
    raw["dynamics"] = {"damping": 0.5}
    p = tmp_path_factory.mktemp("cfg") / "scenario.yaml"
    p.write_text(yaml.safe_dump(raw))
    return p


@pytest.fixture(scope="module")
def solved_dir(quick_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("solve_out")
    rc = main(["solve", "--config", str(quick_config), "--out", str(out),
               "--eps", "1e-4"])
    assert rc == 0
    return out


def test_solve_outputs(solved_dir):
    trace = (solved_dir / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,device,T,s_1,s_2"
    assert len(trace) > 4
    eq = (solved_dir / "equilibrium.csv").read_text().splitlines()
    assert eq[0].startswith("device,T,total_offload,local_prob,s_1,s_2,p_1,p_2")
    rows = [line.split(",") for line in eq[1:]]
    assert len(rows) == 2
    resid = float(rows[0][-2])
    assert resid <= 1e-4
    assert rows[0][-1] == "true"
    # figure rendered next to the delimited output
    assert (solved_dir / "trace.png").stat().st_size > 0
    manifest = json.loads((solved_dir / "run_manifest.json").read_text())
    assert manifest["converged"] is True
    assert manifest["damping"] == 0.5
    assert manifest["sweep_mode"] == "gauss-seidel"


def test_solve_reruns_byte_identical(quick_config, solved_dir, tmp_path):
    out2 = tmp_path / "again"
    rc = main(["solve", "--config", str(quick_config), "--out", str(out2),
               "--eps", "1e-4"])
    assert rc == 0
    assert (out2 / "trace.csv").read_bytes() == \
        (solved_dir / "trace.csv").read_bytes()
    assert (out2 / "equilibrium.csv").read_bytes() == \
        (solved_dir / "equilibrium.csv").read_bytes()


def test_missing_config_exit_code(tmp_path, capsys):
    rc = main(["solve", "--config", str(tmp_path / "nope.yaml"),
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "nope.yaml" in capsys.readouterr().err


def test_infeasible_initial_exit_code(quick_config, tmp_path):
    raw = yaml.safe_load(Path(quick_config).read_text())
    raw["initial_profile"] = [[50.0, 50.0], [50.0, 50.0]]
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(raw))
    rc = main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_jacobi_flag_recorded(quick_config, tmp_path):
    out = tmp_path / "jac"
    rc = main(["solve", "--config", str(quick_config), "--out", str(out),
               "--sweep", "jacobi", "--max-iters", "40", "--no-figures"])
    assert rc == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["sweep_mode"] == "jacobi"
    assert not (out / "trace.png").exists()


def test_sweep_identity_at_unit_coefficient(quick_config, solved_dir, tmp_path):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", str(quick_config), "--out", str(out),
               "--target", "server_speed_all", "--coefficients", "1.0",
               "--no-figures"])
    assert rc == 0
    header, row = (out / "sweep.csv").read_text().splitlines()
    cols = dict(zip(header.split(","), row.split(",")))
    assert float(cols["c"]) == 1.0
    eq_rows = (solved_dir / "equilibrium.csv").read_text().splitlines()[1:]
    T_solve = [r.split(",")[1] for r in eq_rows]
    assert cols["T_1"] == T_solve[0]
    assert cols["T_2"] == T_solve[1]


def test_validate_zero_profile(quick_config, tmp_path):
    out = tmp_path / "val"
    rc = main(["validate", "--config", str(quick_config), "--out", str(out),
               "--profile", "zero", "--horizon", "30000", "--warmup", "3000",
               "--replications", "5", "--no-figures"])
    assert rc == 0
    lines = (out / "validate.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    t_rows = [r for r in rows if r[0] == "T"]
    # zero offload: device response comes from local draws only, and the
    # stock execution moments are unrealizable, so device rows are skipped
    # while the empty server rows pass trivially
    omega_rows = [r for r in rows if r[0] == "omega"]
    assert all(r[5] == "pass" for r in omega_rows)
    assert len(t_rows) == 2


def test_audit_consistent_infeasible(tmp_path):
    raw = yaml.safe_load(BASELINE.read_text())
    for md in raw["mds"]:
        md["harvest_rate_E"] = 0.01
        md["power_budget_C"] = 0.0
    # static draw exceeds every budget: no device can act at all
    cfgp = tmp_path / "broke.yaml"
    cfgp.write_text(yaml.safe_dump(raw))
    out = tmp_path / "audit"
    rc = main(["audit", "--config", str(cfgp), "--out", str(out),
               "--resolution", "0.01", "--no-figures"])
    assert rc == 0
    lines = (out / "audit.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    assert all(r[4] == "infeasible" for r in rows)


def test_audit_small_resolution_agreement(quick_config, tmp_path):
    out = tmp_path / "audit2"
    rc = main(["audit", "--config", str(quick_config), "--out", str(out),
               "--resolution", "0.002", "--profile", "zero", "--no-figures"])
    assert rc == 0
    lines = (out / "audit.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    assert all(r[4] == "ok" for r in rows)
    assert all(float(r[3]) <= 1e-2 for r in rows)


def test_exponential_gain_config(tmp_path):
    raw = yaml.safe_load(BASELINE.read_text())
    raw["links"]["channel_gain_h2"] = {
        "distribution": "exponential",
        "means": [[0.3, 0.2], [0.25, 0.25]],
        "seed": 7,
    }
    raw["dynamics"] = {"damping": 0.5}
    cfgp = tmp_path / "expo.yaml"
    cfgp.write_text(yaml.safe_dump(raw))
    out = tmp_path / "expo_out"
    rc = main(["solve", "--config", str(cfgp), "--out", str(out),
               "--max-iters", "60", "--no-figures"])
    assert rc == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["config"]["links"]["channel_gain_h2"]["seed"] == 7


def test_validate_solve_profile_with_figures(quick_config, tmp_path):
    out = tmp_path / "valsolve"
    rc = main(["validate", "--config", str(quick_config), "--out", str(out),
               "--profile", "solve", "--horizon", "20000", "--warmup", "2000",
               "--replications", "3"])
    assert rc == 0
    assert (out / "validate.csv").exists()
    assert (out / "validate.png").stat().st_size > 0


def test_sweep_figure_rendered(quick_config, tmp_path):
    out = tmp_path / "sweepfig"
    rc = main(["sweep", "--config", str(quick_config), "--out", str(out),
               "--target", "rate_R11", "--coefficients", "0.8", "1.6"])
    assert rc == 0
    assert (out / "sweep.png").stat().st_size > 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
