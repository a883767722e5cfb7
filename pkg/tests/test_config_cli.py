import hashlib
import json
import math

import numpy as np
import pytest

from casimir_lattice import cli
from casimir_lattice.config import ConfigError, RunConfig, desk_config, large_config


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_round_trip():
    for exp in ("torque3d", "crossover2d", "rough2d", "flat2d"):
        for cfg in (desk_config(exp), large_config(exp)):
            assert RunConfig.from_ini(cfg.to_ini()) == cfg
    cfg = desk_config("crossover2d").replace(alpha=0.05, fit_min=6.0, antithetic=False)
    assert RunConfig.from_ini(cfg.to_ini()) == cfg
    assert math.isinf(RunConfig.from_ini("[run]\nexperiment=crossover2d\n[lattice]\nextent=8,8\n"
                                         "[quadrature]\nn_nodes=4\n[materials]\nomega0=inf,0.1\n").omega0[0])


def test_missing_key_names_key_and_section():
    with pytest.raises(ConfigError, match=r"missing required key 'n_nodes' in section \[quadrature\]"):
        RunConfig.from_ini("[run]\nexperiment = flat2d\n[lattice]\nextent = 8, 8\n")


@pytest.mark.parametrize("text, msg", [
    ("[run]\nexperiment=flat2d\n[lattice]\nextent=8,8\n[quadrature]\nn_nodes=4\nnodes=3\n", "unknown key"),
    ("[run]\nexperiment=flat2d\n[lattice]\nextent=8,8\n[quadrature]\nn_nodes=4\n[extra]\n", "unknown section"),
    ("[run]\nexperiment=flat2d\n[lattice]\nextent=9,9\n[quadrature]\nn_nodes=4\n", "even extent"),
    ("[run]\nexperiment=torque3d\n[lattice]\nextent=9,9\n[quadrature]\nn_nodes=4\n", "3D extent"),
    ("[run]\nexperiment=flat2d\n[lattice]\nextent=8,8\n[quadrature]\nn_nodes=x\n", "bad value"),
    ("[run]\nexperiment=flat2d\n[lattice]\nextent=8,8\n[quadrature]\nn_nodes=4\nalpha=-1\n", "alpha"),
])
def test_bad_configs(text, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_ini(text)


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = write(tmp_path, "[run]\nexperiment = flat2d\n")
    assert cli.main(["flat2d", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == "error" and "extent" in rec["message"]
    assert json.loads((tmp_path / "o" / "error.json").read_text())["stage"] == "config"
    assert cli.main(["flat2d", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG


def read_csv(path):
    lines = path.read_text().splitlines()
    meta = dict(line[2:].split("=", 1) for line in lines if line.startswith("# "))
    body = [line for line in lines if not line.startswith("#")]
    return meta, body[0].split(","), np.array([[float(x) for x in row.split(",")] for row in body[1:]])


SMALL = {
    "flat2d": "[lattice]\nextent = 32, 32\n[quadrature]\nn_nodes = 4\n[geometry]\nr_min = 3\nr_max = 6\nratio = 1.35\n"
              "[fit]\nfit_min = 3\nfit_max = 6\n",
    "rough2d": "[lattice]\nextent = 32, 32\n[quadrature]\nn_nodes = 4\n[geometry]\nr_min = 3\nr_max = 6\nratio = 1.35\n"
               "[fit]\nfit_min = 3\nfit_max = 6\n[ensemble]\nrealizations = 3\n",
    "crossover2d": "[lattice]\nextent = 32, 32\n[quadrature]\nn_nodes = 4\n[geometry]\nr_max = 9\n"
                   "[materials]\nomega0 = inf, 0.1\n[fit]\nfit_min = 4\nfit_max = 12\n",
    "torque3d": "[lattice]\nextent = 12, 12, 12\n[quadrature]\nn_nodes = 3\n[geometry]\ndiameter = 8\n"
                "angles = 0, 0.3926990816987241, 3.141592653589793\n",
}


def run(tmp_path, exp, *extra, out="out"):
    p = write(tmp_path, f"[run]\nexperiment = {exp}\n" + SMALL[exp], f"{exp}.ini")
    o = tmp_path / out
    code = cli.main([exp, "--config", str(p), "--out", str(o), "--threads", "1", *extra])
    return code, o


@pytest.mark.parametrize("exp, files", [
    ("flat2d", ["flat_curve.csv", "fit_summary.csv"]),
    ("crossover2d", ["crossover_omega0_inf.csv", "crossover_omega0_0.1.csv", "fit_summary.csv"]),
    ("torque3d", ["torque_curve.csv", "torque.csv"]),
    ("rough2d", ["rough_aggregate.csv", "seeds.csv", "fit_summary.csv", "realizations/energies_00002.csv",
                 "realizations/heights_00000.csv"]),
])
def test_cli_runs_write_outputs_and_manifest(tmp_path, exp, files):
    code, out = run(tmp_path, exp)
    assert code == cli.EXIT_OK
    # strict JSON: no NaN or Infinity tokens
    man = json.loads((out / "manifest.json").read_text(), parse_constant=lambda c: pytest.fail(c))
    assert man["status"] == "ok" and man["command"] == exp
    for f in files:
        assert (out / f).exists()
    for f in files[:2]:
        assert man["outputs"][f] == hashlib.sha256((out / f).read_bytes()).hexdigest()
    meta, header, data = read_csv(out / files[0])
    assert meta["experiment"] == exp and data.ndim == 2 and np.all(np.isfinite(data))
    assert "nan" not in (out / "fit_summary.csv").read_text() if exp != "torque3d" else True
    assert RunConfig.read(out / "config.ini").experiment == exp
    assert not (out / "error.json").exists()


def test_flat_energy_is_attractive(tmp_path):
    _, out = run(tmp_path, "flat2d")
    _, header, data = read_csv(out / "flat_curve.csv")
    assert header == ["r", "U", "U_scaled"]
    assert np.all(data[:, 1] < 0) and np.all(np.diff(data[:, 1]) > 0)


def test_resume_reuses_checkpoints(tmp_path):
    _, out = run(tmp_path, "crossover2d")
    first = json.loads((out / "manifest.json").read_text())
    assert first["checkpoint"]["reused"] == 0
    _, out = run(tmp_path, "crossover2d", "--resume")
    second = json.loads((out / "manifest.json").read_text())
    assert second["checkpoint"]["computed"] == 0 and second["checkpoint"]["reused"] == first["checkpoint"]["computed"]
    a = read_csv(out / "crossover_omega0_inf.csv")[2]
    _, out2 = run(tmp_path, "crossover2d", out="fresh")
    assert np.array_equal(a, read_csv(out2 / "crossover_omega0_inf.csv")[2])


def test_flags_override_config(tmp_path):
    code, out = run(tmp_path, "flat2d", "--ng", "5", "--alpha", "0.2", "--seed", "9")
    assert code == 0
    cfg = RunConfig.read(out / "config.ini")
    assert (cfg.n_nodes, cfg.alpha, cfg.seed) == (5, 0.2, 9)
    meta, _, _ = read_csv(out / "flat_curve.csv")
    assert meta["n_nodes"] == "5" and float(meta["alpha"]) == 0.2


def test_rough_replay_is_deterministic(tmp_path):
    _, out = run(tmp_path, "rough2d")
    before = (out / "realizations" / "energies_00001.csv").read_text()
    (out / "realizations" / "energies_00001.csv").unlink()
    code, _ = run(tmp_path, "rough2d", "--replay", "1", out="replay")
    assert code == 0
    assert (tmp_path / "replay" / "realizations" / "energies_00001.csv").read_text() == before
    rows = [r for r in (out / "seeds.csv").read_text().splitlines() if not r.startswith("#")]
    assert rows[0] == "index,seed,negate,status" and len(rows) == 4
    assert all(r.endswith(",ok") for r in rows[1:])
    assert run(tmp_path, "rough2d", "--replay", "7", out="bad")[0] == cli.EXIT_CONFIG


def test_estimate_only_warns_at_large_scale(tmp_path, capsys):
    p = tmp_path / "large.ini"
    large_config("torque3d").write(p)
    code = cli.main(["torque3d", "--config", str(p), "--out", str(tmp_path / "o"), "--estimate-only"])
    assert code == 0
    captured = capsys.readouterr()
    est = json.loads(captured.out)
    assert est["extrapolated"] and est["factor_bytes"] > 0
    if est["physical_memory"] and est["factor_bytes"] > 0.5 * est["physical_memory"]:
        assert "warning" in captured.err


def test_validate_exit_codes(capsys):
    assert cli.main(["validate"]) == cli.EXIT_OK
    assert "8/8 checks passed" in capsys.readouterr().out
    for fault in ("operator_assembly", "curl_sign", "schur"):
        assert cli.main(["validate", "--inject-fault", fault]) == cli.EXIT_FAILED
        assert "FAIL" in capsys.readouterr().out
