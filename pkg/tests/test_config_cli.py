import csv
import json
import math
import re
import subprocess
import sys

import numpy as np
import pytest

from fkeit.cli import EXIT_CONFIG, EXIT_OK, EXIT_SIMULATION, PROBE_COLUMNS, main, shipped_config
from fkeit.config import RunConfig
from fkeit.errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SHIPPED = ["dirichlet_disk", "continuum_disk", "cem_two_electrodes", "cem_bump", "dtn_disk", "trace_disk",
           "jump_disk", "calibrate_disk", "oracle_cem", "oracle_square", "validate"]


def _load(name):
    with open(shipped_config(name), "rb") as fh:
        return tomllib.load(fh)


def _write_toml(path, d):
    # minimal TOML writer for the flat tables used in configurations
    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(val(x) for x in v) + "]"
        return repr(v)

    lines = [f"{k} = {val(v)}" for k, v in d.items() if not isinstance(v, dict)]
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append(f"[{k}]")
            lines += [f"{kk} = {val(vv)}" for kk, vv in v.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_validate(name):
    RunConfig.load(shipped_config(name))


@pytest.mark.parametrize("name", SHIPPED)
def test_round_trip(name):
    cfg = RunConfig.load(shipped_config(name))
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_validation_errors():
    base = _load("dirichlet_disk")
    bad_probe = dict(base, probes=[[2.0, 0.0]])
    with pytest.raises(ConfigError, match="outside"):
        RunConfig.from_dict(bad_probe)
    with pytest.raises(ConfigError, match="ellipticity"):
        RunConfig.from_dict(dict(base, conductivity={"kind": "constant", "matrix": [[4.0, 0.0], [0.0, 0.25]],
                                                     "c0": 2.0}))
    with pytest.raises(ConfigError, match="unknown keys"):
        RunConfig.from_dict(dict(base, simulation={"dt": 1e-4, "bogus": 1}))
    with pytest.raises(ConfigError, match="dt"):
        RunConfig.from_dict(dict(base, simulation={"dt": 0.0}))
    cont = _load("continuum_disk")
    with pytest.raises(ConfigError, match="zero"):
        RunConfig.from_dict(dict(cont, boundary={"type": "constant", "value": 1.0}))
    cem = _load("cem_two_electrodes")
    with pytest.raises(ConfigError, match="grounding"):
        RunConfig.from_dict(dict(cem, electrodes=dict(cem["electrodes"], voltages=[1.0, 1.0])))
    with pytest.raises(ConfigError, match="problem"):
        RunConfig.from_dict(dict(base, problem="nonsense"))


def test_grid_conductivity_from_csv(tmp_path):
    (tmp_path / "k.csv").write_text("nx,ny,xmin,ymin,xmax,ymax\n3,3,-1,-1,1,1\ni,j,value\n" + "".join(
        f"{i},{j},{1 + 0.1 * i + 0.2 * j}\n" for i in range(3) for j in range(3)))
    d = _load("dirichlet_disk")
    d["conductivity"] = {"kind": "grid", "csv": "k.csv"}
    cfg_path = _write_toml(tmp_path / "c.toml", d)
    field_ = RunConfig.load(cfg_path).build_field()
    assert field_.evaluate((0.0, 0.0))[0, 0] == pytest.approx(1.3)


def _small_cem(tmp_path):
    d = _load("cem_two_electrodes")
    d["n_paths"] = 200
    d["probes"] = [[0.0, 0.5], [0.3, -0.6]]
    d["simulation"]["dt"] = 1e-3
    return _write_toml(tmp_path / "cem.toml", d)


def test_cem_csv_format(tmp_path):
    cfg = _small_cem(tmp_path)
    assert main(["solve-cem", "--config", str(cfg), "--out", str(tmp_path / "o"), "--workers", "1"]) == EXIT_OK
    with open(tmp_path / "o" / "solve_cem.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][: len(PROBE_COLUMNS)] == PROBE_COLUMNS
    assert rows[0][:5] == ["probe_x", "probe_y", "mean", "stderr", "n_paths"]
    assert len(rows) == 3
    for r in rows[1:]:
        assert int(r[4]) == 200 and int(r[5]) == 3 and float(r[6]) == 1e-3
        assert math.isfinite(float(r[2])) and float(r[3]) >= 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["seed"] == 3 and man["dt"] == 1e-3
    assert "numpy" in man["versions"] and man["wall_seconds"] >= 0
    # the echoed configuration re-parses to the same run
    assert RunConfig.from_dict(man["config"]) == RunConfig.load(cfg)


def test_determinism_across_workers(tmp_path):
    cfg = _small_cem(tmp_path)
    outs = []
    for w in ("1", "4"):
        o = tmp_path / f"w{w}"
        assert main(["solve-cem", "--config", str(cfg), "--out", str(o), "--workers", w]) == EXIT_OK
        outs.append((o / "solve_cem.csv").read_bytes())
    assert outs[0] == outs[1]


def test_seed_override(tmp_path):
    cfg = _small_cem(tmp_path)
    main(["solve-cem", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "99"])
    rows = list(csv.reader(open(tmp_path / "a" / "solve_cem.csv")))
    assert rows[1][5] == "99"


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('problem = "dirichlet"\n[domain]\nshape = "disk"\n[simulation]\ndt = -1.0\n')
    assert main(["solve-dirichlet", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["solve-dirichlet", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG
    # problem/subcommand mismatch
    assert main(["solve-cem", "--config", str(shipped_config("dirichlet_disk")), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_exit_code_simulation_error(tmp_path):
    d = _load("dirichlet_disk")
    d["n_paths"] = 10
    d["simulation"]["max_time"] = 1e-3  # paths from the centre cannot exit this soon
    d["probes"] = [[0.0, 0.0]]
    cfg = _write_toml(tmp_path / "c.toml", d)
    assert main(["solve-dirichlet", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SIMULATION
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["exit_code"] == EXIT_SIMULATION


def test_oracle_subcommand(tmp_path):
    d = _load("oracle_cem")
    d["oracle"]["resolution"] = 32
    cfg = _write_toml(tmp_path / "o.toml", d)
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    grid = np.loadtxt(tmp_path / "o" / "oracle_grid.csv", delimiter=",", skiprows=1)
    assert grid.shape[1] == 3 and grid.shape[0] == 32 * 128


@pytest.mark.parametrize("sub,name", [("estimate-dtn", "dtn_disk"), ("boundary-trace", "trace_disk"),
                                      ("jump-kernel", "jump_disk"), ("calibrate", "calibrate_disk"),
                                      ("solve-dirichlet", "dirichlet_disk"), ("solve-continuum", "continuum_disk")])
def test_other_subcommands_run(tmp_path, sub, name):
    d = _load(name)
    d["n_paths"] = 64
    d["simulation"]["dt"] = max(d["simulation"].get("dt", 1e-4), 1e-3) if name != "dtn_disk" else 1e-4
    if "trace" in d:
        d["trace"] = {k: v for k, v in d["trace"].items()}
        if "S" in d["trace"]:
            d["trace"]["S"] = min(d["trace"]["S"], 0.5)
        if "n_starts" in d["trace"]:
            d["trace"]["n_starts"] = min(d["trace"]["n_starts"], 8)
    cfg = _write_toml(tmp_path / "c.toml", d)
    assert main([sub, "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / f"{sub.replace('-', '_')}.csv").stat().st_size > 0


def test_validate_subset_via_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fkeit.cli", "validate", "--criteria", "5", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_OK, r.stderr
    assert re.search(r"\[PASS\] criterion +5 ", r.stdout)
