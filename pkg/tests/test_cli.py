import json
import subprocess
import sys

import numpy as np
import pytest

from dispersive_lab import cli
from dispersive_lab.cli import load_scenario, main, shipped_scenario
from dispersive_lab.errors import ScenarioError
from dispersive_lab.verify import ESTIMATES


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def _scenario(tmp_path, name, **edits):
    data = json.loads(shipped_scenario(name).read_text())
    for path, value in edits.items():
        node = data
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        if value is None:
            del node[keys[-1]]
        else:
            node[keys[-1]] = value
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(data))
    return p


@pytest.mark.parametrize("name", list(ESTIMATES) + ["evolve_free_gaussian", "evolve_pt_bound_state"])
def test_shipped_scenarios_validate(name):
    load_scenario(shipped_scenario(name))


def test_missing_key_reports_path(tmp_path, capsys):
    p = _scenario(tmp_path, "evolve_free_gaussian", grid__N=None)
    assert main(["evolve", "--scenario", str(p)]) == 2
    err = _err(capsys)
    assert err["code"] == "scenario-invalid" and err["path"] == "grid.N"


def test_unknown_key_reports_path(tmp_path):
    p = _scenario(tmp_path, "evolve_free_gaussian", grid__spacing=0.1)
    with pytest.raises(ScenarioError) as exc:
        load_scenario(p)
    assert exc.value.data["path"] == "grid.spacing"


def test_bad_json(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["evolve", "--scenario", str(p)]) == 2
    assert _err(capsys)["code"] == "scenario-invalid"


def test_unknown_estimate_exit_2(capsys):
    assert main(["verify", "bogus"]) == 2
    assert _err(capsys)["code"] == "scenario-invalid"


def test_bad_command_exit_2(capsys):
    assert main(["bogus"]) == 2
    assert _err(capsys)["code"] == "usage"


def test_seed_range(capsys):
    assert main(["verify", "high_energy", "--seed", "-1"]) == 2
    assert _err(capsys)["code"] == "usage"


def test_strichartz_excluded_endpoint_exit_2(tmp_path, capsys):
    p = _scenario(tmp_path, "strichartz", grid={"mode": "cartesian", "n": 2, "L": 20.0, "N": 32},
                  potential={"preset": "free"}, run__params={"q": 2.0, "r": "inf", "T": 1.0})
    assert main(["verify", "strichartz", "--scenario", str(p)]) == 2
    err = _err(capsys)
    assert err["code"] == "inadmissible-pair" and err["defect"] == 0.0


def test_strichartz_inadmissible_pair_reports_defect(tmp_path, capsys):
    p = _scenario(tmp_path, "strichartz", run__params={"q": 2.0, "r": 3.0, "T": 1.0})
    assert main(["verify", "strichartz", "--scenario", str(p)]) == 2
    assert _err(capsys)["defect"] == pytest.approx(0.5)


def test_non_decaying_inline_potential_rejected(tmp_path, capsys):
    x = np.linspace(-20, 20, 64, endpoint=False)
    p = _scenario(tmp_path, "evolve_free_gaussian", grid={"mode": "cartesian", "n": 1, "L": 20.0, "N": 64},
                  potential={"inline": {"V0": (1.0 / (1.0 + x**2)).tolist()}, "delta": 8.0})
    assert main(["evolve", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    assert _err(capsys)["code"] == "configuration"


def test_evolve_writes_trajectory(tmp_path):
    out = tmp_path / "o"
    assert main(["evolve", "--scenario", str(shipped_scenario("evolve_pt_bound_state")), "--out", str(out)]) == 0
    rows = (out / "trajectory.csv").read_bytes().split(b"\r\n")
    assert rows[0] == b"t,norm,weighted_norm"
    vals = np.array([[float(v) for v in r.split(b",")] for r in rows[1:] if r])
    # a bound state keeps its norm and its weighted norm
    assert np.allclose(vals[:, 1], 1.0, atol=1e-12)
    assert np.allclose(vals[:, 2], vals[0, 2], atol=1e-12)
    assert (out / "snapshots.npz").exists()


def test_evolve_deterministic(tmp_path):
    sc = str(shipped_scenario("evolve_free_gaussian"))
    main(["evolve", "--scenario", sc, "--out", str(tmp_path / "a"), "--seed", "7"])
    main(["evolve", "--scenario", sc, "--out", str(tmp_path / "b"), "--seed", "7"])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_verify_floquet_identity(tmp_path, capsys):
    assert main(["verify", "floquet_identity", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "pass"
    assert (tmp_path / "floquet_identity.csv").exists() and (tmp_path / "floquet_identity.json").exists()


@pytest.mark.slow
def test_verify_high_energy_default_passes(tmp_path):
    assert main(["verify", "high_energy", "--out", str(tmp_path)]) == 0


def test_reproduce_all_filter_and_determinism(tmp_path, capsys):
    assert main(["reproduce-all", "--only", "free", "--out", str(tmp_path / "a"), "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "wall clock" in out
    main(["reproduce-all", "--only", "free", "--out", str(tmp_path / "b"), "--seed", "7"])
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    assert a == (tmp_path / "b" / "summary.csv").read_bytes()
    assert a.count(b"\r\n") >= 2


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dispersive_lab.cli", "verify", "bogus"], capture_output=True, text=True)
    assert r.returncode == 2
    assert json.loads(r.stderr.strip())["code"] == "scenario-invalid"


def test_exit_codes_map_verdicts():
    assert cli.VERDICT_EXIT == {"pass": 0, "fail": 3, "inconclusive": 4}
