import csv
import json

import numpy as np
import pytest

from beamlab.cli import main
from beamlab.model import PotentialSpec, build_grid, sample_potential
from beamlab.spectral import build_hamiltonian, eigendecompose


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_classify_writes_resolved_config(tmp_path, capsys):
    code = _run(tmp_path, "classify", "--L", "15", "--n", "256", "--family", "resonance_example",
                "--param", "c=1", "--param", "d=1")
    assert code == 0
    assert capsys.readouterr().out.strip() == "FirstKind"
    rec = json.loads((tmp_path / "classify.json").read_text())
    assert rec["report"]["classification"] == "FirstKind"
    assert rec["config"]["grid"] == {"L": 15.0, "n": 256}
    assert rec["config"]["quadrature"]["rel_tol"] == 1e-6
    assert {"command", "version", "timestamp"} <= set(rec["meta"])


def test_spectrum_csv_columns(tmp_path):
    assert _run(tmp_path, "spectrum", "--L", "10", "--n", "64", "--family", "scaled_sech2",
                "--param", "a=-10") == 0
    rows = _read_csv(tmp_path / "spectrum.csv")
    assert list(rows[0]) == ["index", "eigenvalue", "participation_ratio", "is_bound"]
    assert len(rows) == 64
    assert float(rows[0]["eigenvalue"]) < 0


def test_probe_minv(tmp_path, capsys):
    assert _run(tmp_path, "probe", "--L", "15", "--n", "256", "--family", "scaled_sech2",
                "--param", "a=-0.3", "--what", "minv", "--points", "5") == 0
    fit = json.loads((tmp_path / "probe.json").read_text())["fit"]
    assert abs(fit["slope"]) < 0.3
    assert len(_read_csv(tmp_path / "probe.csv")) == 5


def test_vdc_summary(tmp_path):
    assert _run(tmp_path, "vdc", "--t-list", "10", "--N-range", "-4", "4") == 0
    rows = _read_csv(tmp_path / "vdc.csv")
    assert len(rows) == 9
    assert json.loads((tmp_path / "vdc.json").read_text())["summary"]["ratio_max"] < 10


def test_free_taylor(tmp_path):
    assert _run(tmp_path, "free", "--check", "taylor") == 0
    assert json.loads((tmp_path / "free.json").read_text())["summary"]["max_residual"] <= 1e-10


def test_decay_free_slope(tmp_path, capsys):
    assert _run(tmp_path, "decay", "--family", "zero", "--L", "15", "--n", "256",
                "--points", "9") == 0
    fit = json.loads((tmp_path / "decay.json").read_text())["fit"]
    assert fit["slope"] == pytest.approx(-0.5, abs=0.02)
    rows = _read_csv(tmp_path / "decay.csv")
    assert [float(r["t"]) for r in rows][0] == pytest.approx(10.0)


def test_json_output_format(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": {"L": 10, "n": 64}, "potential": {"family": "zero"},
                               "output": {"dir": str(tmp_path), "format": "json"}}))
    assert main(["spectrum", "--config", str(cfg)]) == 0
    table = json.loads((tmp_path / "spectrum_table.json").read_text())
    assert len(table) == 64 and set(table[0]) == {"index", "eigenvalue", "participation_ratio",
                                                  "is_bound"}


def test_floats_round_trip(tmp_path):
    _run(tmp_path, "spectrum", "--L", "10", "--n", "64", "--family", "scaled_sech2")
    written = np.array([float(r["eigenvalue"]) for r in _read_csv(tmp_path / "spectrum.csv")])
    g = build_grid(10.0, 64)
    sd = eigendecompose(build_hamiltonian(g, sample_potential(PotentialSpec("scaled_sech2"), g)))
    np.testing.assert_array_equal(written, sd.eigenvalues)


def test_invalid_grid_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "classify", "--L", "15", "--n", "100", "--family", "zero") == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "invalid_input" and err["key"] == "grid.n"


def test_unknown_family_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "classify", "--family", "square_well") == 2
    assert json.loads(capsys.readouterr().err)["key"] == "potential.family"


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_bad_thread_count(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BEAMLAB_THREADS", "0")
    assert _run(tmp_path, "free", "--check", "taylor") == 2
    assert json.loads(capsys.readouterr().err)["key"] == "BEAMLAB_THREADS"


def test_numerical_failure_exits_3(tmp_path, capsys):
    # two probe energies cannot carry a slope
    code = _run(tmp_path, "probe", "--L", "15", "--n", "256", "--family", "scaled_sech2",
                "--what", "minv", "--points", "2")
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "numerical_failure"
