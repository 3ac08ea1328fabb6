import json

import pytest

from ccim.cli import RunConfig, build_parser, main, make_config, read_config


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_read_config(tmp_path):
    p = write(tmp_path, "run.cfg", "# sweep\nsurface = donut\nN = 20, 30 ,40  # comment\n\ntol=1e-8\n")
    assert read_config(p) == {"surface": "donut", "N": "20, 30 ,40", "tol": "1e-8"}


@pytest.mark.parametrize("text,match", [("bogus = 1\n", "unknown key"), ("surface donut\n", "key=value")])
def test_read_config_errors(tmp_path, text, match):
    with pytest.raises(ValueError, match=match):
        read_config(write(tmp_path, "bad.cfg", text))


def test_flags_override_config(tmp_path):
    p = write(tmp_path, "run.cfg", "surface = donut\nN = 20,30\ntol = 1e-6\n")
    args = build_parser().parse_args(["converge", "--config", str(p), "--N", "24,32,48", "--threads", "2"])
    cfg = make_config(args)
    assert cfg.surface == "donut"
    assert cfg.Ns == [24, 32, 48]
    assert cfg.tol == 1e-6
    assert cfg.threads == 2


def test_defaults():
    cfg = make_config(build_parser().parse_args(["solve"]))
    assert cfg.Ns == [20, 30, 40] and cfg.tol == 1e-9 and cfg.surface == "ellipsoid"


@pytest.mark.parametrize("kw", [{"Ns": [40, 20]}, {"Ns": [20, 20]}, {"Ns": []}, {"tol": 0.0}, {"threads": 0}])
def test_run_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_descending_sweep_is_config_error(tmp_path, capsys):
    assert main(["converge", "--N", "40,20", "--out", str(tmp_path)]) == 2
    assert "strictly increasing" in capsys.readouterr().err


def test_solve_quadratic_oracle(tmp_path, capsys):
    out = tmp_path / "solve"
    code = main(["solve", "--surface", "sphere", "--problem", "quadratic_oracle", "--N", "20", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    (row,) = summary["rows"]
    assert row["N"] == 20
    assert row["err_u_inf"] < 1e-7
    assert summary["config"]["surface"] == "sphere"
    assert sum(summary["scheme_histogram"].values()) > 0
    assert (out / "convergence.csv").exists()
    assert "err_u=" in capsys.readouterr().out


def test_converge_writes_slopes(tmp_path):
    out = tmp_path / "conv"
    code = main(["converge", "--surface", "sphere", "--problem", "smooth_poisson", "--N", "16,20,24", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["rows"]) == 3
    assert summary["slopes"]["slope_u"] < -1.5
    assert (out / "convergence.csv").read_text().startswith("N,h,err_u_inf")


def test_dump_matrix(tmp_path):
    out = tmp_path / "dump"
    assert main(["dump-matrix", "--surface", "sphere", "--problem", "quadratic_oracle", "--N", "12", "--out", str(out)]) == 0
    assert (out / "matrix_N12.mtx").exists()
    assert (out / "matrix_N12_rhs.mtx").exists()
    assert json.loads((out / "summary.json").read_text())["n"] == 13**3


def test_evolve_short(tmp_path):
    out = tmp_path / "ev"
    assert main(["evolve", "--N", "20", "--T", "0.01", "--out", str(out)]) == 0
    assert (out / "evolve_history_N20.csv").exists()
    assert (out / "evolve_radii_N20.csv").exists()


def test_molecule_small(tmp_path):
    pqr = write(tmp_path, "two.pqr", "ATOM 1 C X 1 -1.0 0.0 0.0 0.0 1.6\nATOM 2 C X 1 1.0 0.0 0.0 0.0 1.6\n")
    out = tmp_path / "mol"
    assert main(["molecule", "--pqr", str(pqr), "--N", "20", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["atoms"] == 2
    assert summary["rows"][0]["interface_points"] > 0


def test_molecule_needs_pqr(tmp_path, capsys):
    assert main(["molecule", "--N", "20", "--out", str(tmp_path)]) == 1
    assert "--pqr" in capsys.readouterr().err


def test_unknown_surface_fails_cleanly(tmp_path, capsys):
    assert main(["solve", "--surface", "teapot", "--N", "20", "--out", str(tmp_path)]) == 1
    assert "unknown surface" in capsys.readouterr().err


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "ccim" in capsys.readouterr().out
