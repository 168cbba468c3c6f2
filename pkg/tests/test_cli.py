import csv
import json
import math

import pytest

from pairdrive import cli, moments
from pairdrive.specialfn import LogComplex


def _config(tmp_path, text):
    p = tmp_path / "model.toml"
    p.write_text(text)
    return str(p)


D0 = """
[model]
n = 2
d = 0
big_u = 1.0
delta = 0.3
kappa = 0.2
g_re = 0.4
"""

VAC = """
[model]
n = 3
d = 0
big_u = 1.0
delta = 0.3
kappa = 0.2
g_re = 0.0
"""


def _rows(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.reader(lines))


def test_observables_json(tmp_path, capsys):
    cfg = _config(tmp_path, D0)
    out = tmp_path / "o.json"
    assert cli.main(["observables", "--config", cfg, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["nbar"] > 0
    assert "pcs_residual" in data and "concentration" in data


def test_observables_vacuum(tmp_path):
    out = tmp_path / "o.json"
    assert cli.main(["observables", "--config", _config(tmp_path, VAC), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["nbar"] == 0


def test_observables_with_oracle(tmp_path, capsys):
    out = tmp_path / "o.json"
    assert cli.main(["observables", "--config", _config(tmp_path, D0), "--oracle", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert abs(data["exact"]["nbar"] - data["oracle"]["nbar"]) < 1e-7
    assert "oracle" in capsys.readouterr().out


def test_resonance_message(tmp_path, capsys):
    cfg = _config(tmp_path, D0.replace("kappa = 0.2", "kappa = 0.0").replace("delta = 0.3", "delta = 1.0"))
    assert cli.main(["observables", "--config", cfg]) == 2
    assert "kappa >=" in capsys.readouterr().err


def test_sweep_csv_and_metadata(tmp_path):
    out = tmp_path / "s.csv"
    cfg = _config(tmp_path, D0)
    args = ["sweep", "--config", cfg, "--axis", "Delta:0:1:3", "--observables", "nbar,g2_inf,chi", "--out", str(out)]
    assert cli.main(args) == 0
    text = out.read_text()
    assert "# schema_version" in text and "# tol" in text
    rows = _rows(out)
    assert rows[0] == ["Delta", "nbar", "g2_inf", "chi"]
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.5, 1.0]
    # threaded output is identical
    out2 = tmp_path / "s2.csv"
    args[-1] = str(out2)
    assert cli.main(args + ["--threads", "3"]) == 0
    assert out2.read_text() == text


def test_sweep_single_point_matches_observables(tmp_path):
    cfg = _config(tmp_path, D0)
    out = tmp_path / "s.csv"
    assert cli.main(["sweep", "--config", cfg, "--observables", "nbar", "--out", str(out)]) == 0
    js = tmp_path / "o.json"
    cli.main(["observables", "--config", cfg, "--out", str(js)])
    assert float(_rows(out)[1][1]) == pytest.approx(json.loads(js.read_text())["nbar"], rel=1e-15)


def test_sweep_partial_failure(tmp_path):
    cfg = _config(tmp_path, D0.replace("kappa = 0.2", "kappa = 0.0"))
    out = tmp_path / "s.csv"
    # delta = 1 puts delta on 0 for n = 2
    assert cli.main(["sweep", "--config", cfg, "--axis", "Delta:0.5:1:2", "--observables", "nbar", "--out", str(out)]) == 3
    rows = _rows(out)
    assert math.isnan(float(rows[2][1]))
    assert "ResonanceError" in (tmp_path / "s.csv.log").read_text()


def test_bad_axis(tmp_path):
    cfg = _config(tmp_path, D0)
    assert cli.main(["sweep", "--config", cfg, "--axis", "Delta:0:1"]) == 2
    assert cli.main(["sweep", "--config", cfg, "--axis", "bogus:0:1:2"]) == 2
    assert cli.main(["sweep", "--config", cfg, "--axis", "kappa:0:1:2:log"]) == 2


def test_semiclassics_json(tmp_path):
    cfg = _config(tmp_path, D0.replace("delta = 0.3", "delta = 2.0"))
    out = tmp_path / "sc.json"
    assert cli.main(["semiclassics", "--config", cfg, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["s"] == 2 and data["fixed_points"]


def test_wigner_grid(tmp_path):
    cfg = _config(tmp_path, D0)
    out = tmp_path / "w.csv"
    assert cli.main(["wigner-grid", "--config", cfg, "--radius", "2", "--points", "5", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["re_alpha", "im_alpha", "W"] and len(rows) == 26


def test_oracle_check_passes(tmp_path, capsys):
    cfg = _config(tmp_path, D0)
    assert cli.main(["oracle-check", "--config", cfg, "--draws", "2", "--seed", "1"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_oracle_check_rejects_zero_loss(tmp_path, capsys):
    cfg = _config(tmp_path, D0.replace("kappa = 0.2", "kappa = 0.0"))
    assert cli.main(["oracle-check", "--config", cfg, "--draws", "1"]) == 2
    assert "kappa = 0" in capsys.readouterr().err


def test_oracle_check_catches_sign_flip(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(moments, "_sign", lambda m: LogComplex(0.0, 0.0))
    cfg = _config(tmp_path, D0)
    assert cli.main(["oracle-check", "--config", cfg, "--draws", "2", "--seed", "1"]) == 1
    out = capsys.readouterr().out
    assert "FAIL pairing" in out


def test_deterministic_output(tmp_path):
    cfg = _config(tmp_path, D0)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["observables", "--config", cfg, "--out", str(a)])
    cli.main(["observables", "--config", cfg, "--out", str(b)])
    assert a.read_text() == b.read_text()
