import json
import math
from pathlib import Path

import pytest

from ab_wavelab import cli
from ab_wavelab.errors import ParseError

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def _load(name):
    return json.loads((CONFIGS / name).read_text())


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg, indent=2))
    return p


def test_run_writes_report(tmp_path, capsys):
    p = _write(tmp_path, _load("fig1_magnetic.json"))
    assert cli.main(["run", str(p), "-o", str(tmp_path / "out")]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    r = rep["result"]
    assert r["predicted"] == pytest.approx(2.0)
    assert abs(r["measured_peak"] - r["predicted"]) < 0.15 * r["predicted"]
    assert (tmp_path / "out" / "profile.csv").exists()
    assert "measured_peak" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    p = _write(tmp_path, _load("fig1_magnetic.json"))
    cli.main(["run", str(p), "-o", str(tmp_path / "a")])
    cli.main(["run", str(p), "-o", str(tmp_path / "b")])
    for f in ("report.json", "profile.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_echo_reruns(tmp_path):
    p = _write(tmp_path, _load("fig1_magnetic.json"))
    cli.main(["run", str(p), "-o", str(tmp_path / "a")])
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    p2 = _write(tmp_path, rep["config"], "echo.json")
    cli.main(["run", str(p2), "-o", str(tmp_path / "b")])
    rep2 = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep2["result"] == rep["result"]
    assert rep2["config"] == rep["config"]


def test_overlapping_obstacles_rejected(tmp_path, capsys):
    cfg = _load("fig1_magnetic.json")
    cfg["domain"]["obstacles"].append({"id": "b", "shape": {"type": "disk", "center": [0.0, 1.52], "radius": 0.04}})
    p = _write(tmp_path, cfg)
    assert cli.main(["run", str(p), "-o", str(tmp_path / "out")]) == 2
    assert "pairwise disjoint" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_unknown_key_has_location(tmp_path):
    cfg = _load("fig1_magnetic.json")
    cfg["probe"]["raduis"] = 0.1
    text = json.dumps(cfg, indent=2)
    with pytest.raises(ParseError) as e:
        cli.parse_config(text)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "raduis" in l)
    assert e.value.line == line
    assert e.value.column is not None


def test_invalid_json_has_location(tmp_path, capsys):
    p = _write(tmp_path, '{\n  "experiment": "mirror",\n  "k": 80,,\n}')
    assert cli.main(["validate", str(p)]) == 2
    d = json.loads(capsys.readouterr().out)[0]
    assert d["error"] == "ParseError" and d["line"] == 3


def test_wide_strip_diagnostic(tmp_path):
    cfg = _load("fig1_magnetic.json")
    cfg["beams"]["omega"]["delta1"] = 0.5
    diags = cli.validate(_write(tmp_path, cfg))
    assert diags[0]["error"] == "SupportIntersectsObstacle"
    assert "transverse cutoff" in diags[0]["message"]


def test_resonant_k_with_coincident_beams(tmp_path):
    cfg = _load("fig1_magnetic.json")
    cfg["beams"]["theta"] = cfg["beams"]["omega"]
    cfg["k"] = {"resonant": 1, "k0": 80}
    diags = cli.validate(_write(tmp_path, cfg))
    assert diags and diags[0]["error"] == "DegenerateGeometry"


def test_valid_config_has_no_diagnostics(tmp_path):
    for name in ("fig1_magnetic.json", "fig2_broken.json", "mirror.json", "electric.json"):
        assert cli.validate(CONFIGS / name) == [], name


def test_numerical_failure_exit_code(tmp_path):
    cfg = _load("mirror.json")
    cfg["mirrors"][0]["a"] = [3.0, 5.0]
    p = _write(tmp_path, cfg)
    assert cli.main(["run", str(p), "-o", str(tmp_path / "out")]) == 3


def test_sweep(tmp_path):
    p = _write(tmp_path, _load("fig1_magnetic.json"))
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(p), "--param", "fluxes.0.flux", "--values", f"0,{math.pi}", "-o", str(out)]) == 0
    s = json.loads((out / "sweep.json").read_text())
    peaks = [r["result"]["measured_peak"] for r in s["runs"]]
    assert peaks[0] < 0.05 and peaks[1] == pytest.approx(4.0, rel=0.05)
    assert (out / "sweep_001" / "report.json").exists()


def test_sweep_bad_path(tmp_path):
    p = _write(tmp_path, _load("fig1_magnetic.json"))
    assert cli.main(["sweep", str(p), "--param", "nope.flux", "--values", "1", "-o", str(tmp_path / "o")]) == 2
