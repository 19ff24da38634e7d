import csv
import json
from importlib import resources

import numpy as np
from click.testing import CliRunner

from gaussfield import cache, lightcone, weyl
from gaussfield.cli import (EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE, format_value, main, parse_config,
                            run_command, to_json)

SHIPPED = resources.files("gaussfield").joinpath("data/example.json").read_text()
SMALL_Q = {"p_max": 30.0, "n_radial": 48, "n_polar": 32, "n_azimuth": 16,
           "lc_radial": 48, "lc_polar": 24, "lc_azimuth": 24}


def small_config(**blocks):
    doc = json.loads(SHIPPED)
    for k in ("gauss", "limit", "energy", "weyl", "check"):
        doc.pop(k)
    doc.update(blocks)
    return json.dumps(doc)


def gauss_only():
    return small_config(gauss=json.loads(SHIPPED)["gauss"])


def write(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text)
    return p


# formatting -----------------------------------------------------------------

def test_format_17_digits():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(1) / 3) == "0.33333333333333331"
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value(7) == "7"


def test_json_writer():
    doc = json.loads(to_json({"a": 0.1, "b": [float("nan"), 1e-300], "c": 1 + 2j, "d": np.float32(0.5)}))
    assert doc == {"a": 0.1, "b": [None, 1e-300], "c": [1.0, 2.0], "d": 0.5}


# config errors ----------------------------------------------------------------

def test_no_objects_is_config_error(tmp_path):
    code, _, msg = run_command("gauss", json.dumps({"objects": {}}), tmp_path)
    assert code == EXIT_CONFIG and "no objects" in msg


def test_bad_json_reports_line(tmp_path):
    code, _, msg = run_command("gauss", '{\n  "objects": {,\n}', tmp_path)
    assert code == EXIT_CONFIG and "line 2" in msg


def test_unknown_reference(tmp_path):
    doc = json.loads(gauss_only())
    doc["gauss"]["rows"][0]["measurement"] = "nowhere"
    code, _, msg = run_command("gauss", json.dumps(doc), tmp_path)
    assert code == EXIT_CONFIG and "nowhere" in msg


def test_invalid_sigma_is_config_error(tmp_path):
    doc = json.loads(gauss_only())
    doc["charges"]["q_far"]["sigma"] = "theta"  # supported at the origin
    code, _, msg = run_command("gauss", json.dumps(doc), tmp_path)
    assert code == EXIT_CONFIG and "q_far" in msg


def test_missing_block(tmp_path):
    code, _, msg = run_command("limit", gauss_only(), tmp_path)
    assert code == EXIT_CONFIG


def test_parse_shipped_config():
    cfg = parse_config(SHIPPED)
    assert {"q_far", "q_near", "q_limit", "q_energy"} <= set(cfg.charges)
    assert cfg.obj("m_transverse", "x", "vector").rank == "vector"


# commands ------------------------------------------------------------------------

def test_gauss_table(tmp_path):
    code, res, msg = run_command("gauss", gauss_only(), tmp_path)
    assert code == EXIT_OK, msg
    rows = list(csv.DictReader(open(tmp_path / "gauss.csv", newline="")))
    assert [r["case"] for r in rows] == ["FixedInside", "BothInside", "CompensatorInside"]
    for r in rows:
        assert abs(float(r["readout"]) - float(r["expected"])) < 1e-3
        # 17 significant digits round-trip exactly
        assert format_value(float(r["readout"])) == r["readout"]
    doc = json.loads((tmp_path / "gauss.json").read_text())
    assert doc["passed"] is True and len(doc["rows"]) == 3


def test_tolerance_scale_violation(tmp_path):
    code, res, msg = run_command("gauss", gauss_only(), tmp_path, tolerance_scale=1e-9)
    assert code == EXIT_TOLERANCE
    assert (tmp_path / "gauss.json").exists()


def test_threads_do_not_change_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_command("gauss", gauss_only(), a, threads=1)
    run_command("gauss", gauss_only(), b, threads=2)
    assert (a / "gauss.csv").read_bytes() == (b / "gauss.csv").read_bytes()


def test_weyl_command(tmp_path):
    doc = json.loads(SHIPPED)["weyl"]
    code, res, msg = run_command("weyl", small_config(weyl=doc), tmp_path)
    assert code == EXIT_OK, msg
    names = [r["word"] for r in res.rows]
    assert names == list(doc["words"])
    by = {r["word"]: r for r in res.rows}
    assert by["charged_only"]["gauge_invariant"] is False
    assert by["gauge_invariant"]["gauge_invariant"] is True
    assert res.extra["witness"]["difference"] > 0.1


def test_check_is_deterministic(tmp_path):
    blk = json.loads(SHIPPED)["check"]
    blk.pop("lattice")
    blk["quadrature"] = SMALL_Q
    text = small_config(check=blk)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_command("check", text, a)[0] == EXIT_OK
    assert run_command("check", text, b)[0] == EXIT_OK
    assert (a / "check.csv").read_bytes() == (b / "check.csv").read_bytes()
    ja, jb = (json.loads((d / "check.json").read_text()) for d in (a, b))
    ja.pop("wall_time"), jb.pop("wall_time")
    assert ja == jb


# click front end -------------------------------------------------------------

def test_click_exit_codes(tmp_path):
    runner = CliRunner()
    cfg = write(tmp_path, gauss_only())
    ok = runner.invoke(main, ["gauss", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert ok.exit_code == EXIT_OK, ok.output
    bad = runner.invoke(main, ["gauss", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)])
    assert bad.exit_code == EXIT_CONFIG
    strict = runner.invoke(main, ["gauss", "--config", str(cfg), "--out", str(tmp_path / "s"),
                                  "--tolerance-scale", "1e-9"])
    assert strict.exit_code == EXIT_TOLERANCE


def test_help_lists_commands():
    out = CliRunner().invoke(main, ["--help"]).output
    for c in ("gauss", "limit", "energy", "weyl", "check"):
        assert c in out


def test_cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cache.ENV_VAR, str(tmp_path / "cache"))
    doc = json.loads(SHIPPED)["weyl"]
    code, _, _ = run_command("weyl", small_config(weyl=doc), tmp_path / "out")
    assert code == EXIT_OK
    files = list((tmp_path / "cache").glob("*.pkl"))
    assert len(files) == 1
    n_words, n_atoms = len(weyl.CACHE), len(lightcone._ATOM_PAIRS)
    weyl.CACHE.clear()
    lightcone.clear_cache()
    assert cache.load() == n_words + n_atoms
    assert len(weyl.CACHE) == n_words


def test_cache_unset_writes_nothing(tmp_path, monkeypatch):
    monkeypatch.delenv(cache.ENV_VAR, raising=False)
    assert cache.cache_dir() is None
    assert cache.save() is None
    assert cache.load() == 0
