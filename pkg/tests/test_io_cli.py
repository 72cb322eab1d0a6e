import json
import math
import os

import numpy as np
import pytest
from click.testing import CliRunner

from mollow.cli import main
from mollow.correlators import ResultGrid
from mollow.errors import ConfigError
from mollow.resultio import read_result, write_result


# ---------------------------------------------------------------------------
# result files


def _grid2d():
    g1 = np.linspace(-1.0, 1.0, 3)
    g2 = np.linspace(0.0, 5.0, 4)
    vals = np.arange(12, dtype=float).reshape(3, 4)
    vals[1, 2] = math.nan
    return ResultGrid(axes=[("frequency_1", g1), ("frequency_2", g2)],
                      values=vals,
                      metadata={"system": {"rabi": 5.0}, "note": "x"},
                      flags={(1, 2): "undefined: zero denominator"})


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_roundtrip(tmp_path, fmt):
    grid = _grid2d()
    path = str(tmp_path / f"g.{fmt}")
    write_result(grid, path, fmt=fmt)
    back = read_result(path)
    assert [n for n, _ in back.axes] == ["frequency_1", "frequency_2"]
    for (_, a), (_, b) in zip(grid.axes, back.axes):
        assert np.array_equal(a, b)
    assert np.array_equal(np.isnan(grid.values), np.isnan(back.values))
    m = ~np.isnan(grid.values)
    assert np.array_equal(grid.values[m], back.values[m])
    assert back.metadata == grid.metadata
    assert back.flags == grid.flags


def test_csv_layout_slow_axis_first(tmp_path):
    path = str(tmp_path / "g.csv")
    write_result(_grid2d(), path)
    rows = [ln for ln in open(path) if not ln.startswith("#")]
    assert len(rows) == 12
    first, second = rows[0].split(","), rows[1].split(",")
    assert float(first[0]) == float(second[0]) == -1.0     # slow axis repeats
    assert float(second[1]) != float(first[1])             # fast axis advances


def test_timestamp_quarantine(tmp_path):
    grid = _grid2d()
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_result(grid, a, timestamp=None)
    write_result(grid, b, timestamp=None)
    assert open(a, "rb").read() == open(b, "rb").read()
    c = str(tmp_path / "c.csv")
    write_result(grid, c, timestamp="2026-01-01T00:00:00+00:00")
    meta_line = next(ln for ln in open(c) if ln.startswith("# META"))
    assert "2026-01-01" in meta_line
    # only the header differs, the body is identical
    body = lambda p: [ln for ln in open(p) if not ln.startswith("#")]
    assert body(a) == body(c)


def test_overlay_sidecar(tmp_path):
    path = str(tmp_path / "g.csv")
    files = write_result(_grid2d(), path, overlay={"format": "overlay-1", "lines": []})
    assert files == [path, str(tmp_path / "g.overlay.json")]
    doc = json.load(open(files[1]))
    assert doc["format"] == "overlay-1"


def test_read_rejects_foreign_files(tmp_path):
    p = str(tmp_path / "x.csv")
    open(p, "w").write("hello\n")
    with pytest.raises(ConfigError):
        read_result(p)


# ---------------------------------------------------------------------------
# command-line interface


FIG1 = {"system": {"rabi": 5.0},
        "sensors": [{"frequency": 0.0, "linewidth": 1.0}],
        "run": {"grid": 51}}

PAIR = {"system": {"target_splitting": 300.0, "detuning": 200.0},
        "sensors": [{"frequency": 150.0, "linewidth": 5.0, "bundle_order": 2},
                    {"frequency": 0.0, "linewidth": 5.0}],
        "run": {}}


def _write(tmp_path, doc, name="cfg.json"):
    p = str(tmp_path / name)
    with open(p, "w") as fh:
        json.dump(doc, fh)
    return p


def test_cli_spectrum_and_determinism(tmp_path):
    cfg = _write(tmp_path, FIG1)
    runner = CliRunner()
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    for out in (out1, out2):
        res = runner.invoke(main, ["spectrum", cfg, "--out", out, "--no-timestamp"])
        assert res.exit_code == 0, res.output
    assert open(out1 + ".csv", "rb").read() == open(out2 + ".csv", "rb").read()
    grid = read_result(out1 + ".csv")
    assert grid.values.sum() == pytest.approx(1.0)
    assert grid.metadata["config"]["system"]["rabi"] == 5.0


def test_cli_config_errors_exit_2(tmp_path):
    runner = CliRunner()
    assert runner.invoke(main, ["spectrum", str(tmp_path / "nope.json")]).exit_code == 2
    bad = _write(tmp_path, {"system": {"rabi": 1.0, "target_splitting": 2.0}}, "bad.json")
    assert runner.invoke(main, ["spectrum", bad]).exit_code == 2
    ugly = str(tmp_path / "ugly.json")
    open(ugly, "w").write("{not json")
    assert runner.invoke(main, ["spectrum", ugly]).exit_code == 2
    cfg = _write(tmp_path, FIG1)
    assert runner.invoke(main, ["spectrum", cfg, "--definitely-not-a-flag"]).exit_code == 2


def test_cli_regime_error_exit_3(tmp_path):
    weak = _write(tmp_path, {"system": {"rabi": 0.05},
                             "sensors": [{"frequency": 0.0, "linewidth": 1.0}]})
    res = CliRunner().invoke(main, ["spectrum", weak])
    assert res.exit_code == 3


def test_cli_convergence_error_exit_4(tmp_path):
    cfg = _write(tmp_path, FIG1 | {
        "sensors": [{"frequency": 0.0, "linewidth": 1.0},
                    {"frequency": 0.0, "linewidth": 1.0}]})
    res = CliRunner().invoke(
        main, ["g2map", cfg, "--grid", "2", "--epsilon", "50",
               "--out", str(tmp_path / "m"), "--no-timestamp"])
    # per-point failures are flagged, not fatal; the whole-map artifact
    # still lands -- but the tau command converges or dies with code 4
    assert res.exit_code == 0
    grid = read_result(str(tmp_path / "m.csv"))
    assert all("ConvergenceError" in r for r in grid.flags.values())

    pair = _write(tmp_path, PAIR, "pair.json")
    res = CliRunner().invoke(
        main, ["tau", pair, "--tau-points", "5", "--tau-max", "0.2",
               "--epsilon", "50", "--out", str(tmp_path / "t")])
    assert res.exit_code == 4


def test_cli_bundle_map_with_overlay_and_resume(tmp_path):
    cfg = _write(tmp_path, PAIR)
    runner = CliRunner()
    out = str(tmp_path / "b")
    res = runner.invoke(main, ["bundle", cfg, "--grid", "3", "--overlay",
                               "--no-timestamp", "--out", out])
    assert res.exit_code == 0, res.output
    grid = read_result(out + ".csv")
    assert grid.values.shape == (3, 3)
    overlay = json.load(open(out + ".overlay.json"))
    assert {tuple(l["coefficients"]) for l in overlay["lines"]} <= {(1, 1), (2, 1)}
    # the checkpoint re-emits the identical result
    res2 = runner.invoke(main, ["sweep-resume", out + ".ckpt", "--no-timestamp",
                                "--out", str(tmp_path / "b2")])
    assert res2.exit_code == 0, res2.output
    a = read_result(out + ".csv")
    b = read_result(str(tmp_path / "b2.csv"))
    assert np.array_equal(a.values, b.values)


def test_cli_sweep_resume_corrupt_exit_5(tmp_path):
    p = str(tmp_path / "junk.ckpt")
    open(p, "wb").write(b"garbage data")
    assert CliRunner().invoke(main, ["sweep-resume", p]).exit_code == 5


def test_cli_recommend_and_tau(tmp_path):
    cfg = _write(tmp_path, PAIR)
    runner = CliRunner()
    res = runner.invoke(main, ["recommend", cfg, "--delta", "+"])
    assert res.exit_code == 0, res.output
    doc = json.loads(res.output)
    assert doc["partition"] == [2, 1]
    assert 2 * doc["frequencies"][0] + doc["frequencies"][1] == pytest.approx(
        doc["delta"], rel=1e-6)
    res = runner.invoke(main, ["tau", cfg, "--tau-points", "7", "--tau-max", "0.3",
                               "--out", str(tmp_path / "t"), "--no-timestamp"])
    assert res.exit_code == 0, res.output
    grid = read_result(str(tmp_path / "t.csv"))
    assert grid.axes[0][0] == "tau" and len(grid.values) == 7


def test_cli_g3cut_and_plane_errors(tmp_path):
    cfg = _write(tmp_path, FIG1)
    runner = CliRunner()
    res = runner.invoke(main, ["g3cut", cfg, "--plane", "0,0,1=0", "--grid", "3",
                               "--out", str(tmp_path / "c"), "--no-timestamp"])
    assert res.exit_code == 0, res.output
    assert read_result(str(tmp_path / "c.csv")).values.shape == (3, 3)
    assert runner.invoke(main, ["g3cut", cfg, "--plane", "banana"]).exit_code == 2
    assert runner.invoke(main, ["g3cut", cfg, "--plane", "0,0,0=1"]).exit_code == 2


def test_cli_check_truncation(tmp_path):
    cfg = _write(tmp_path, FIG1)
    res = CliRunner().invoke(main, ["autocorr", cfg, "--order", "2", "--grid", "3",
                                    "--window", "5", "--check-truncation",
                                    "--out", str(tmp_path / "a"), "--no-timestamp"])
    assert res.exit_code == 0, res.output
    assert "truncation check" in res.output
