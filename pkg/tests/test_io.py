import json
import math

import numpy as np
import pytest

from zenosim.config import parse_config
from zenosim.fitting import fit_inverse_n
from zenosim.io import dumps, emit_results, read_xy_csv, results_json, scan_csv, scan_svg
from zenosim.protocols import ScanPoint, ScanResult


def zeno_like(ns=(1, 2, 3, 5, 10, 15, 20, 30)):
    pts = [ScanPoint(n, 0.4 / n + 0.02 + 1e-3 * math.sin(n), 0.01, 0.001 * n) for n in ns]
    return ScanResult("zeno", "N", pts, {"T": 45.0})


@pytest.fixture
def cfg():
    return parse_config({"protocol": "zeno"})


def test_single_point_csv():
    text = scan_csv(zeno_like((4,)), "abc", 0)
    lines = text.splitlines()
    assert lines[0].startswith("# config_hash=abc seed=0")
    assert lines[1] == "param,loss_prob,stderr,mean_final_x"
    assert len(lines) == 3
    x, y, s = read_xy_csv(text)
    assert x.tolist() == [4.0] and s.tolist() == [0.01]


def test_empty_result_rejected():
    with pytest.raises(ValueError):
        scan_csv(ScanResult("zeno", "N", []))
    with pytest.raises(ValueError):
        emit_results({}, "csv", ".")


def test_csv_round_trip_through_fit_is_exact():
    sr = zeno_like()
    x, y, s = read_xy_csv(scan_csv(sr))
    assert np.array_equal(x, sr.params) and np.array_equal(y, sr.loss)
    direct = fit_inverse_n(sr.params, sr.loss, sr.stderr)
    again = fit_inverse_n(x, y, s)
    assert dumps(direct.to_dict()) == dumps(again.to_dict())


def test_json_embeds_config_and_is_stable(cfg):
    a = results_json(zeno_like(), cfg.to_dict(), cfg.config_hash(), cfg.seed)
    b = results_json(zeno_like(), parse_config(a and cfg.to_dict()).to_dict(),
                     cfg.config_hash(), cfg.seed)
    assert a == b
    body = json.loads(a)
    assert body["config"]["grid"]["n_points"] == 4096
    assert body["config_hash"] == cfg.config_hash() and body["seed"] == 0
    assert parse_config(body["config"]) == cfg


def test_json_replaces_nan():
    pts = [ScanPoint(1, 0.5, 0.0, float("nan"))]
    body = json.loads(results_json(ScanResult("zeno", "N", pts)))
    assert body["series"][""]["points"][0]["mean_final_x"] is None


def test_svg_labels_and_error_bars():
    svg = scan_svg({"full": zeno_like(), "half": zeno_like((2, 4))})
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "atom loss probability" in svg
    assert "number of measurements N" in svg
    assert svg.count("<circle") == 10
    assert svg.count("<polyline") == 2
    assert ">full<" in svg and ">half<" in svg


def test_emit_all_formats(tmp_path, cfg):
    paths = emit_results({"a": zeno_like(), "b": zeno_like((1, 2))}, ["csv", "json", "svg"],
                         tmp_path, "zeno", cfg)
    names = sorted(p.name for p in paths)
    assert names == ["zeno.json", "zeno.svg", "zeno_a.csv", "zeno_b.csv"]
    for p in paths:
        assert cfg.config_hash() in p.read_text().splitlines()[0] or p.suffix == ".json"
    again = emit_results({"a": zeno_like(), "b": zeno_like((1, 2))}, ["csv", "json"],
                         tmp_path / "rerun", "zeno", cfg)
    for p in again:
        assert p.read_bytes() == (tmp_path / p.name).read_bytes()


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_results(zeno_like(), "png", tmp_path)


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot write"):
        emit_results(zeno_like(), "csv", blocker / "sub")


def test_read_headerless_and_named_columns(tmp_path):
    x, y, s = read_xy_csv("1,0.5\n2,0.25\n")
    assert s is None and y.tolist() == [0.5, 0.25]
    path = tmp_path / "d.csv"
    path.write_text("# comment\nparam,mean_final_x,loss_prob\n1,9,0.5\n2,9,0.3\n")
    x, y, s = read_xy_csv(str(path))
    assert y.tolist() == [0.5, 0.3] and s is None
    x, y, _ = read_xy_csv(path, y_col="mean_final_x")
    assert y.tolist() == [9, 9]
    with pytest.raises(ValueError):
        read_xy_csv("# nothing\n")
