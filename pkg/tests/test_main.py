import json
import os

import pytest

from export_json import MANIFEST_NAME, load_manifest
from main import format_rate_table, main, parse_args
from manufactured import NORMS, QUANTITIES, ConvergenceStudy, ManufacturedCase
from mesh import load_mesh
from modal import limit_detZ
from run_config import RunConfigManager


@pytest.fixture
def manager(tmp_path):
    return RunConfigManager(str(tmp_path / "configs"))


def _manifest(folder):
    return load_manifest(os.path.join(folder, MANIFEST_NAME))


def test_mesh_gen_refine_info(tmp_path, capsys):
    out = str(tmp_path / "out")
    coarse = str(tmp_path / "coarse.mesh")
    fine = str(tmp_path / "fine.mesh")
    assert main(["mesh", "gen", "--m", "3", "--output", coarse, "--out", out]) == 0
    assert load_mesh(coarse).num_triangles == 18
    assert _manifest(out)["summary"]["vertices"] == 16

    assert main(["mesh", "refine", "--input", coarse, "--n", "2", "--output", fine, "--out", out]) == 0
    assert load_mesh(fine).num_vertices == 49

    assert main(["mesh", "info", "--input", fine, "--out", out]) == 0
    printed = capsys.readouterr().out
    assert "triangles: 72" in printed
    manifest = _manifest(out)
    assert manifest["command"] == "mesh info"
    assert manifest["status"] == "ok"


def test_failed_run_writes_its_manifest(tmp_path):
    out = str(tmp_path / "out")
    assert main(["mesh", "info", "--input", str(tmp_path / "missing.mesh"), "--out", out]) == 1
    manifest = _manifest(out)
    assert manifest["status"] == "failed"
    assert "missing.mesh" in manifest["summary"]["error"]


@pytest.mark.parametrize(
    "argv",
    [
        ["cavity", "--order", "3"],
        ["mesh", "gen"],
        ["modal", "detz", "--re-range", "2", "1"],
        ["modal", "detz", "--im-range", "-3"],
        ["converge", "--meshes", "10,x"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        parse_args(argv)
    assert info.value.code == 2


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# stretched cavity mesh\nkind = stretched\nm = 6\nspacing-ratio = 3\n")
    args = parse_args(["mesh", "gen", "--output", "x.mesh", "--config", str(cfg)])
    assert (args.kind, args.m, args.spacing_ratio) == ("stretched", 6, 3.0)
    args = parse_args(["mesh", "gen", "--output", "x.mesh", "--config", str(cfg), "--m", "9"])
    assert args.m == 9


def test_config_lists_and_complex_values(tmp_path):
    cfg = tmp_path / "limit.cfg"
    cfg.write_text("s = 2+0.5i\nhs = 0.1, 0.05\n")
    args = parse_args(["modal", "limit", "--config", str(cfg)])
    assert args.s == complex(2, 0.5)
    assert args.hs == [0.1, 0.05]


def test_ranges_take_negative_bounds(tmp_path):
    args = parse_args(["modal", "detz", "--re-range", "-2", "2", "--im-range", "-3.5", "-1"])
    assert args.re_range == [-2.0, 2.0]
    assert args.im_range == [-3.5, -1.0]
    assert parse_args(["modal", "detz"]).re_range == [-20.0, 20.0]
    cfg = tmp_path / "detz.cfg"
    cfg.write_text("re-range = -2,2\nim-range = -3, 3\n")
    args = parse_args(["modal", "detz", "--config", str(cfg)])
    assert (args.re_range, args.im_range) == ([-2.0, 2.0], [-3.0, 3.0])
    args = parse_args(["modal", "detz", "--config", str(cfg), "--re-range", "-1", "0"])
    assert args.re_range == [-1.0, 0.0]
    cfg.write_text("re-range = 3,1\n")
    with pytest.raises(SystemExit) as info:
        parse_args(["modal", "detz", "--config", str(cfg)])
    assert info.value.code == 2


def test_saved_ranges_load_back(tmp_path, manager):
    out = str(tmp_path / "out")
    argv = ["modal", "detz", "--k", "1", "--n-re", "4", "--n-im", "4", "--re-range", "-2", "2", "--out", out, "--save-config", "scan"]
    assert main(argv, manager=manager) == 0
    args = parse_args(["modal", "detz", "--load-config", "scan"], manager=manager)
    assert args.re_range == [-2.0, 2.0]


@pytest.mark.parametrize("text", ["bogus = 1\n", "m = five\n", "kind = hexagon\n", "config = other.cfg\n"])
def test_bad_config_values(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(SystemExit) as info:
        parse_args(["mesh", "gen", "--output", "x.mesh", "--config", str(cfg)])
    assert info.value.code == 2


def test_missing_config_file_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit):
        parse_args(["mesh", "info", "--input", "a.mesh", "--config", str(tmp_path / "none.cfg")])


def test_save_and_load_named_config(tmp_path, manager):
    out = str(tmp_path / "out")
    argv = ["modal", "limit", "--s", "1+3j", "--hs", "0.1,0.01", "--out", out, "--save-config", "lim"]
    assert main(argv, manager=manager) == 0
    assert manager.list_configs() == ["lim"]
    with open(os.path.join(manager.config_dir, "lim.json"), encoding="utf-8") as f:
        assert json.load(f)["command"] == "modal limit"

    args = parse_args(["modal", "limit", "--load-config", "lim"], manager=manager)
    assert args.s == complex(1, 3)
    assert args.hs == [0.1, 0.01]
    assert args.out == out
    args = parse_args(["modal", "limit", "--load-config", "lim", "--k", "2"], manager=manager)
    assert args.k == 2.0


def test_unknown_named_config(manager):
    with pytest.raises(SystemExit):
        parse_args(["modal", "limit", "--load-config", "nope"], manager=manager)


def test_modal_limit_is_monotone(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["modal", "limit", "--out", out]) == 0
    manifest = _manifest(out)
    assert manifest["summary"]["monotone"] is True
    assert manifest["summary"]["limit"]["re"] == pytest.approx(limit_detZ(1.0, 1.0, 100.0, 1 + 2j).real)
    assert "modal_limit.csv" in manifest["outputs"]
    assert "limit" in capsys.readouterr().out


@pytest.mark.parametrize("bc, r", [("tn", 1), ("wabe", 2)])
def test_modal_sigma(tmp_path, capsys, bc, r):
    assert main(["modal", "sigma", "--bc", bc, "--h", "0.1", "--out", str(tmp_path)]) == 0
    assert _manifest(str(tmp_path))["summary"]["r"] == r
    assert capsys.readouterr().out.count("sigma") == 3


def test_modal_invariants(tmp_path):
    assert main(["modal", "invariants", "--draws", "40", "--seed", "3", "--out", str(tmp_path)]) == 0
    summary = _manifest(str(tmp_path))["summary"]
    assert summary["reciprocal"] < 1e-9


def test_modal_qscan(tmp_path):
    out = str(tmp_path)
    assert main(["modal", "qscan", "--k", "1,2", "--s-max", "10", "--n-s", "5", "--out", out]) == 0
    summary = _manifest(out)["summary"]
    assert summary["checked"] == 10
    assert summary["violations"] == 0
    assert os.path.exists(os.path.join(out, "modal_qscan.csv"))


def test_modal_detz(tmp_path):
    out = str(tmp_path)
    argv = ["modal", "detz", "--k", "1", "--n-re", "6", "--n-im", "7", "--re-range", "-2", "2", "--im-range", "-3", "3", "--out", out]
    assert main(argv) == 0
    manifest = _manifest(out)
    assert manifest["summary"]["alpha"] == pytest.approx(100.0)
    assert {"detz_k1_values.csv", "detz_k1_contours.csv", "detz_k1_roots.csv"} <= set(manifest["outputs"])


def test_converge_smoke(tmp_path, capsys):
    out = str(tmp_path)
    argv = ["converge", "--case", "ii", "--meshes", "3,4,5", "--tfinal", "0.005", "--workers", "1", "--out", out]
    assert main(argv) == 0
    assert os.path.exists(os.path.join(out, "converge_ii_p1_noslip_errors.csv"))
    assert os.path.exists(os.path.join(out, "converge_ii_p1_noslip_rates.csv"))
    printed = capsys.readouterr().out
    assert printed.startswith("case ii, P1, noslip")
    assert _manifest(out)["summary"]["ii_p1"]["failures"] == 0


def test_rate_table_layout():
    study = ConvergenceStudy(ManufacturedCase("i"), 2, "periodic", rates={f"{q}_{n}": 2.0 for q in QUANTITIES for n in NORMS})
    lines = format_rate_table(study).splitlines()
    assert lines[0] == "case i, P2, periodic"
    assert len(lines) == 2 + len(QUANTITIES)
    assert lines[2].split()[1:] == ["2.000"] * len(NORMS)
