import csv
import math
from datetime import datetime

import numpy as np
import pytest

from assembly import FieldVector
from elements import build_dof_map
from errors import InvalidArgumentError, OutputError
from export_csv import write_csv, write_rows, write_scan, write_study
from export_json import MANIFEST_NAME, RunManifest, load_manifest
from export_vtk import vtk_lines, write_vtk
from manufactured import ConvergenceStudy, ManufacturedCase
from modal import ModalCase, detZ_scan
from splitstep import FlowState, FunctionalSeries


def _read(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def _state(space, t=0.5):
    u = FieldVector.interpolate(space.vector(), lambda x, y: (y, -x))
    p = FieldVector.interpolate(space, lambda x, y: x + y)
    return FlowState(u, u, p, p, t=t)


def test_series_csv(tmp_path):
    series = FunctionalSeries()
    for step in range(3):
        series.record(step, 0.1 * step, {"drag": 1.0 + step})
    series.record(3, 0.3, {"drag": 4.0, "lift": 0.5})
    path = tmp_path / "nested" / "series.csv"
    assert write_csv(series, str(path)) == 4
    lines = _read(path)
    assert lines[0] == ["step", "t", "drag", "lift"]
    assert len(lines) == 5
    # functionals that appear late are padded for the earlier rows
    assert lines[1][3] == "nan"


def test_rows_ignore_extra_keys(tmp_path):
    path = tmp_path / "rows.csv"
    count = write_rows(["a"], [{"a": 1, "b": 2}, {"a": 3}], str(path))
    assert count == 2
    assert _read(path) == [["a"], ["1"], ["3"]]


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        write_rows(["a"], [], str(blocker / "out.csv"))


def test_study_tables(tmp_path):
    study = ConvergenceStudy(ManufacturedCase("ii"), 1, "noslip")
    study.rows = [{"m": 10, "h": 0.1, "u_l2": 1e-3}, {"m": 20, "h": 0.05, "error": "diverged"}]
    study.rates = {"u_l2": 2.01, "p_linf": 1.1}
    errors_path, rates_path = write_study(study, str(tmp_path), "converge_ii")
    errors = _read(errors_path)
    assert errors[0][:5] == ["m", "h", "dofs", "steps", "dt"]
    assert errors[2][-1] == "diverged"
    rates = _read(rates_path)
    assert rates[0] == ["case", "order", "boundary", "quantity", "norm", "rate"]
    assert rates[1][:5] == ["ii", "1", "noslip", "u", "l2"]
    assert len(rates) == 3


def test_scan_tables(tmp_path):
    scan = detZ_scan(ModalCase(h=0.1, k=1.0, nu=1.0, alpha=10.0), (-1.0, 1.0), (-1.0, 1.0), n_re=4, n_im=3)
    paths = write_scan(scan, str(tmp_path), "detz")
    assert set(paths) == {"values", "contours", "roots"}
    values = _read(paths["values"])
    assert values[0] == ["re_s", "im_s", "re_det", "im_det"]
    assert len(values) == 13
    assert len(_read(paths["roots"])) == len(scan.intersections) + 1


@pytest.mark.parametrize("order", [1, 2])
def test_vtk_points_are_the_dofs(square4, order):
    space = build_dof_map(square4, order)
    lines = vtk_lines(_state(space), space.vector(), title="demo")
    assert lines[:4] == ["# vtk DataFile Version 3.0", "demo t=0.5", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    assert f"POINTS {space.num_dofs} double" in lines
    n_cells = 32 * order * order
    assert f"CELLS {n_cells} {4 * n_cells}" in lines
    assert f"POINT_DATA {space.num_dofs}" in lines
    for name in ("u", "v", "p", "vorticity", "divergence"):
        assert f"SCALARS {name} double 1" in lines


def test_vtk_file_and_mismatch(tmp_path, square4):
    space = build_dof_map(square4, 1)
    path = tmp_path / "flow.vtk"
    assert write_vtk(_state(space), space.vector(), str(path)) == 25
    assert path.read_text().startswith("# vtk DataFile Version 3.0")
    with pytest.raises(InvalidArgumentError):
        vtk_lines(_state(space), build_dof_map(square4, 2).vector())


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest("modal limit", {"s": 1.0 + 2.0j, "nu": np.float64(0.5), "h": [0.1, math.nan], "f": abs})
    manifest.add_output(str(tmp_path / "modal_limit.csv"))
    manifest.finish({"monotone": True, "limit": np.float64(-4.2)})
    path = manifest.write(str(tmp_path))
    assert path.endswith(MANIFEST_NAME)

    data = load_manifest(path)
    assert data["status"] == "ok"
    assert data["command"] == "modal limit"
    assert data["parameters"] == {"s": {"re": 1.0, "im": 2.0}, "nu": 0.5, "h": [0.1, None], "f": "abs"}
    assert data["summary"] == {"monotone": True, "limit": -4.2}
    assert data["outputs"] == ["modal_limit.csv"]
    assert isinstance(data["started"], datetime)
    assert data["started"].tzinfo is not None
    assert data["finished"] >= data["started"]
    assert data["elapsed_seconds"] >= 0.0


def test_unfinished_manifest():
    manifest = RunManifest("cavity", {})
    assert manifest.to_dict()["finished"] is None
    assert manifest.to_dict()["status"] == "running"
