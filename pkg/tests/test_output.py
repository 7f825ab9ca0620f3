import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from hifusim.errors import DomainError, ValidationError
from hifusim.output import (ProbeSeries, axis_slice, write_csv, write_svg_lineplot,
                            write_vtk)


# --- vtk ---------------------------------------------------------------------

def test_vtk_structure_and_values(tmp_path, unit_square):
    path = tmp_path / "out.vtk"
    field = np.linspace(0.0, 1.0, unit_square.num_vertices)
    write_vtk(path, unit_square, {"p": field})
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[2] == "ASCII"
    assert "DATASET UNSTRUCTURED_GRID" in lines[3]
    nv = unit_square.num_vertices
    nt = unit_square.num_triangles
    assert lines[4] == f"POINTS {nv} double"
    pts = np.array([[float(v) for v in ln.split()]
                    for ln in lines[5:5 + nv]])
    assert np.array_equal(pts[:, :2], unit_square.vertices)
    assert np.all(pts[:, 2] == 0.0)
    icells = 5 + nv
    assert lines[icells] == f"CELLS {nt} {4 * nt}"
    cells = np.array([[int(v) for v in ln.split()]
                      for ln in lines[icells + 1:icells + 1 + nt]])
    assert np.all(cells[:, 0] == 3)
    assert np.array_equal(cells[:, 1:], unit_square.triangles)
    itypes = icells + 1 + nt
    assert lines[itypes] == f"CELL_TYPES {nt}"
    assert all(ln == "5" for ln in lines[itypes + 1:itypes + 1 + nt])
    idata = itypes + 1 + nt
    assert lines[idata] == f"POINT_DATA {nv}"
    assert lines[idata + 1] == "SCALARS p double 1"
    assert lines[idata + 2] == "LOOKUP_TABLE default"
    vals = np.array([float(v) for v in lines[idata + 3:idata + 3 + nv]])
    assert np.array_equal(vals, field)


def test_vtk_multiple_fields(tmp_path, unit_square):
    path = tmp_path / "multi.vtk"
    nv = unit_square.num_vertices
    write_vtk(path, unit_square, {"a": np.zeros(nv), "b": np.ones(nv)})
    text = path.read_text()
    assert "SCALARS a double 1" in text
    assert "SCALARS b double 1" in text


def test_vtk_validation(tmp_path, unit_square):
    nv = unit_square.num_vertices
    with pytest.raises(ValidationError):
        write_vtk(tmp_path / "x.vtk", unit_square, {})
    with pytest.raises(ValidationError):
        write_vtk(tmp_path / "x.vtk", unit_square,
                  {"bad name": np.zeros(nv)})
    with pytest.raises(ValidationError):
        write_vtk(tmp_path / "x.vtk", unit_square, {"p": np.zeros(3)})


# --- csv ---------------------------------------------------------------------

def test_csv_roundtrip_and_line_endings(tmp_path):
    path = tmp_path / "vals.csv"
    t = np.array([0.0, 0.1, 0.2])
    p = np.array([1.0, -2.5, 3.25])
    write_csv(path, {"t": t, "p": p})
    raw = path.read_bytes()
    assert raw.count(b"\r\n") == 4          # header + 3 rows
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "p"]
    got = np.array([[float(v) for v in row] for row in rows[1:]])
    assert np.array_equal(got[:, 0], t)
    assert np.array_equal(got[:, 1], p)


def test_csv_validation(tmp_path):
    with pytest.raises(ValidationError):
        write_csv(tmp_path / "x.csv", {})
    with pytest.raises(ValidationError):
        write_csv(tmp_path / "x.csv",
                  {"a": np.zeros(3), "b": np.zeros(4)})


# --- axis slice -----------------------------------------------------------------

def test_axis_slice_linear_field_is_exact(unit_square):
    pts = unit_square.vertices
    field = 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.25
    ys, vals = axis_slice(unit_square, {"u": field}, n=97, x=0.5)
    assert ys[0] == 0.0 and ys[-1] == 1.0
    expect = 2.0 * 0.5 - 3.0 * ys + 0.25
    assert np.allclose(vals["u"], expect, atol=1e-12)


def test_axis_slice_nan_outside(unit_square):
    field = np.ones(unit_square.num_vertices)
    ys, vals = axis_slice(unit_square, {"u": field}, n=41, x=0.5,
                          y_range=(-0.5, 1.5))
    outside = (ys < -1e-12) | (ys > 1.0 + 1e-12)
    assert np.all(np.isnan(vals["u"][outside]))
    assert np.allclose(vals["u"][~outside], 1.0)


def test_axis_slice_off_domain_line(unit_square):
    field = np.ones(unit_square.num_vertices)
    _, vals = axis_slice(unit_square, {"u": field}, n=11, x=2.0)
    assert np.all(np.isnan(vals["u"]))


def test_axis_slice_validation(unit_square):
    field = np.ones(unit_square.num_vertices)
    with pytest.raises(DomainError):
        axis_slice(unit_square, {"u": field}, n=1)
    with pytest.raises(DomainError):
        axis_slice(unit_square, {"u": field}, y_range=(1.0, 0.0))


def test_axis_slice_on_treatment_domain(coarse_domain):
    pts = coarse_domain.vertices
    field = pts[:, 1].copy()
    ys, vals = axis_slice(coarse_domain, {"h": field}, n=61, x=0.0)
    inside = ~np.isnan(vals["h"])
    assert inside.sum() > 50
    assert np.allclose(vals["h"][inside], ys[inside], atol=1e-10)


# --- probe series ------------------------------------------------------------------

def test_probe_series_record_and_write(tmp_path):
    ps = ProbeSeries(("t", "p_max"))
    ps.record(t=0.0, p_max=1.0)
    ps.record(p_max=2.0, t=0.1)             # order-free kwargs
    assert len(ps) == 2
    assert np.array_equal(ps.column("t"), [0.0, 0.1])
    assert np.array_equal(ps.column("p_max"), [1.0, 2.0])
    cols = ps.columns()
    assert set(cols) == {"t", "p_max"}
    path = tmp_path / "probes.csv"
    ps.write(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "p_max"]
    assert len(rows) == 3


def test_probe_series_key_validation():
    ps = ProbeSeries(("t", "v"))
    with pytest.raises(ValidationError):
        ps.record(t=0.0)                      # missing key
    with pytest.raises(ValidationError):
        ps.record(t=0.0, v=1.0, extra=2.0)    # unknown key
    with pytest.raises(ValidationError):
        ProbeSeries(())
    with pytest.raises(ValidationError):
        ProbeSeries(("bad name",))


# --- svg ---------------------------------------------------------------------------

def test_svg_parses_and_draws_series(tmp_path):
    x = np.linspace(0.0, 1.0, 20)
    series = {"one": np.sin(x), "two": np.cos(x)}
    path = tmp_path / "plot.svg"
    write_svg_lineplot(path, x, series, title="waves", xlabel="t",
                       ylabel="y")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    ns = {"s": "http://www.w3.org/2000/svg"}
    polys = root.findall(".//s:polyline", ns)
    assert len(polys) >= 2
    texts = [t.text for t in root.findall(".//s:text", ns)]
    assert "waves" in texts
    assert "one" in texts and "two" in texts


def test_svg_nan_splits_polyline(tmp_path):
    x = np.linspace(0.0, 1.0, 30)
    y = np.sin(2.0 * x)
    y[10:15] = np.nan
    path = tmp_path / "gap.svg"
    write_svg_lineplot(path, x, {"y": y})
    ns = {"s": "http://www.w3.org/2000/svg"}
    polys = ET.parse(path).getroot().findall(".//s:polyline", ns)
    assert len(polys) == 2


def test_svg_validation(tmp_path):
    with pytest.raises(ValidationError):
        write_svg_lineplot(tmp_path / "x.svg", np.arange(3.0), {})
    with pytest.raises(ValidationError):
        write_svg_lineplot(tmp_path / "x.svg", np.arange(3.0),
                           {"y": np.zeros(4)})
    with pytest.raises(ValidationError):
        write_svg_lineplot(tmp_path / "x.svg", np.arange(3.0),
                           {"y": np.full(3, np.nan)})
