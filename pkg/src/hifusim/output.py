"""File writers and probe extraction.

All numeric formatting goes through ``%.17g`` so repeated runs with
identical state produce byte-identical files; tests rely on that.
Formats: VTK legacy ASCII 2.0 unstructured grids (one scalar field per
name), RFC 4180 CSV through the stdlib ``csv`` module, and
self-contained SVG 1.1 line plots.
"""
import csv
import io
import math
import re

import numpy as np

from .errors import DomainError, ValidationError

_FMT = "%.17g"
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _fmt(v):
    return _FMT % v


def _check_field_name(name):
    if not _NAME_RE.match(name):
        raise ValidationError(
            f"field name {name!r} must be an identifier "
            f"(letters, digits, underscores)", field=name)


def write_vtk(path, mesh, fields):
    """Write point-data scalar fields on the mesh as legacy ASCII VTK."""
    if not fields:
        raise ValidationError("write_vtk needs at least one field",
                              field="fields")
    nv = mesh.num_vertices
    arrays = {}
    for name, arr in fields.items():
        _check_field_name(name)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (nv,):
            raise ValidationError(
                f"field {name!r} has shape {arr.shape}, expected ({nv},)",
                field=name)
        arrays[name] = arr
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 2.0\n")
    buf.write("hifusim fields\n")
    buf.write("ASCII\n")
    buf.write("DATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {nv} double\n")
    for x, y in mesh.vertices:
        buf.write(f"{_fmt(x)} {_fmt(y)} 0\n")
    nt = mesh.num_triangles
    buf.write(f"CELLS {nt} {4 * nt}\n")
    for a, b, c in mesh.triangles:
        buf.write(f"3 {a} {b} {c}\n")
    buf.write(f"CELL_TYPES {nt}\n")
    for _ in range(nt):
        buf.write("5\n")
    buf.write(f"POINT_DATA {nv}\n")
    for name, arr in arrays.items():
        buf.write(f"SCALARS {name} double 1\n")
        buf.write("LOOKUP_TABLE default\n")
        for v in arr:
            buf.write(_fmt(v) + "\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def write_csv(path, columns):
    """Write named columns of equal length as RFC 4180 CSV."""
    if not columns:
        raise ValidationError("write_csv needs at least one column",
                              field="columns")
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=np.float64) for k in names]
    length = arrays[0].shape[0]
    for name, arr in zip(names, arrays):
        if arr.ndim != 1 or arr.shape[0] != length:
            raise ValidationError(
                f"column {name!r} has shape {arr.shape}, expected "
                f"({length},)", field=name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(names)
        for i in range(length):
            writer.writerow([_fmt(a[i]) for a in arrays])


def axis_slice(mesh, fields, n=241, x=0.0, y_range=None):
    """Sample fields along the vertical line x1 = x.

    Returns (ys, values) where values maps each field name to an array of
    length n; samples outside the triangulation are NaN.  The sampling
    window defaults to the mesh's vertical extent.
    """
    if n < 2:
        raise DomainError(f"axis_slice needs n >= 2, got {n}")
    if y_range is None:
        y_range = (float(mesh.vertices[:, 1].min()),
                   float(mesh.vertices[:, 1].max()))
    lo, hi = float(y_range[0]), float(y_range[1])
    if not hi > lo:
        raise DomainError("axis_slice y_range must be increasing")
    ys = np.linspace(lo, hi, n)
    pts = np.column_stack([np.full(n, float(x)), ys])
    tri_idx, bary = _locate(mesh, pts)
    values = {}
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=np.float64)
        vals = np.full(n, np.nan)
        inside = tri_idx >= 0
        if np.any(inside):
            corners = arr[mesh.triangles[tri_idx[inside]]]
            vals[inside] = np.einsum('sk,sk->s', bary[inside],
                                     corners)
        values[name] = vals
    return ys, values


def _locate(mesh, pts, tol=1e-12):
    """Containing triangle and barycentric coordinates per point.

    Brute force over triangles in chunks of points; returns index -1 for
    points outside every triangle.  Points on shared edges resolve to the
    lowest triangle index, which keeps resampling deterministic.
    """
    verts = mesh.vertices
    tris = mesh.triangles
    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) \
        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    npt = pts.shape[0]
    tri_idx = np.full(npt, -1, dtype=np.int64)
    bary = np.zeros((npt, 3))
    chunk = max(1, int(2e6 // max(1, tris.shape[0])))
    for s in range(0, npt, chunk):
        p = pts[s:s + chunk]
        px = p[:, 0][:, None] - a[:, 0][None, :]
        py = p[:, 1][:, None] - a[:, 1][None, :]
        l2 = ((c[:, 1] - a[:, 1])[None, :] * px
              - (c[:, 0] - a[:, 0])[None, :] * py) / det[None, :]
        l3 = (-(b[:, 1] - a[:, 1])[None, :] * px
              + (b[:, 0] - a[:, 0])[None, :] * py) / det[None, :]
        l1 = 1.0 - l2 - l3
        ok = (l1 >= -tol) & (l2 >= -tol) & (l3 >= -tol)
        hit = ok.argmax(axis=1)
        found = ok[np.arange(p.shape[0]), hit]
        rows = s + np.nonzero(found)[0]
        cols = hit[found]
        tri_idx[rows] = cols
        bary[rows, 0] = l1[found, cols]
        bary[rows, 1] = l2[found, cols]
        bary[rows, 2] = l3[found, cols]
    return tri_idx, bary


class ProbeSeries:
    """Per-step scalar recordings with a fixed set of names."""

    def __init__(self, names):
        names = tuple(names)
        if not names:
            raise ValidationError("ProbeSeries needs at least one name",
                                  field="names")
        for n in names:
            _check_field_name(n)
        self.names = names
        self._rows = []

    def record(self, **values):
        if set(values) != set(self.names):
            raise ValidationError(
                f"record got {sorted(values)}, expected "
                f"{sorted(self.names)}", field="values")
        self._rows.append([float(values[n]) for n in self.names])

    def __len__(self):
        return len(self._rows)

    def column(self, name):
        i = self.names.index(name)
        return np.array([r[i] for r in self._rows])

    def columns(self):
        return {n: self.column(n) for n in self.names}

    def write(self, path):
        write_csv(path, self.columns())


def write_svg_lineplot(path, x, series, *, title="", xlabel="", ylabel="",
                       width=720, height=480):
    """Plot named y-series against x as a standalone SVG line chart."""
    if not series:
        raise ValidationError("write_svg_lineplot needs at least one "
                              "series", field="series")
    x = np.asarray(x, dtype=np.float64)
    ys = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}
    for k, v in ys.items():
        if v.shape != x.shape:
            raise ValidationError(
                f"series {k!r} has shape {v.shape}, expected {x.shape}",
                field=k)
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()])
    if finite.size == 0 or x.size < 2:
        raise ValidationError("nothing finite to plot", field="series")
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(finite.min()), float(finite.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0 -= pad
    y1 += pad
    ml, mr, mt, mb = 70, 20, 34, 46
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + pw * (v - x0) / (x1 - x0)

    def sy(v):
        return mt + ph * (1.0 - (v - y0) / (y1 - y0))

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
              "#8c564b")
    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
              f'width="{width}" height="{height}" '
              f'viewBox="0 0 {width} {height}">\n')
    out.write(f'<rect x="0" y="0" width="{width}" height="{height}" '
              f'fill="white"/>\n')
    out.write(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
              f'fill="none" stroke="black"/>\n')
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4.0
        yv = y0 + k * (y1 - y0) / 4.0
        out.write(f'<text x="{_fmt(sx(xv))}" y="{height - mb + 18}" '
                  f'font-size="11" text-anchor="middle" '
                  f'font-family="monospace">{"%.3g" % xv}</text>\n')
        out.write(f'<text x="{ml - 6}" y="{_fmt(sy(yv) + 4)}" '
                  f'font-size="11" text-anchor="end" '
                  f'font-family="monospace">{"%.3g" % yv}</text>\n')
        if 0 < k < 4:
            out.write(f'<line x1="{ml}" x2="{ml + pw}" '
                      f'y1="{_fmt(sy(yv))}" y2="{_fmt(sy(yv))}" '
                      f'stroke="#dddddd"/>\n')
    if title:
        out.write(f'<text x="{width / 2:g}" y="20" font-size="14" '
                  f'text-anchor="middle">{title}</text>\n')
    if xlabel:
        out.write(f'<text x="{width / 2:g}" y="{height - 8}" '
                  f'font-size="12" text-anchor="middle">{xlabel}</text>\n')
    if ylabel:
        out.write(f'<text x="14" y="{height / 2:g}" font-size="12" '
                  f'text-anchor="middle" transform="rotate(-90 14 '
                  f'{height / 2:g})">{ylabel}</text>\n')
    for i, (name, v) in enumerate(ys.items()):
        color = colors[i % len(colors)]
        pieces = []
        run = []
        for xi, vi in zip(x, v):
            if math.isfinite(vi):
                run.append(f"{_fmt(sx(xi))},{_fmt(sy(vi))}")
            elif run:
                pieces.append(run)
                run = []
        if run:
            pieces.append(run)
        for run in pieces:
            if len(run) >= 2:
                out.write(f'<polyline fill="none" stroke="{color}" '
                          f'stroke-width="1.5" '
                          f'points="{" ".join(run)}"/>\n')
        ly = mt + 16 + 16 * i
        out.write(f'<line x1="{ml + pw - 150}" x2="{ml + pw - 120}" '
                  f'y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" '
                  f'stroke-width="1.5"/>\n')
        out.write(f'<text x="{ml + pw - 114}" y="{ly}" font-size="11" '
                  f'font-family="monospace">{name}</text>\n')
    out.write('</svg>\n')
    with open(path, "w", newline="\n") as fh:
        fh.write(out.getvalue())
