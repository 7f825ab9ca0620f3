import math

import numpy as np
import pytest
from scipy.integrate import quad

from hifusim import mesh as hmesh
from hifusim.errors import MeshError, ParseError
from hifusim.mesh import (GAMMA_A, GAMMA_B, WALL, Mesh, build_domain_mesh,
                          build_rectangle_mesh, domain_area, load_mesh,
                          save_mesh, validate_mesh)


# --- exact geometry ---------------------------------------------------------

def test_domain_area_matches_quadrature():
    # rectangle plus the cap below x2 = 0: depth sqrt(R^2 - x^2) - 0.03
    cap, err = quad(lambda x: math.sqrt(0.05 ** 2 - x * x) - 0.03,
                    -0.04, 0.04)
    assert err < 1e-9
    assert domain_area() == pytest.approx(0.08 * 0.12 + cap, rel=1e-12)


def test_arc_touches_rectangle_corners():
    r = hmesh.ARC_RADIUS
    cx, cy = hmesh.ARC_CENTER
    for sx in (-1.0, 1.0):
        d = math.hypot(sx * hmesh.RECT_HALF_WIDTH - cx, 0.0 - cy)
        assert d == pytest.approx(r, rel=1e-15)
    assert cy - r == pytest.approx(hmesh.ARC_BOTTOM, abs=1e-15)


# --- rectangle meshes -------------------------------------------------------

def test_rectangle_diagonal_counts(unit_square):
    m = unit_square
    assert m.num_vertices == 7 * 7
    assert m.num_triangles == 2 * 6 * 6
    assert m.tag_names == ("left", "right", "bottom", "top")
    validate_mesh(m)


def test_rectangle_crossed_counts(crossed_rect):
    m = crossed_rect
    assert m.num_vertices == 9 * 5 + 8 * 4
    assert m.num_triangles == 4 * 8 * 4
    validate_mesh(m)


def test_rectangle_area_and_tags(wide_rect):
    m = wide_rect
    assert m.triangle_areas().sum() == pytest.approx(2.0, rel=1e-14)
    top = m.boundary_edges("top")
    assert top.shape == (7, 2)
    assert np.allclose(m.vertices[top, 1], 1.0)
    left = m.boundary_edges("left")
    assert np.allclose(m.vertices[left, 0], -1.0)


def test_rectangle_rejects_bad_bounds():
    with pytest.raises(MeshError):
        build_rectangle_mesh(0.0, 0.0, 0.0, 1.0, 2, 2)
    with pytest.raises(MeshError):
        build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, 0, 2)


def test_unknown_tag_is_an_error(unit_square):
    with pytest.raises(MeshError):
        unit_square.tag_code(GAMMA_B)


# --- treatment-domain meshes ------------------------------------------------

def test_domain_mesh_is_valid(coarse_domain):
    validate_mesh(coarse_domain)
    assert coarse_domain.tag_names == (GAMMA_A, GAMMA_B, WALL)
    assert coarse_domain.min_angle_deg() >= hmesh.MIN_ANGLE_DEG


def test_domain_mesh_area_converges():
    exact = domain_area()
    errs = []
    for h in (0.012, 0.006):
        m = build_domain_mesh(h)
        errs.append(abs(m.triangle_areas().sum() - exact) / exact)
    # boundary is polygonal: the chord deficit along the arc is O(h^2)
    assert errs[1] < errs[0]
    assert errs[1] < 1e-3
    assert errs[1] < 0.5 * errs[0]


def test_domain_mesh_boundary_tags(coarse_domain):
    m = coarse_domain
    top = m.boundary_edges(GAMMA_A)
    assert np.allclose(m.vertices[top, 1], hmesh.RECT_TOP)
    arc = m.boundary_edges(GAMMA_B)
    pts = m.vertices[arc].reshape(-1, 2)
    r = np.hypot(pts[:, 0] - hmesh.ARC_CENTER[0],
                 pts[:, 1] - hmesh.ARC_CENTER[1])
    assert np.allclose(r, hmesh.ARC_RADIUS, atol=1e-9)
    assert (pts[:, 1] <= 1e-12).all()
    wall = m.boundary_edges(WALL)
    assert np.allclose(np.abs(m.vertices[wall, 0]),
                       hmesh.RECT_HALF_WIDTH)


def test_domain_mesh_respects_target():
    m = build_domain_mesh(0.008)
    h = np.sqrt(2.0 * m.triangle_areas())
    assert h.max() < 2.0 * 0.008


def test_domain_mesh_deterministic():
    a = build_domain_mesh(0.01)
    b = build_domain_mesh(0.01)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_domain_mesh_rejects_bad_target():
    with pytest.raises(MeshError):
        build_domain_mesh(0.0)
    with pytest.raises(MeshError):
        build_domain_mesh(-0.01)


# --- validation -------------------------------------------------------------

def test_validate_rejects_flipped_triangle(unit_square):
    tris = unit_square.triangles.copy()
    tris[0] = tris[0][::-1]
    bad = Mesh(unit_square.vertices, tris, unit_square.edges,
               unit_square.edge_tags, unit_square.tag_names)
    with pytest.raises(MeshError):
        validate_mesh(bad)


def test_validate_rejects_out_of_range_index(unit_square):
    tris = unit_square.triangles.copy()
    tris[0, 0] = unit_square.num_vertices
    bad = Mesh(unit_square.vertices, tris, unit_square.edges,
               unit_square.edge_tags, unit_square.tag_names)
    with pytest.raises(MeshError):
        validate_mesh(bad)


def test_validate_rejects_missing_boundary_edge(unit_square):
    bad = Mesh(unit_square.vertices, unit_square.triangles,
               unit_square.edges[:-1], unit_square.edge_tags[:-1],
               unit_square.tag_names)
    with pytest.raises(MeshError):
        validate_mesh(bad)


# --- file format ------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, coarse_domain):
    path = tmp_path / "mesh.txt"
    save_mesh(coarse_domain, path)
    m = load_mesh(path)
    assert np.array_equal(m.vertices, coarse_domain.vertices)
    assert np.array_equal(m.triangles, coarse_domain.triangles)
    assert np.array_equal(m.edges, coarse_domain.edges)
    # tag codes may be renumbered on load; the name of each edge survives
    got = [m.tag_names[c] for c in m.edge_tags]
    want = [coarse_domain.tag_names[c] for c in coarse_domain.edge_tags]
    assert got == want
    save_mesh(m, tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("notamesh 1\n")
    with pytest.raises(ParseError):
        load_mesh(path)


def test_load_rejects_bad_coordinates(tmp_path, unit_square):
    path = tmp_path / "mesh.txt"
    save_mesh(unit_square, path)
    lines = path.read_text().splitlines()
    lines[2] = "0.0 not-a-number"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as exc:
        load_mesh(path)
    assert exc.value.line == 3


def test_load_rejects_truncated_file(tmp_path, unit_square):
    path = tmp_path / "mesh.txt"
    save_mesh(unit_square, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ParseError):
        load_mesh(path)


def test_load_rejects_broken_topology(tmp_path, unit_square):
    path = tmp_path / "mesh.txt"
    save_mesh(unit_square, path)
    text = path.read_text()
    # swap one triangle's orientation in place
    lines = text.splitlines()
    first_tri = 2 + unit_square.num_vertices + 1
    a, b, c = lines[first_tri].split()
    lines[first_tri] = f"{c} {b} {a}"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError):
        load_mesh(path)
