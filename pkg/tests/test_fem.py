import math

import numpy as np
import pytest
import sympy as sp

from hifusim import fem
from hifusim.errors import ConvergenceError, DomainError
from hifusim.fem import (SolveOptions, SparseMatrix, apply_dirichlet,
                         assemble_boundary_load, assemble_boundary_mass,
                         assemble_convection, assemble_weighted_mass,
                         assemble_weighted_stiffness, element_gradients,
                         get_assembler, l2_norm, solve_sparse)
from hifusim.mesh import Mesh, build_rectangle_mesh

TRI_PTS = np.array([[0.2, 0.1], [1.1, 0.3], [0.4, 0.9]])


def one_triangle(pts=TRI_PTS):
    return Mesh(pts, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]],
                [0, 0, 0], ("edge",))


def symbolic_basis(pts):
    """The three P1 hat functions on a triangle, as sympy expressions."""
    x, y = sp.symbols("x y")
    a = sp.Matrix([[1, pts[0, 0], pts[0, 1]],
                   [1, pts[1, 0], pts[1, 1]],
                   [1, pts[2, 0], pts[2, 1]]])
    coeffs = a.inv()
    return x, y, [coeffs[0, i] + coeffs[1, i] * x + coeffs[2, i] * y
                  for i in range(3)]


def integrate_triangle(expr, x, y, pts):
    """Exact integral over the triangle via mapping to the reference."""
    u, v = sp.symbols("u v")
    xm = pts[0, 0] + (pts[1, 0] - pts[0, 0]) * u + (pts[2, 0] - pts[0, 0]) * v
    ym = pts[0, 1] + (pts[1, 1] - pts[0, 1]) * u + (pts[2, 1] - pts[0, 1]) * v
    jac = sp.Rational(1, 1) * sp.Matrix(
        [[pts[1, 0] - pts[0, 0], pts[2, 0] - pts[0, 0]],
         [pts[1, 1] - pts[0, 1], pts[2, 1] - pts[0, 1]]]).det()
    inner = expr.subs({x: xm, y: ym}) * jac
    return sp.integrate(sp.integrate(inner, (v, 0, 1 - u)), (u, 0, 1))


# --- element matrices against symbolic integration ---------------------------

def test_weighted_mass_matches_symbolic():
    m = one_triangle()
    w = np.array([1.3, -0.7, 2.1])
    got = assemble_weighted_mass(m, w).toarray()
    x, y, phi = symbolic_basis(TRI_PTS)
    wexpr = sum(float(w[k]) * phi[k] for k in range(3))
    for i in range(3):
        for j in range(3):
            exact = float(integrate_triangle(wexpr * phi[i] * phi[j],
                                             x, y, TRI_PTS))
            assert got[i, j] == pytest.approx(exact, rel=1e-13, abs=1e-16)


def test_weighted_stiffness_matches_symbolic():
    m = one_triangle()
    w = np.array([0.8, 1.9, -0.4])
    got = assemble_weighted_stiffness(m, w).toarray()
    x, y, phi = symbolic_basis(TRI_PTS)
    wexpr = sum(float(w[k]) * phi[k] for k in range(3))
    for i in range(3):          # i is the test index
        for j in range(3):
            integrand = (sp.diff(phi[j], x) * sp.diff(wexpr * phi[i], x)
                         + sp.diff(phi[j], y) * sp.diff(wexpr * phi[i], y))
            exact = float(integrate_triangle(integrand, x, y, TRI_PTS))
            assert got[i, j] == pytest.approx(exact, rel=1e-12, abs=1e-14)


def test_convection_matches_symbolic():
    m = one_triangle()
    v = np.array([[0.7, -1.2]])
    got = assemble_convection(m, v).toarray()
    x, y, phi = symbolic_basis(TRI_PTS)
    for i in range(3):
        drift = (v[0, 0] * sp.diff(phi[i], x)
                 + v[0, 1] * sp.diff(phi[i], y))
        for j in range(3):
            exact = float(integrate_triangle(drift * phi[j], x, y,
                                             TRI_PTS))
            assert got[i, j] == pytest.approx(exact, rel=1e-13, abs=1e-16)


# --- structural identities ----------------------------------------------------

def test_mass_total_is_area(wide_rect):
    m = assemble_weighted_mass(wide_rect, np.ones(wide_rect.num_vertices))
    assert m.data.sum() == pytest.approx(2.0, rel=1e-13)
    asm = get_assembler(wide_rect)
    assert asm.is_symmetric(m)


def test_stiffness_rows_sum_to_zero(wide_rect, rng):
    w = 1.5 + rng.random(wide_rect.num_vertices)
    k = assemble_weighted_stiffness(wide_rect, w)
    ones = np.ones(wide_rect.num_vertices)
    assert np.abs(k.matvec(ones)).max() < 1e-12 * np.abs(k.data).max()


def test_weighted_stiffness_nonsymmetric_for_varying_weight(wide_rect):
    asm = get_assembler(wide_rect)
    w = 1.0 + wide_rect.vertices[:, 0]
    assert not asm.is_symmetric(asm.weighted_stiffness(w))
    assert asm.is_symmetric(
        asm.weighted_stiffness(np.full(wide_rect.num_vertices, 3.0)))


def test_convection_columns_sum_to_zero(crossed_rect, rng):
    vel = rng.standard_normal((crossed_rect.num_triangles, 2))
    c = assemble_convection(crossed_rect, vel)
    colsums = c.toarray().sum(axis=0)
    assert np.abs(colsums).max() < 1e-13 * np.abs(c.data).max()


def test_combined_weighted_stiffness(wide_rect, rng):
    asm = get_assembler(wide_rect)
    w1 = rng.random(wide_rect.num_vertices)
    w2 = rng.random(wide_rect.num_vertices)
    combo = asm.combined_weighted_stiffness(w1, 2.0, w2, -0.5)
    ref = 2.0 * asm.weighted_stiffness(w1).data \
        - 0.5 * asm.weighted_stiffness(w2).data
    assert np.allclose(combo.data, ref, rtol=1e-13, atol=1e-18)


def test_weight_shape_is_checked(unit_square):
    with pytest.raises(DomainError):
        assemble_weighted_mass(unit_square, np.ones(3))
    with pytest.raises(DomainError):
        assemble_convection(unit_square, np.ones((4, 2)))


# --- boundary terms -----------------------------------------------------------

def test_boundary_mass_single_edge():
    m = one_triangle()
    bm = assemble_boundary_mass(m, "edge", 2.0).toarray()
    lens = [np.linalg.norm(TRI_PTS[b] - TRI_PTS[a])
            for a, b in ((0, 1), (1, 2), (2, 0))]
    exact = np.zeros((3, 3))
    for (a, b), ln in zip(((0, 1), (1, 2), (2, 0)), lens):
        exact[a, a] += 2.0 * ln / 3.0
        exact[b, b] += 2.0 * ln / 3.0
        exact[a, b] += 2.0 * ln / 6.0
        exact[b, a] += 2.0 * ln / 6.0
    assert np.allclose(bm, exact, rtol=1e-14)


def test_boundary_mass_total_is_length(unit_square):
    bm = assemble_boundary_mass(unit_square, "bottom")
    assert bm.data.sum() == pytest.approx(1.0, rel=1e-13)
    asm = get_assembler(unit_square)
    assert asm.boundary_length("bottom") == pytest.approx(1.0, rel=1e-14)


def test_boundary_load_quadrature_exactness(unit_square):
    # total: sum_i int f phi_i ds = int f ds, exact for cubic f
    load3 = assemble_boundary_load(
        unit_square, "bottom", lambda pts: pts[:, 0] ** 3)
    assert load3.sum() == pytest.approx(0.25, rel=1e-13)
    # entries: int f phi_i ds exact for quadratic f (cubic integrand)
    load2 = assemble_boundary_load(
        unit_square, "bottom", lambda pts: pts[:, 0] ** 2)
    x = sp.symbols("x")
    h = sp.Rational(1, 6)
    xs = np.where(np.isclose(unit_square.vertices[:, 1], 0.0))[0]
    order = xs[np.argsort(unit_square.vertices[xs, 0])]
    for pos, idx in enumerate(order):
        xi = pos * h
        left = sp.integrate(x ** 2 * (x - (xi - h)) / h,
                            (x, sp.Max(xi - h, 0), xi))
        right = sp.integrate(x ** 2 * ((xi + h) - x) / h,
                             (x, xi, sp.Min(xi + h, 1)))
        assert load2[idx] == pytest.approx(float(left + right),
                                           rel=1e-12, abs=1e-15)


def test_boundary_load_checks_flux_shape(unit_square):
    with pytest.raises(DomainError):
        assemble_boundary_load(unit_square, "bottom",
                               lambda pts: np.ones(3))


# --- gradients, norms, dirichlet ----------------------------------------------

def test_element_gradients_of_linear_field(crossed_rect):
    pts = crossed_rect.vertices
    u = 3.0 * pts[:, 0] - 2.0 * pts[:, 1] + 0.7
    g = element_gradients(crossed_rect, u)
    assert np.allclose(g[:, 0], 3.0, atol=1e-13)
    assert np.allclose(g[:, 1], -2.0, atol=1e-13)


def test_l2_norm_of_linear_field(unit_square):
    pts = unit_square.vertices
    u = pts[:, 0] + 2.0 * pts[:, 1]
    # int (x + 2y)^2 over the unit square = 1/3 + 1 + 4/3
    assert l2_norm(unit_square, u) == pytest.approx(
        math.sqrt(8.0 / 3.0), rel=1e-13)


def test_apply_dirichlet_rows(unit_square):
    asm = get_assembler(unit_square)
    k = asm.weighted_stiffness(np.ones(unit_square.num_vertices))
    mat = SparseMatrix(k.n, k.indptr, k.indices,
                       k.data + asm.mass().data)
    rhs = np.ones(unit_square.num_vertices)
    nodes = np.unique(unit_square.boundary_edges("left"))
    fixed, frhs = apply_dirichlet(mat, rhs, nodes, 5.0)
    dense = fixed.toarray()
    for n in nodes:
        row = np.zeros(unit_square.num_vertices)
        row[n] = 1.0
        assert np.array_equal(dense[n], row)
        assert frhs[n] == 5.0
    # untouched rows keep their data
    free = np.setdiff1d(np.arange(unit_square.num_vertices), nodes)
    assert np.array_equal(dense[free], mat.toarray()[free])


# --- sparse solver --------------------------------------------------------------

def test_solve_spd_matches_dense(unit_square, rng):
    asm = get_assembler(unit_square)
    mat = SparseMatrix(asm.nv, asm.indptr, asm.indices,
                       asm.mass().data
                       + 0.1 * asm.weighted_stiffness(
                           np.ones(asm.nv)).data)
    b = rng.standard_normal(asm.nv)
    x, info = solve_sparse(mat, b, SolveOptions(tol=1e-13))
    assert info.method == "cg"
    ref = np.linalg.solve(mat.toarray(), b)
    assert np.allclose(x, ref, rtol=1e-9, atol=1e-12)


def test_solve_nonsymmetric_matches_dense(unit_square, rng):
    asm = get_assembler(unit_square)
    vel = np.tile([1.0, 0.5], (unit_square.num_triangles, 1))
    mat = SparseMatrix(asm.nv, asm.indptr, asm.indices,
                       asm.mass().data + 0.01 * asm.convection(vel).data)
    b = rng.standard_normal(asm.nv)
    x, info = solve_sparse(mat, b, SolveOptions(tol=1e-13))
    assert info.method == "bicgstab"
    ref = np.linalg.solve(mat.toarray(), b)
    assert np.allclose(x, ref, rtol=1e-8, atol=1e-12)


def test_solve_warm_start_short_circuits(unit_square):
    asm = get_assembler(unit_square)
    mat = asm.mass()
    x_exact = np.ones(asm.nv)
    b = mat.matvec(x_exact)
    x, info = solve_sparse(mat, b, SolveOptions(tol=1e-10, x0=x_exact))
    assert info.iterations == 0
    assert np.array_equal(x, x_exact)


def test_solve_survives_shadow_vector_dropout(unit_square):
    # replaced Dirichlet rows converge in one iteration, leaving the
    # shadow residual orthogonal to the remaining one; the solver must
    # restart instead of reporting a rho ~ 0 breakdown
    asm = get_assembler(unit_square)
    mat = SparseMatrix(asm.nv, asm.indptr, asm.indices,
                       asm.mass().data
                       + 1e-8 * asm.weighted_stiffness(
                           np.ones(asm.nv)).data)
    rhs = np.zeros(asm.nv)
    nodes = np.unique(unit_square.boundary_edges("bottom"))
    fixed, frhs = apply_dirichlet(mat, rhs, nodes, 5.0)
    x, info = solve_sparse(fixed, frhs,
                           SolveOptions(method="bicgstab", tol=1e-12))
    assert np.allclose(fixed.matvec(x), frhs, atol=1e-10)


def test_solve_singular_raises():
    mat = SparseMatrix(2, np.array([0, 1, 2]), np.array([0, 1]),
                       np.array([1.0, 0.0]))
    with pytest.raises(ConvergenceError) as exc:
        solve_sparse(mat, np.array([1.0, 1.0]),
                     SolveOptions(method="cg", max_iters=50))
    assert exc.value.iterations <= 50


def test_solve_checks_rhs_shape(unit_square):
    mat = get_assembler(unit_square).mass()
    with pytest.raises(DomainError):
        solve_sparse(mat, np.ones(3))


# --- SparseMatrix plumbing ------------------------------------------------------

def test_matvec_matches_dense(crossed_rect, rng):
    asm = get_assembler(crossed_rect)
    w = 0.5 + rng.random(asm.nv)
    mat = asm.weighted_stiffness(w)
    x = rng.standard_normal(asm.nv)
    assert np.allclose(mat.matvec(x), mat.toarray() @ x,
                       rtol=1e-13, atol=1e-15)


def test_add_scaled_requires_same_pattern(unit_square, wide_rect):
    a = get_assembler(unit_square).mass()
    b = get_assembler(wide_rect).mass()
    with pytest.raises(DomainError):
        a.copy().add_scaled(b, 1.0)


def test_diagonal(unit_square):
    mat = get_assembler(unit_square).mass()
    assert np.allclose(mat.diagonal(), np.diag(mat.toarray()))
