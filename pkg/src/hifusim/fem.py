"""P1 finite elements on triangles: assembly and Krylov solvers.

All operators are assembled on a single sparsity pattern per mesh (vertex
adjacency), which makes adding matrices a plain addition of their data
arrays.  Element integrals use closed forms that are exact for the stated
integrands:

* weighted mass (w phi_i, phi_j) with piecewise-linear w - exact for the
  cubic integrand,
* weighted stiffness (grad phi_j, grad (w phi_i)) - test function on the
  weighted side, hence nonsymmetric for varying w,
* convection ((v . grad phi_i), phi_j) with per-element constant v,
* boundary mass and boundary load on tagged edges (loads use two-point
  Gauss quadrature).

Solvers: Jacobi-preconditioned conjugate gradients for symmetric positive
definite systems and Jacobi-preconditioned BiCGStab otherwise, both to a
relative residual of 1e-10 by default, with deterministic iteration.
"""
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConvergenceError, DomainError, ValidationError

DEFAULT_TOL = 1e-10


@dataclass
class SparseMatrix:
    """CSR matrix; instances from one Assembler share their pattern."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def matvec(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DomainError(f"matvec expects shape ({self.n},), "
                              f"got {x.shape}")
        return backend.csr_matvec(self.indptr, self.indices, self.data, x)

    def diagonal(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        on_diag = self.indices == rows
        d = np.zeros(self.n)
        d[rows[on_diag]] = self.data[on_diag]
        return d

    def toarray(self):
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            for k in range(self.indptr[i], self.indptr[i + 1]):
                a[i, self.indices[k]] += self.data[k]
        return a

    def copy(self):
        return SparseMatrix(self.n, self.indptr, self.indices,
                            self.data.copy())

    def add_scaled(self, other, factor):
        """self += factor * other (same pattern required)."""
        if other.indices is not self.indices and \
                not np.array_equal(other.indices, self.indices):
            raise DomainError("add_scaled requires matrices on the same "
                              "sparsity pattern")
        self.data += factor * other.data
        return self


@dataclass
class SolveOptions:
    method: str = "auto"          # "cg" | "bicgstab" | "auto"
    tol: float = DEFAULT_TOL
    max_iters: int = 0            # 0 -> 10 * n
    x0: np.ndarray = None


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float


class Assembler:
    """Per-mesh assembly workspace: pattern, gradients, boundary data."""

    def __init__(self, mesh):
        self.mesh = mesh
        pts = mesh.vertices
        tris = mesh.triangles
        self.nv = pts.shape[0]

        d1 = pts[tris[:, 1]] - pts[tris[:, 0]]
        d2 = pts[tris[:, 2]] - pts[tris[:, 0]]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.areas = 0.5 * det
        # grad phi_i = rot(P_{i+2} - P_{i+1}) / (2A), rot(x, y) = (-y, x)
        grads = np.empty((tris.shape[0], 3, 2))
        for i in range(3):
            e = pts[tris[:, (i + 2) % 3]] - pts[tris[:, (i + 1) % 3]]
            grads[:, i, 0] = -e[:, 1] / det
            grads[:, i, 1] = e[:, 0] / det
        self.grads = grads

        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, 3).ravel()
        key = rows.astype(np.int64) * self.nv + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self.indices = (uniq % self.nv).astype(np.int64)
        urows = uniq // self.nv
        self.indptr = np.zeros(self.nv + 1, dtype=np.int64)
        np.add.at(self.indptr, urows + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        # element (e, i, j) -> position in data; note rows/cols built so
        # that index order is (e, i, j)
        self.emap = np.ascontiguousarray(
            inverse.reshape(tris.shape[0], 3, 3), dtype=np.int64)
        self.nnz = uniq.shape[0]

        # transpose permutation (pattern is structurally symmetric)
        tkey = self.indices * self.nv + urows
        self.tperm = np.argsort(tkey, kind="stable")

        self._diag_pos = None
        self._bnd = {}
        self._mass1 = None

    def _new(self):
        return SparseMatrix(self.nv, self.indptr, self.indices,
                            np.zeros(self.nnz))

    def _weight_at_tris(self, w):
        w = np.ascontiguousarray(w, dtype=np.float64)
        if w.shape != (self.nv,):
            raise DomainError(f"nodal weight must have shape ({self.nv},), "
                              f"got {w.shape}")
        return np.ascontiguousarray(w[self.mesh.triangles])

    def weighted_mass(self, w):
        mat = self._new()
        backend.mass_fill(self.areas, self._weight_at_tris(w), self.emap,
                          mat.data)
        return mat

    def weighted_stiffness(self, w):
        mat = self._new()
        backend.stiffness_fill(self.areas, self.grads,
                               self._weight_at_tris(w), self.emap, mat.data)
        return mat

    def combined_weighted_stiffness(self, w1, c1, w2, c2):
        """Stiffness with weight c1*w1 + c2*w2 in a single fill."""
        w = c1 * np.asarray(w1, dtype=np.float64) \
            + c2 * np.asarray(w2, dtype=np.float64)
        return self.weighted_stiffness(w)

    def convection(self, vel):
        vel = np.ascontiguousarray(vel, dtype=np.float64)
        if vel.shape != (self.mesh.num_triangles, 2):
            raise DomainError("element velocity must have shape "
                              f"({self.mesh.num_triangles}, 2)")
        mat = self._new()
        backend.convection_fill(self.areas, self.grads, vel, self.emap,
                                mat.data)
        return mat

    def mass(self):
        """Unweighted mass matrix (cached)."""
        if self._mass1 is None:
            self._mass1 = self.weighted_mass(np.ones(self.nv))
        return self._mass1

    def _boundary(self, tag):
        if tag not in self._bnd:
            edges = self.mesh.boundary_edges(tag)
            pts = self.mesh.vertices
            vecs = pts[edges[:, 1]] - pts[edges[:, 0]]
            lens = np.hypot(vecs[:, 0], vecs[:, 1])
            # positions of (i,i),(i,j),(j,i),(j,j) in the CSR data
            pos = np.empty((edges.shape[0], 2, 2), dtype=np.int64)
            for a in range(2):
                for b in range(2):
                    pos[:, a, b] = self._find_pos(edges[:, a], edges[:, b])
            self._bnd[tag] = (edges, lens, pos)
        return self._bnd[tag]

    def _find_pos(self, rows, cols):
        pos = np.empty(rows.shape[0], dtype=np.int64)
        for k in range(rows.shape[0]):
            lo, hi = self.indptr[rows[k]], self.indptr[rows[k] + 1]
            j = np.searchsorted(self.indices[lo:hi], cols[k])
            if j >= hi - lo or self.indices[lo + j] != cols[k]:
                raise DomainError("boundary edge not present in the volume "
                                  "pattern")
            pos[k] = lo + j
        return pos

    def boundary_mass(self, tag, coeff=1.0):
        """Matrix of coeff * int_tag phi_i phi_j ds on the volume pattern."""
        edges, lens, pos = self._boundary(tag)
        mat = self._new()
        for (a, b), f in (((0, 0), 1.0 / 3.0), ((1, 1), 1.0 / 3.0),
                          ((0, 1), 1.0 / 6.0), ((1, 0), 1.0 / 6.0)):
            np.add.at(mat.data, pos[:, a, b], coeff * lens * f)
        return mat

    def boundary_load(self, tag, flux):
        """Vector of int_tag flux phi_i ds; flux maps (k,2) points to (k,).

        Two-point Gauss quadrature per edge: entries are exact for
        quadratic flux (cubic integrand); the total sum over i is exact
        for cubic flux.
        """
        edges, lens, _ = self._boundary(tag)
        pts = self.mesh.vertices
        out = np.zeros(self.nv)
        if edges.shape[0] == 0:
            return out
        p0 = pts[edges[:, 0]]
        p1 = pts[edges[:, 1]]
        s = 0.5 / np.sqrt(3.0)
        for xi, w in ((0.5 - s, 0.5), (0.5 + s, 0.5)):
            gp = (1.0 - xi) * p0 + xi * p1
            fv = np.asarray(flux(gp), dtype=np.float64)
            if fv.shape != (edges.shape[0],):
                raise DomainError("flux callable must return one value per "
                                  "quadrature point")
            np.add.at(out, edges[:, 0], w * lens * fv * (1.0 - xi))
            np.add.at(out, edges[:, 1], w * lens * fv * xi)
        return out

    def boundary_length(self, tag):
        _, lens, _ = self._boundary(tag)
        return float(lens.sum())

    def is_symmetric(self, mat, rtol=1e-12):
        scale = max(float(np.abs(mat.data).max(initial=0.0)), 1e-300)
        return bool(np.all(np.abs(mat.data - mat.data[self.tperm])
                           <= rtol * scale))


def get_assembler(mesh):
    if getattr(mesh, "_assembler", None) is None:
        mesh._assembler = Assembler(mesh)
    return mesh._assembler


def assemble_weighted_mass(mesh, weight):
    return get_assembler(mesh).weighted_mass(weight)


def assemble_weighted_stiffness(mesh, weight):
    return get_assembler(mesh).weighted_stiffness(weight)


def assemble_convection(mesh, element_velocity):
    return get_assembler(mesh).convection(element_velocity)


def assemble_boundary_mass(mesh, tag, coeff=1.0):
    return get_assembler(mesh).boundary_mass(tag, coeff)


def assemble_boundary_load(mesh, tag, flux):
    return get_assembler(mesh).boundary_load(tag, flux)


def element_gradients(mesh, u):
    """Per-element constant gradient of a nodal field, (nt, 2)."""
    asm = get_assembler(mesh)
    u = np.asarray(u, dtype=np.float64)
    ut = u[mesh.triangles]
    return np.einsum('ei,eik->ek', ut, asm.grads)


def apply_dirichlet(mat, rhs, nodes, values):
    """Row replacement: mat[n, :] = e_n, rhs[n] = value (verification aid).

    Returns modified copies; the matrix becomes nonsymmetric.
    """
    mat = mat.copy()
    rhs = rhs.copy()
    nodes = np.asarray(nodes, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=np.float64),
                             nodes.shape)
    for n, v in zip(nodes, values):
        lo, hi = mat.indptr[n], mat.indptr[n + 1]
        mat.data[lo:hi] = 0.0
        j = np.searchsorted(mat.indices[lo:hi], n)
        mat.data[lo + j] = 1.0
        rhs[n] = v
    return mat, rhs


def _jacobi(mat):
    d = mat.diagonal()
    bad = np.abs(d) < 1e-300
    if bad.any():
        d = d.copy()
        d[bad] = 1.0
    return d


def solve_sparse(mat, rhs, opts=None):
    """Solve mat @ x = rhs with CG (SPD) or BiCGStab, Jacobi preconditioned.

    Stops at relative true residual opts.tol (default 1e-10); raises
    ConvergenceError carrying the final residual when the iteration budget
    (default 10n) is exhausted or the recurrence breaks down.  A warm
    start whose residual already meets the tolerance is returned
    unchanged.
    """
    if opts is None:
        opts = SolveOptions()
    b = np.ascontiguousarray(rhs, dtype=np.float64)
    if b.shape != (mat.n,):
        raise DomainError(f"rhs must have shape ({mat.n},), got {b.shape}")
    method = opts.method
    if method == "auto":
        rows = np.repeat(np.arange(mat.n), np.diff(mat.indptr))
        tp = np.argsort(mat.indices * mat.n + rows, kind="stable")
        scale = max(float(np.abs(mat.data).max(initial=0.0)), 1e-300)
        sym = np.array_equal(mat.indices, rows[tp]) and \
            bool(np.all(np.abs(mat.data - mat.data[tp]) <= 1e-12 * scale))
        method = "cg" if sym else "bicgstab"
    if method not in ("cg", "bicgstab"):
        raise ValidationError(f"unknown solver method {method!r}",
                              field="method")

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(mat.n), SolveInfo(method, 0, 0.0)
    max_iters = opts.max_iters if opts.max_iters else 10 * mat.n
    if opts.x0 is not None:
        x = np.array(opts.x0, dtype=np.float64)
        r = b - mat.matvec(x)
    else:
        x = np.zeros(mat.n)
        r = b.copy()
    rnorm = float(np.linalg.norm(r))
    if rnorm <= opts.tol * bnorm:
        return x, SolveInfo(method, 0, rnorm / bnorm)
    dinv = 1.0 / _jacobi(mat)

    if method == "cg":
        z = dinv * r
        p = z.copy()
        rz = float(r @ z)
        for it in range(1, max_iters + 1):
            ap = mat.matvec(p)
            pap = float(p @ ap)
            if pap <= 0.0:
                raise ConvergenceError(
                    "cg breakdown: matrix not positive definite",
                    residual=rnorm / bnorm, iterations=it)
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            rnorm = float(np.linalg.norm(r))
            if rnorm <= opts.tol * bnorm:
                return x, SolveInfo(method, it, rnorm / bnorm)
            z = dinv * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise ConvergenceError(
            f"cg did not converge in {max_iters} iterations",
            residual=rnorm / bnorm, iterations=max_iters)

    # BiCGStab, right-preconditioned so the recursion carries the true
    # residual.  A vanishing BiCG scalar while the residual is still large
    # means the shadow vector lost its overlap with the Krylov space (it
    # happens when part of the system converges exactly, e.g. replaced
    # Dirichlet rows); re-seeding rhat from the current residual restarts
    # the recursion cleanly.
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(mat.n)
    p = np.zeros(mat.n)
    last_restart = 0

    def restart(it):
        nonlocal rhat, rho, alpha, omega, v, p, last_restart
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(mat.n)
        p = np.zeros(mat.n)
        last_restart = it

    for it in range(1, max_iters + 1):
        rho_new = float(rhat @ r)
        if abs(rho_new) < 1e-300:
            if last_restart == it:
                raise ConvergenceError("bicgstab breakdown (rho ~ 0)",
                                       residual=rnorm / bnorm,
                                       iterations=it)
            restart(it)
            rho_new = float(rhat @ r)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = dinv * p
        v = mat.matvec(phat)
        denom = float(rhat @ v)
        if abs(denom) < 1e-300:
            if last_restart == it:
                raise ConvergenceError("bicgstab breakdown (rhat . v ~ 0)",
                                       residual=rnorm / bnorm,
                                       iterations=it)
            restart(it)
            continue
        alpha = rho / denom
        s = r - alpha * v
        snorm = float(np.linalg.norm(s))
        if snorm <= opts.tol * bnorm:
            x += alpha * phat
            return x, SolveInfo(method, it, snorm / bnorm)
        shat = dinv * s
        t = mat.matvec(shat)
        tt = float(t @ t)
        if tt < 1e-300:
            raise ConvergenceError("bicgstab breakdown (t ~ 0)",
                                   residual=snorm / bnorm, iterations=it)
        omega = float(t @ s) / tt
        if abs(omega) < 1e-300:
            raise ConvergenceError("bicgstab breakdown (omega ~ 0)",
                                   residual=snorm / bnorm, iterations=it)
        x += alpha * phat + omega * shat
        r = s - omega * t
        rnorm = float(np.linalg.norm(r))
        if rnorm <= opts.tol * bnorm:
            return x, SolveInfo(method, it, rnorm / bnorm)
    raise ConvergenceError(
        f"bicgstab did not converge in {max_iters} iterations",
        residual=rnorm / bnorm, iterations=max_iters)


def l2_norm(mesh, u):
    """Continuous L2 norm of a nodal field via the mass matrix."""
    m = get_assembler(mesh).mass()
    u = np.asarray(u, dtype=np.float64)
    return float(np.sqrt(max(0.0, u @ m.matvec(u))))
