"""Drug concentration transport through the insonified region.

Advection-diffusion for the concentration c,

    c_t + v . grad c - D0 Delta c = f_c,    v = v0 - k_D grad p,

with the acoustic pressure gradient acting as an extra drift
(acoustically enhanced delivery).  The drift is evaluated per element
from the P1 pressure field.  One implicit Euler step solves

    [M + tau D0 K - tau C(v) + tau r B_Ga] c^{n+1}
        = M (c^n + tau f_c) + tau gin |l_Gb|

with C the convection form ((v . grad phi_i), phi_j), B_Ga the boundary
mass on the outflow arc scaled by the resistance r, gin the inflow flux
density on the transducer arc, and l_Gb the unit boundary load there.
The -tau C(v) term is the volume part of the advective flux divergence
(div(v c), phi_i) after integration by parts, so mass moves in the
direction of v.

Because column sums of K and C vanish and row sums of the boundary
operators integrate the flux, testing with 1 gives the exact discrete
mass budget

    m^{n+1} - m^n = tau gin |Gamma_b| - tau r (integral of c^{n+1}
                    over Gamma_a) + tau (integral of f_c)

up to solver tolerance; tests rely on this identity.
"""
from dataclasses import dataclass
import logging

import numpy as np

from .errors import DomainError
from .fem import (SolveOptions, SparseMatrix, element_gradients,
                  get_assembler, solve_sparse)
from .mesh import GAMMA_A, GAMMA_B

log = logging.getLogger(__name__)

FOCAL_BAND = (0.02, 0.05)


@dataclass(frozen=True)
class VelocityModel:
    """Drift field v = v0 - k_D grad p."""

    v0: tuple = (0.0, 0.0)
    k_d: float = 0.0
    d0: float = 0.0

    def __post_init__(self):
        if not self.d0 >= 0.0:
            raise DomainError(f"diffusivity d0 must be >= 0, got {self.d0}")

    def element_velocity(self, mesh, p=None):
        vel = np.broadcast_to(np.asarray(self.v0, dtype=np.float64),
                              (mesh.num_triangles, 2)).copy()
        if self.k_d != 0.0 and p is not None:
            vel -= self.k_d * element_gradients(mesh, p)
        return vel


@dataclass(frozen=True)
class TransportBoundary:
    """Inflow flux density on one arc, resistive outflow on another.

    ``inflow`` may be a constant or a callable of time.
    """

    inflow: object = 0.0
    inflow_tag: str = GAMMA_B
    outflow: float = 0.0
    outflow_tag: str = GAMMA_A

    def inflow_at(self, t):
        if callable(self.inflow):
            return float(self.inflow(t))
        return float(self.inflow)


@dataclass
class ConcentrationState:
    c: np.ndarray
    step: int
    t: float


class TransportStepper:
    def __init__(self, mesh, dt, velocity, boundary=None, *, f_c=None,
                 solver_tol=1e-12, warn_resolution=True):
        if not dt > 0.0:
            raise DomainError(f"dt must be positive, got {dt}")
        self.mesh = mesh
        self.dt = float(dt)
        self.velocity = velocity
        self.boundary = boundary if boundary is not None \
            else TransportBoundary()
        self.f_c = f_c
        self.solver_tol = solver_tol
        self.warn_resolution = warn_resolution
        self._warned = False
        self.asm = get_assembler(mesh)
        self.nv = mesh.num_vertices
        self.mass1 = self.asm.mass()
        ones = np.ones(self.nv)
        self.static_data = self.mass1.data \
            + self.dt * velocity.d0 * self.asm.weighted_stiffness(ones).data
        if self.boundary.outflow != 0.0:
            self.static_data = self.static_data + self.dt * \
                self.asm.boundary_mass(self.boundary.outflow_tag,
                                       self.boundary.outflow).data
        self.bload_unit = self.asm.boundary_load(
            self.boundary.inflow_tag,
            lambda pts: np.ones(pts.shape[0]))
        self.state = None

    def set_initial(self, c0=None):
        if c0 is None:
            c0 = np.zeros(self.nv)
        elif np.isscalar(c0):
            c0 = np.full(self.nv, float(c0))
        else:
            c0 = np.array(c0, dtype=np.float64)
        if c0.shape != (self.nv,):
            raise DomainError(f"c0 must have shape ({self.nv},)")
        self.state = ConcentrationState(c=c0, step=0, t=0.0)
        return self.state

    def _resolution_check(self, vel):
        speed = float(np.max(np.hypot(vel[:, 0], vel[:, 1])))
        if speed == 0.0:
            return
        h = float(np.min(np.sqrt(self.mesh.triangle_areas())))
        if self.velocity.d0 > 0.0:
            peclet = speed * h / (2.0 * self.velocity.d0)
            if peclet > 2.0:
                log.warning("cell Peclet number %.3g above 2; the drift "
                            "is under-resolved on this mesh", peclet)
                self._warned = True
        cfl = self.dt * speed / h
        if cfl > 1.0:
            log.warning("advective CFL number %.3g above 1; consider a "
                        "smaller time step", cfl)
            self._warned = True

    def step(self, p=None):
        """Advance one step, with the pressure field p driving the drift."""
        if self.state is None:
            self.set_initial()
        st = self.state
        tau = self.dt
        t_new = st.t + tau
        vel = self.velocity.element_velocity(self.mesh, p)
        if self.warn_resolution and not self._warned:
            self._resolution_check(vel)
        conv = self.asm.convection(vel)
        lhs = SparseMatrix(self.nv, conv.indptr, conv.indices,
                           self.static_data - tau * conv.data)
        src = st.c if self.f_c is None else \
            st.c + tau * self.f_c(self.mesh.vertices, st.t)
        rhs = self.mass1.matvec(src) \
            + tau * self.boundary.inflow_at(t_new) * self.bload_unit
        c, _ = solve_sparse(lhs, rhs, SolveOptions(
            method="bicgstab", tol=self.solver_tol, x0=st.c))
        self.state = ConcentrationState(c=c, step=st.step + 1, t=t_new)
        return self.state


def transport_step(stepper, p=None):
    """Advance the given stepper one step (functional-style alias)."""
    return stepper.step(p)


def mass_integral(mesh, c, region="whole"):
    """Integral of the P1 field c over the whole domain or a horizontal
    band selected by triangle centroid (``region=(lo, hi)`` or the
    ``"focal"`` shorthand for the treatment band)."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (mesh.num_vertices,):
        raise DomainError(f"c must have shape ({mesh.num_vertices},)")
    areas = mesh.triangle_areas()
    csum = c[mesh.triangles].sum(axis=1)
    if region == "whole":
        sel = slice(None)
    else:
        band = FOCAL_BAND if region == "focal" else region
        lo, hi = float(band[0]), float(band[1])
        cy = mesh.vertices[mesh.triangles, 1].mean(axis=1)
        sel = (cy > lo) & (cy < hi)
    return float(np.sum(areas[sel] * csum[sel]) / 3.0)


def boundary_integral(mesh, c, tag):
    """Integral of the P1 field c along the boundary edges with this tag."""
    c = np.asarray(c, dtype=np.float64)
    edges = mesh.boundary_edges(tag)
    pts = mesh.vertices
    lens = np.hypot(*(pts[edges[:, 1]] - pts[edges[:, 0]]).T)
    return float(np.sum(lens * c[edges].sum(axis=1)) / 2.0)
