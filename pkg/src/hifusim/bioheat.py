"""Tissue temperature rise driven by absorbed acoustic energy.

Pennes model for the excess temperature theta = Theta - Theta_a,

    theta_t - kappa Delta theta + nu omega_b(Theta) theta = G + f_theta,
    G = zeta / (rho_a C_a) * b(Theta) / q(Theta)^2 * (p_t)^2,

with kappa = kappa_a / (rho_a C_a) and nu = rho_b C_b / (rho_a C_a).
One semi-implicit Euler step freezes the reaction coefficient and the
source at the current temperature:

    [M + tau kappa K + M(nu omega_b(Theta^n))] theta^{n+1}
        = M (theta^n + tau (G^n + f_theta)).

The left-hand side is symmetric positive definite whenever omega_b >= 0,
so the solve is conjugate gradients.  Boundary conditions are
homogeneous Neumann by default; an optional Dirichlet patch replaces
rows, which breaks symmetry and switches the solve to BiCGStab.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DefinitenessError, DomainError
from .fem import (SolveOptions, SparseMatrix, apply_dirichlet, get_assembler,
                  solve_sparse)
from .materials import absorbed_energy


@dataclass
class ThermalState:
    theta: np.ndarray
    step: int
    t: float


class PennesStepper:
    def __init__(self, mesh, model, dt, *, f_theta=None, dirichlet=None,
                 solver_tol=1e-10):
        if not dt > 0.0:
            raise DomainError(f"dt must be positive, got {dt}")
        self.mesh = mesh
        self.model = model
        self.dt = float(dt)
        self.f_theta = f_theta
        self.solver_tol = solver_tol
        self.asm = get_assembler(mesh)
        self.nv = mesh.num_vertices
        self.mass1 = self.asm.mass()
        ones = np.ones(self.nv)
        self.diff_data = self.dt * model.kappa * \
            self.asm.weighted_stiffness(ones).data
        if dirichlet is not None:
            tag, value = dirichlet
            edges = mesh.boundary_edges(tag)
            self.dirichlet_nodes = np.unique(edges)
            self.dirichlet_value = value
        else:
            self.dirichlet_nodes = None
            self.dirichlet_value = None
        self.state = None

    def set_initial(self, theta0=None):
        theta0 = np.zeros(self.nv) if theta0 is None else \
            np.array(theta0, dtype=np.float64)
        if theta0.shape != (self.nv,):
            raise DomainError(f"theta0 must have shape ({self.nv},)")
        self.state = ThermalState(theta=theta0, step=0, t=0.0)
        return self.state

    def step(self, p_t):
        """Advance one step with the acoustic rate field p_t."""
        if self.state is None:
            self.set_initial()
        st = self.state
        tau = self.dt
        t_new = st.t + tau
        reaction = self.model.nu * self.model.omega_b_of(
            st.theta + self.model.theta_a)
        rmin = float(np.min(reaction))
        if rmin < 0.0:
            raise DefinitenessError(
                f"pennes reaction coefficient is negative (min nu omega_b "
                f"= {rmin:g}); the implicit operator may lose positive "
                f"definiteness")
        source = absorbed_energy(self.model, p_t, st.theta)
        if self.f_theta is not None:
            source = source + self.f_theta(self.mesh.vertices, st.t)
        rhs = self.mass1.matvec(st.theta + tau * source)
        mw = self.asm.weighted_mass(tau * reaction)
        lhs = SparseMatrix(self.nv, mw.indptr, mw.indices,
                           self.mass1.data + self.diff_data + mw.data)
        if self.dirichlet_nodes is not None:
            vals = self.dirichlet_value(
                self.mesh.vertices[self.dirichlet_nodes], t_new)
            lhs, rhs = apply_dirichlet(lhs, rhs, self.dirichlet_nodes,
                                       vals)
            theta, _ = solve_sparse(lhs, rhs, SolveOptions(
                method="bicgstab", tol=self.solver_tol, x0=st.theta))
        else:
            theta, _ = solve_sparse(lhs, rhs, SolveOptions(
                method="cg", tol=self.solver_tol, x0=st.theta))
        self.state = ThermalState(theta=theta, step=st.step + 1, t=t_new)
        return self.state


def pennes_step(stepper, p_t):
    """Advance the given stepper one step (functional-style alias)."""
    return stepper.step(p_t)


def peak_temperature(theta):
    """Largest excess temperature and the vertex where it occurs."""
    theta = np.asarray(theta)
    idx = int(np.argmax(theta))
    return float(theta[idx]), idx
