"""Nonlinear acoustic pressure stepper with fractional damping.

Solves, in weak form with P1 elements,

    (1 - 2 k(Theta) p) p_tt - div(q(Theta) grad p)
        - b(Theta) D_t^alpha (Delta p) = 2 k(Theta) (p_t)^2 + b f_p

with an inhomogeneous flux on the transducer arc and homogeneous Neumann
elsewhere.  Time discretization is a Newmark predictor-corrector
(beta = 0.45, gamma = 0.85 by default) with the Caputo derivative
replaced by the L1 rule on the stored time-derivative history; the
quasilinear factor is resolved by fixed-point iteration, each iterate a
linear solve with the previous acceleration as warm start.

Per step, writing ptilde / vtilde for the Newmark predictors, the linear
system for the acceleration iterate a is

    [M(1 - 2 k p*) + beta tau^2 K(q)
        + gamma tau^(2-alpha) zeta0 K(b)] a
      = M1 (2 k (p*_t)^2 + b f_p) - K(q) ptilde
        - tau^(1-alpha) K(b) (zeta0 vtilde + Upsilon) + Phi

with K(w) the weighted stiffness (test side), Upsilon the L1 history
combination of past p_t, and Phi the boundary load

    Phi = [g(t) q(Theta_a)
           + tau^(1-alpha) b(Theta_a) sum_j zeta_j g'(t_{n+1-j})] l_Gb

evaluated with ambient coefficients (l_Gb is the unit load on the arc).

Coupling modes: ``full`` (temperature-dependent coefficients and
quadratic nonlinearity), ``frozen_temperature`` (ambient coefficients),
``linear`` (k forced to zero).  Kernels: ``abel`` (fractional damping),
``dirac`` (strong damping b Delta p_t), ``none`` (undamped).
"""
from dataclasses import dataclass
import logging
import math

import numpy as np

from . import backend
from .errors import ConvergenceError, DomainError, ResourceError
from .fem import SolveOptions, SparseMatrix, get_assembler, solve_sparse
from .kernels import L1WeightCache
from .materials import eval_coefficient_fields
from .mesh import GAMMA_B

log = logging.getLogger(__name__)

COUPLING_MODES = ("full", "frozen_temperature", "linear")
KERNEL_MODES = ("abel", "dirac", "none")

DEFAULT_HISTORY_LIMIT = 4 << 30  # bytes


@dataclass(frozen=True)
class Excitation:
    """Transducer drive g(t): a sine that picks up a slow modulation
    after one period.

        g(t) = g0 sin(omega t)                          t <= 2 pi / omega
        g(t) = g0 sin(omega t) (1 + sin(omega t / 4))   t >  2 pi / omega

    g(0) = 0 and g is continuous at the switch; g' has a finite jump
    there (g0 omega -> 2 g0 omega).
    """

    g0: float
    omega: float

    def __post_init__(self):
        if not self.omega > 0.0:
            raise DomainError(f"excitation omega must be positive, "
                              f"got {self.omega}")

    @property
    def switch_time(self):
        return 2.0 * math.pi / self.omega

    def value(self, t):
        t = float(t)
        if t < 0.0:
            raise DomainError(f"excitation time must be >= 0, got {t}")
        s = math.sin(self.omega * t)
        if t <= self.switch_time:
            return self.g0 * s
        return self.g0 * s * (1.0 + math.sin(self.omega * t / 4.0))

    def derivative(self, t):
        t = float(t)
        if t < 0.0:
            raise DomainError(f"excitation time must be >= 0, got {t}")
        w = self.omega
        if t <= self.switch_time:
            return self.g0 * w * math.cos(w * t)
        return self.g0 * (w * math.cos(w * t) * (1.0 + math.sin(w * t / 4.0))
                          + 0.25 * w * math.sin(w * t) * math.cos(w * t / 4.0))


@dataclass(frozen=True)
class NewmarkParams:
    beta: float = 0.45
    gamma: float = 0.85
    tol: float = 1e-12
    max_iters: int = 200

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0 or not 0.0 < self.gamma <= 1.0:
            raise DomainError("newmark beta, gamma must lie in (0, 1]")
        if not self.tol > 0.0 or self.max_iters < 1:
            raise DomainError("newmark tol must be > 0 and max_iters >= 1")


def newmark_predict(p, p_t, p_tt, dt, params):
    pa = p + dt * p_t + (0.5 - params.beta) * dt * dt * p_tt
    va = p_t + (1.0 - params.gamma) * dt * p_tt
    return pa, va


def newmark_correct(pa, va, a, dt, params):
    return pa + params.beta * dt * dt * a, va + params.gamma * dt * a


@dataclass
class AcousticState:
    p: np.ndarray
    p_t: np.ndarray
    p_tt: np.ndarray
    step: int
    t: float


@dataclass
class StepStats:
    iterations: int
    rel_change: float
    solver_iterations: int


class WesterveltStepper:
    """Owns the acoustic state, the p_t history, and per-mesh caches."""

    def __init__(self, mesh, model, excitation, dt, *, alpha=0.8,
                 params=None, kernel="abel", coupling="full",
                 steps_hint=None, history_limit=DEFAULT_HISTORY_LIMIT,
                 f_p=None, boundary_tag=GAMMA_B, solver_tol=1e-10):
        if not dt > 0.0:
            raise DomainError(f"dt must be positive, got {dt}")
        if coupling not in COUPLING_MODES:
            raise DomainError(f"coupling must be one of {COUPLING_MODES}, "
                              f"got {coupling!r}")
        if kernel not in KERNEL_MODES:
            raise DomainError(f"kernel must be one of {KERNEL_MODES}, "
                              f"got {kernel!r}")
        self.mesh = mesh
        self.model = model
        self.excitation = excitation
        self.dt = float(dt)
        self.params = params if params is not None else NewmarkParams()
        self.kernel = kernel
        self.coupling = coupling
        self.f_p = f_p
        self.solver_tol = solver_tol
        self.asm = get_assembler(mesh)
        self.nv = mesh.num_vertices
        self.mass1 = self.asm.mass()
        self.bload_unit = self.asm.boundary_load(
            boundary_tag, lambda pts: np.ones(pts.shape[0]))
        self.history_limit = int(history_limit)
        if self.kernel == "abel":
            self.weights = L1WeightCache(alpha)
            self.alpha = self.weights.alpha
            self.taualph = self.dt ** (1.0 - self.alpha)
        else:
            self.weights = None
            self.alpha = None
            self.taualph = 0.0
        cap = (steps_hint + 1) if steps_hint else 64
        self._check_history(cap)
        self._hist = np.zeros((cap, self.nv))
        self._gp = np.zeros(cap)
        self.state = None
        self.stats = []
        self._zeros = np.zeros(self.nv)

    def _check_history(self, rows):
        need = rows * (self.nv + 1) * 8
        if need > self.history_limit:
            raise ResourceError(
                f"p_t history would need {need} bytes for {rows} steps, "
                f"above the configured limit {self.history_limit}; "
                f"raise the limit or shorten the run")

    def _grow_history(self, rows):
        if rows <= self._hist.shape[0]:
            return
        cap = max(rows, 2 * self._hist.shape[0])
        self._check_history(cap)
        hist = np.zeros((cap, self.nv))
        hist[:self._hist.shape[0]] = self._hist
        self._hist = hist
        gp = np.zeros(cap)
        gp[:self._gp.shape[0]] = self._gp
        self._gp = gp

    def _theta_for_coeffs(self, theta):
        if self.coupling == "frozen_temperature":
            return self._zeros
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.nv,):
            raise DomainError(f"theta must have shape ({self.nv},)")
        return theta

    def _l2(self, u):
        return math.sqrt(max(0.0, float(u @ self.mass1.matvec(u))))

    def set_initial(self, p0=None, p1=None, theta0=None):
        """Set p(0), p_t(0) and derive the consistent initial acceleration.

        The t = 0 acceleration solves the discrete equation with the
        initial data in place of the predictors.  For zero data and
        g(0) = 0 it is identically zero.
        """
        p0 = self._zeros.copy() if p0 is None else \
            np.array(p0, dtype=np.float64)
        p1 = self._zeros.copy() if p1 is None else \
            np.array(p1, dtype=np.float64)
        theta0 = self._zeros if theta0 is None else theta0
        cf = eval_coefficient_fields(self.model, self._theta_for_coeffs(
            theta0))
        kf = np.zeros_like(cf.k) if self.coupling == "linear" else cf.k
        rhs = self.mass1.matvec(2.0 * kf * p1 * p1)
        kq = self.asm.weighted_stiffness(cf.q)
        rhs -= kq.matvec(p0)
        flux = self.excitation.value(0.0) * self.model.ambient_q()
        if self.kernel == "dirac":
            kb = self.asm.weighted_stiffness(cf.b)
            rhs -= kb.matvec(p1)
            flux += self.excitation.derivative(0.0) * self.model.ambient_b()
        rhs += flux * self.bload_unit
        mw = self.asm.weighted_mass(1.0 - 2.0 * kf * p0)
        a0, _ = solve_sparse(mw, rhs, SolveOptions(
            method="cg", tol=self.solver_tol))
        self.state = AcousticState(p=p0, p_t=p1, p_tt=a0, step=0, t=0.0)
        self._hist[0] = p1
        self._gp[0] = self.excitation.derivative(0.0)
        self.stats = []
        return self.state

    def _boundary_flux(self, n, t_new):
        amb_q = self.model.ambient_q()
        amb_b = self.model.ambient_b()
        g = self.excitation.value(t_new)
        if self.kernel == "abel":
            w = self.weights.weights(n)
            conv = float(np.dot(w, self._gp[:n + 2][::-1]))
            return g * amb_q + self.taualph * amb_b * conv
        if self.kernel == "dirac":
            return g * amb_q + self.excitation.derivative(t_new) * amb_b
        return g * amb_q

    def step(self, theta=None):
        """Advance one time step using the temperature field theta."""
        if self.state is None:
            self.set_initial()
        st = self.state
        n = st.step
        t_new = st.t + self.dt
        tau = self.dt
        prm = self.params
        cf = eval_coefficient_fields(
            self.model, self._theta_for_coeffs(
                theta if theta is not None else self._zeros))
        kf = np.zeros_like(cf.k) if self.coupling == "linear" else cf.k

        self._grow_history(n + 2)
        self._gp[n + 1] = self.excitation.derivative(t_new)

        pa, va = newmark_predict(st.p, st.p_t, st.p_tt, tau, prm)

        kq = self.asm.weighted_stiffness(cf.q)
        rhs_static = self._boundary_flux(n, t_new) * self.bload_unit \
            - kq.matvec(pa)
        lhs_stiff = prm.beta * tau * tau * kq.data
        if self.kernel == "abel":
            z0 = self.weights.zeta0
            kb = self.asm.weighted_stiffness(cf.b)
            wrev = np.empty(n + 1)
            wrev[0] = self.weights.last(n)
            if n >= 1:
                wrev[1:] = self.weights.interior(n)[::-1]
            ups = backend.history_comb(self._hist[:n + 1], wrev)
            rhs_static -= self.taualph * kb.matvec(z0 * va + ups)
            lhs_stiff = lhs_stiff \
                + prm.gamma * tau * self.taualph * z0 * kb.data
        elif self.kernel == "dirac":
            kb = self.asm.weighted_stiffness(cf.b)
            rhs_static -= kb.matvec(va)
            lhs_stiff = lhs_stiff + prm.gamma * tau * kb.data

        fp_term = None
        if self.f_p is not None:
            fp_term = cf.b * self.f_p(self.mesh.vertices, t_new)

        a = st.p_tt.copy()
        p_star, v_star = newmark_correct(pa, va, a, tau, prm)
        rel = math.inf
        rel_prev = math.inf
        iters = 0
        solver_total = 0
        while iters < prm.max_iters:
            z = 2.0 * kf * v_star * v_star
            if fp_term is not None:
                z = z + fp_term
            rhs = self.mass1.matvec(z) + rhs_static
            mw = self.asm.weighted_mass(1.0 - 2.0 * kf * p_star)
            lhs = SparseMatrix(self.nv, mw.indptr, mw.indices,
                               mw.data + lhs_stiff)
            a_new, info = solve_sparse(lhs, rhs, SolveOptions(
                method="bicgstab", tol=self.solver_tol, x0=a))
            solver_total += info.iterations
            num = self._l2(a_new - a)
            den = self._l2(a_new)
            rel = 0.0 if num == 0.0 else (num / den if den > 0.0
                                          else math.inf)
            a = a_new
            p_star, v_star = newmark_correct(pa, va, a, tau, prm)
            iters += 1
            if rel > rel_prev:
                log.warning("fixed-point residual increased at step %d: "
                            "%.3e -> %.3e", n + 1, rel_prev, rel)
            rel_prev = rel
            if rel < prm.tol:
                break
        else:
            raise ConvergenceError(
                f"westervelt fixed point did not reach {prm.tol} in "
                f"{prm.max_iters} iterations at t = {t_new}",
                residual=rel, iterations=iters)

        self.state = AcousticState(p=p_star, p_t=v_star, p_tt=a,
                                   step=n + 1, t=t_new)
        self._hist[n + 1] = v_star
        self.stats.append(StepStats(iterations=iters, rel_change=rel,
                                    solver_iterations=solver_total))
        return self.state


def westervelt_step(stepper, theta=None):
    """Advance the given stepper one step (functional-style alias)."""
    return stepper.step(theta)
