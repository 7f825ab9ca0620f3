"""Convergence studies and identity checks.

Each suite returns a list of CheckResult records; the CLI renders them
and fails the process when any check is false.  The helpers double as
oracles for the test suite: the fractional-derivative order fit, the
scalar mode reference for the wave stepper, and the manufactured
solution for the heat solve.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import backend
from .acoustics import Excitation, NewmarkParams, WesterveltStepper
from .bioheat import PennesStepper
from .errors import DomainError
from .fem import get_assembler, l2_norm
from .kernels import (L1WeightCache, MemoryKernel, caputo_l1_apply,
                      coercivity_probe, gamma_fn, mittag_leffler)
from .materials import constant_model
from .mesh import GAMMA_A, GAMMA_B, build_domain_mesh, build_rectangle_mesh
from .transport import (TransportBoundary, TransportStepper, VelocityModel,
                        boundary_integral, mass_integral)

EXACT_ORDER = math.inf


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def __str__(self):
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: " \
               f"{self.detail}"


@dataclass
class ConvergenceReport:
    label: str
    steps: list
    errors: list
    order: float

    def __str__(self):
        pts = ", ".join(f"{s:g}:{e:.3e}" for s, e in
                        zip(self.steps, self.errors))
        return f"{self.label}: order {self.order:.3f} [{pts}]"


def fit_order(steps, errors, floor=1e-12):
    """Least-squares slope of log error against log step size.

    Errors at or below the rounding floor mean the rule is exact for
    this input; that reports an infinite order rather than a noise fit.
    """
    steps = np.asarray(steps, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if steps.shape != errors.shape or steps.size < 2:
        raise DomainError("fit_order needs matching arrays of >= 2 runs")
    if np.all(errors <= floor):
        return EXACT_ORDER
    mask = errors > floor
    if mask.sum() < 2:
        return EXACT_ORDER
    slope, _ = np.polyfit(np.log(steps[mask]), np.log(errors[mask]), 1)
    return float(slope)


def caputo_convergence(alpha=0.8, power=2, resolutions=(16, 32, 64, 128,
                                                        256)):
    """L1-rule error for u(t) = t^power at t = 1 across resolutions.

    The exact Caputo derivative is Gamma(m+1) / Gamma(m+1-alpha)
    * t^(m-alpha).  For power = 1 the rule is exact and the fitted
    order is reported as infinite.
    """
    m = int(power)
    exact = gamma_fn(m + 1.0) / gamma_fn(m + 1.0 - alpha)
    errs = []
    taus = []
    for n in resolutions:
        tau = 1.0 / n
        t = np.linspace(0.0, 1.0, n + 1)
        deriv = m * t ** (m - 1)
        err = abs(caputo_l1_apply(deriv, alpha, tau) - exact)
        errs.append(err / abs(exact))
        taus.append(tau)
    order = fit_order(taus, errs)
    return ConvergenceReport(label=f"caputo t^{m} alpha={alpha:g}",
                             steps=taus, errors=errs, order=order)


def scalar_mode(qlam, blam, alpha, tau, nsteps, y0, y1, *, beta=0.45,
                gamma=0.85, damping=True, forcing=None):
    """Newmark + L1 recursion for y'' + qlam y + blam D_t^alpha y' = f."""
    z0 = L1WeightCache(alpha).zeta0
    powers = np.arange(nsteps + 2, dtype=np.float64) ** (1.0 - alpha)
    if forcing is None:
        farr = np.zeros(nsteps + 1)
    else:
        farr = np.asarray([forcing(k * tau) for k in range(nsteps + 1)],
                          dtype=np.float64)
    att0 = farr[0] - qlam * y0
    return backend.volterra_mode(qlam, blam, tau, nsteps, beta, gamma,
                                 alpha, z0, powers, farr, y0, y1, att0,
                                 damping)


def undamped_mode_error(qlam=400.0, tau=1e-3, nsteps=400):
    """Conservative Newmark (beta 1/4, gamma 1/2) against the cosine."""
    y, _, _ = scalar_mode(qlam, 0.0, 0.5, tau, nsteps, 1.0, 0.0,
                          beta=0.25, gamma=0.5, damping=False)
    t = tau * np.arange(nsteps + 1)
    exact = np.cos(math.sqrt(qlam) * t)
    return float(np.max(np.abs(y - exact)))


def undamped_mode_order(qlam=400.0, taus=(4e-3, 2e-3, 1e-3), T=0.4):
    errs = []
    for tau in taus:
        n = int(round(T / tau))
        y, _, _ = scalar_mode(qlam, 0.0, 0.5, tau, n, 1.0, 0.0,
                              beta=0.25, gamma=0.5, damping=False)
        errs.append(abs(y[-1] - math.cos(math.sqrt(qlam) * n * tau)))
    order = fit_order(taus, errs)
    return ConvergenceReport(label="undamped cosine", steps=list(taus),
                             errors=errs, order=order)


def damped_mode_self_convergence(qlam=400.0, blam=6.0, alpha=0.8,
                                 T=0.4, base=80, refinements=(1, 2, 4, 8)):
    """Self-convergence of the damped recursion under step halving,
    measured against the finest run at shared time points."""
    finest = refinements[-1] * 2
    nref = base * finest
    yref, _, _ = scalar_mode(qlam, blam, alpha, T / nref, nref, 1.0, 0.0)
    errs = []
    taus = []
    for r in refinements:
        n = base * r
        y, _, _ = scalar_mode(qlam, blam, alpha, T / n, n, 1.0, 0.0)
        stride = nref // n
        errs.append(float(np.max(np.abs(y - yref[::stride]))))
        taus.append(T / n)
    order = fit_order(taus, errs)
    return ConvergenceReport(label=f"damped mode alpha={alpha:g}",
                             steps=taus, errors=errs, order=order)


def fem_mode_check(alpha=0.8, tau=2e-3, nsteps=100, refine=64, *,
                   nx=5, ny=5, q0=2.0, b0=0.5, amplitude=3.0,
                   solver_tol=1e-14):
    """Wave stepper on a discrete Laplacian eigenmode against the scalar
    recursion run on a ``refine`` times finer step.

    The FEM evolution of an exact generalized eigenvector reduces to the
    one-dof recursion, so the comparison isolates the temporal error of
    the Newmark + L1 scheme; the refined recursion stands in for the
    exact mode trajectory.  Returns (rel_linf_error, coarse_error)
    where coarse_error compares against the recursion at the same step
    (agreement there is an exactness check, not a convergence one).
    """
    import scipy.linalg

    m = build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, nx, ny)
    asm = get_assembler(m)
    nv = m.num_vertices
    ones = np.ones(nv)
    md = asm.mass().toarray()
    kd = asm.weighted_stiffness(ones).toarray()
    w, v = scipy.linalg.eigh(kd, md)
    pos = w[w > 1e-8]
    lam = float(pos[len(pos) // 4])
    phi = v[:, int(np.nonzero(w == lam)[0][0])]
    phi = phi / math.sqrt(phi @ md @ phi)

    model = constant_model(q=q0, b=b0, k=0.0, omega_b=0.0)
    quiet = Excitation(g0=0.0, omega=1.0)
    stepper = WesterveltStepper(m, model, quiet, tau, alpha=alpha,
                                kernel="abel", coupling="linear",
                                boundary_tag="top", steps_hint=nsteps,
                                solver_tol=solver_tol)
    stepper.set_initial(p0=amplitude * phi)
    coef = np.empty(nsteps + 1)
    coef[0] = phi @ md @ stepper.state.p
    for k in range(nsteps):
        coef[k + 1] = phi @ md @ stepper.step().p

    ysame, _, _ = scalar_mode(q0 * lam, b0 * lam, alpha, tau, nsteps,
                              amplitude, 0.0)
    coarse_err = float(np.max(np.abs(coef - ysame))
                       / np.max(np.abs(ysame)))
    yref, _, _ = scalar_mode(q0 * lam, b0 * lam, alpha, tau / refine,
                             nsteps * refine, amplitude, 0.0)
    ref = yref[::refine]
    rel = float(np.max(np.abs(coef - ref)) / np.max(np.abs(ref)))
    return rel, coarse_err


def manufactured_heat_spatial(levels=(8, 16, 32), tau=2e-3, T=0.1,
                              kappa=1e-3, omega0=1.5):
    """Spatial convergence of the heat solve on a manufactured field.

    theta*(x, t) = exp(-t) cos(pi (x1 + 0.04) / 0.08) cos(pi x2 / 0.12)
    satisfies homogeneous Neumann conditions; the matching source is
    (kappa lam + nu omega0 - 1) theta* evaluated at the step start (the
    same time level the solver freezes its own source at).
    """
    lx, ly = 0.08, 0.12
    lam = (math.pi / lx) ** 2 + (math.pi / ly) ** 2
    model = constant_model(q=1.0, b=0.0, k=0.0, omega_b=omega0,
                           rho_a=1.0, C_a=1.0, rho_b=1.0, C_b=1.0,
                           kappa_a=kappa, theta_a=0.0)

    def exact(pts, t):
        return math.exp(-t) * np.cos(math.pi * (pts[:, 0] + 0.04) / lx) \
            * np.cos(math.pi * pts[:, 1] / ly)

    def run(nx, ny, tau_run):
        m = build_rectangle_mesh(-0.04, 0.04, 0.0, ly, nx, ny)
        hs = PennesStepper(
            m, model, tau_run, solver_tol=1e-13,
            f_theta=lambda pts, t: (kappa * lam + omega0 - 1.0)
            * exact(pts, t))
        hs.set_initial(exact(m.vertices, 0.0))
        n = int(round(T / tau_run))
        for _ in range(n):
            st = hs.step(np.zeros(m.num_vertices))
        diff = st.theta - exact(m.vertices, st.t)
        return l2_norm(m, diff) / l2_norm(m, exact(m.vertices, st.t))

    hs_ = []
    errs = []
    for n in levels:
        hs_.append(lx / n)
        errs.append(run(n, int(round(n * ly / lx)), tau))
    # tau must stay small against the coarsest spatial error so the
    # shared first-order temporal bias does not pollute the fit
    order = fit_order(hs_, errs)
    return ConvergenceReport(label="heat manufactured spatial",
                             steps=hs_, errors=errs, order=order)


def manufactured_heat_temporal(taus=(2e-2, 1e-2, 5e-3), T=0.2, nx=48,
                               kappa=1e-4, omega0=1.5):
    """Temporal convergence on the same manufactured field; the small
    diffusivity keeps the spatial error subordinate."""
    lx, ly = 0.08, 0.12
    lam = (math.pi / lx) ** 2 + (math.pi / ly) ** 2
    model = constant_model(q=1.0, b=0.0, k=0.0, omega_b=omega0,
                           rho_a=1.0, C_a=1.0, rho_b=1.0, C_b=1.0,
                           kappa_a=kappa, theta_a=0.0)

    def exact(pts, t):
        return math.exp(-t) * np.cos(math.pi * (pts[:, 0] + 0.04) / lx) \
            * np.cos(math.pi * pts[:, 1] / ly)

    m = build_rectangle_mesh(-0.04, 0.04, 0.0, ly, nx,
                             int(round(nx * ly / lx)))
    ref = exact(m.vertices, T)
    errs = []
    for tau in taus:
        hs = PennesStepper(
            m, model, tau, solver_tol=1e-13,
            f_theta=lambda pts, t: (kappa * lam + omega0 - 1.0)
            * exact(pts, t))
        hs.set_initial(exact(m.vertices, 0.0))
        for _ in range(int(round(T / tau))):
            st = hs.step(np.zeros(m.num_vertices))
        errs.append(l2_norm(m, st.theta - ref) / l2_norm(m, ref))
    order = fit_order(taus, errs)
    return ConvergenceReport(label="heat manufactured temporal",
                             steps=list(taus), errors=errs, order=order)


def transport_budget_deficit(target=0.006, nsteps=40, tau=1e-6, *,
                             inflow=0.01, outflow=100.0, seed=3):
    """Largest relative violation of the discrete mass budget."""
    m = build_domain_mesh(target)
    rng = np.random.default_rng(seed)
    p_fake = 1e5 * rng.standard_normal(m.num_vertices)
    ts = TransportStepper(
        m, tau, VelocityModel(v0=(0.0, 10.0), k_d=1e-6, d0=5.0),
        TransportBoundary(inflow=inflow, outflow=outflow),
        solver_tol=1e-13)
    ts.set_initial(1e-4)
    lb = get_assembler(m).boundary_length(GAMMA_B)
    worst = 0.0
    prev = mass_integral(m, ts.state.c)
    for _ in range(nsteps):
        st = ts.step(p_fake)
        cur = mass_integral(m, st.c)
        out = boundary_integral(m, st.c, GAMMA_A)
        lhs = cur - prev
        rhs = tau * (inflow * lb - outflow * out)
        worst = max(worst, abs(lhs - rhs) / (abs(lhs) + abs(rhs)))
        prev = cur
    return worst


def _check(name, ok, detail):
    return CheckResult(name=name, ok=bool(ok), detail=detail)


def suite_kernels():
    checks = []
    for alpha in (0.3, 0.8):
        cache = L1WeightCache(alpha)
        w = cache.weights(1000)
        tot = w.sum() * gamma_fn(2.0 - alpha)
        expect = 1001.0 ** (1.0 - alpha)
        rel = abs(tot - expect) / expect
        checks.append(_check(
            f"l1 telescoping alpha={alpha:g}", rel < 1e-12,
            f"relative defect {rel:.2e}"))
        inner = w[1:-1]
        checks.append(_check(
            f"l1 monotonicity alpha={alpha:g}",
            np.all(w > 0.0) and np.all(np.diff(inner) < 0.0),
            f"min weight {w.min():.3e}"))
    rep1 = caputo_convergence(alpha=0.8, power=1)
    checks.append(_check("caputo exact on t^1",
                         rep1.order == EXACT_ORDER,
                         str(rep1)))
    for alpha in (0.5, 0.8):
        rep = caputo_convergence(alpha=alpha, power=2)
        bar = 2.0 - alpha - 0.15
        checks.append(_check(
            f"caputo order t^2 alpha={alpha:g}", rep.order >= bar,
            f"{rep} (needs >= {bar:g})"))
    pairs = [
        ("E_{1,1}(1) = e", mittag_leffler(1.0, 1.0, 1.0), math.e),
        ("E_{1,1}(-1) = 1/e", mittag_leffler(1.0, 1.0, -1.0),
         1.0 / math.e),
        ("E_{2,1}(-z^2) = cos z", mittag_leffler(2.0, 1.0,
                                                 -(math.pi / 3.0) ** 2),
         0.5),
        ("E_{1,2}(1) = e - 1", mittag_leffler(1.0, 2.0, 1.0),
         math.e - 1.0),
    ]
    for label, got, expect in pairs:
        err = abs(got - expect) / abs(expect)
        checks.append(_check(f"mittag-leffler {label}", err < 1e-10,
                             f"relative error {err:.2e}"))
    rng = np.random.default_rng(11)
    kern = MemoryKernel.abel(0.8)
    worst = math.inf
    for _ in range(20):
        y = rng.standard_normal(64)
        lhs, _ = coercivity_probe(kern, y, 1e-2)
        worst = min(worst, lhs)
    checks.append(_check("abel kernel nonnegative quadratic form",
                         worst >= -1e-10,
                         f"min quadratic form {worst:.3e}"))
    return checks


def suite_fem():
    from .fem import SolveOptions, solve_sparse

    checks = []
    m = build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, 1, 1)
    asm = get_assembler(m)
    ones = np.ones(m.num_vertices)
    md = asm.weighted_mass(ones).toarray()
    total = float(md.sum())
    checks.append(_check("unit-square mass total", abs(total - 1.0)
                         < 1e-14, f"sum M = {total:.17g}"))
    m2 = build_rectangle_mesh(-1.0, 1.0, 0.0, 1.0, 7, 5)
    asm2 = get_assembler(m2)
    k = asm2.weighted_stiffness(np.ones(m2.num_vertices))
    lin = 2.0 * m2.vertices[:, 0] - 3.0 * m2.vertices[:, 1] + 0.5
    r = k.matvec(lin)
    boundary = np.unique(np.concatenate([m2.boundary_edges(t)
                                         for t in m2.tag_names]))
    interior = np.setdiff1d(np.arange(m2.num_vertices), boundary)
    resid = float(np.max(np.abs(r[interior])))
    checks.append(_check("stiffness annihilates linears", resid <= 1e-12,
                         f"max interior residual {resid:.2e}"))
    rng = np.random.default_rng(5)
    a = asm2.weighted_mass(1.0 + rng.random(m2.num_vertices))
    x = rng.standard_normal(m2.num_vertices)
    b = a.matvec(x)
    sol, info = solve_sparse(a, b, SolveOptions(tol=1e-12))
    err = float(np.max(np.abs(sol - x)) / np.max(np.abs(x)))
    checks.append(_check("cg solve recovers field", err < 1e-8,
                         f"rel error {err:.2e} ({info.method}, "
                         f"{info.iterations} its)"))
    vel = np.tile([1.0, -2.0], (m2.num_triangles, 1))
    conv = asm2.convection(vel)
    colsum = float(np.max(np.abs(ones_t(conv))))
    checks.append(_check("convection columns sum to zero",
                         colsum < 1e-12, f"max |column sum| {colsum:.2e}"))
    return checks


def ones_t(mat):
    """Column sums (1^T A) of a SparseMatrix."""
    out = np.zeros(mat.n)
    np.add.at(out, mat.indices, mat.data)
    return out


def suite_steppers():
    checks = []
    rel, coarse = fem_mode_check(tau=5e-4, nsteps=160, refine=16)
    checks.append(_check("wave stepper matches mode recursion",
                         coarse < 1e-9,
                         f"same-step deviation {coarse:.2e}"))
    checks.append(_check("wave stepper near refined mode reference",
                         rel < 2e-3, f"rel Linf {rel:.2e}"))
    rep = undamped_mode_order()
    checks.append(_check("undamped cosine order about 2",
                         1.8 <= rep.order <= 2.2, str(rep)))
    repd = damped_mode_self_convergence()
    checks.append(_check("damped mode self-convergence order >= 1",
                         repd.order >= 1.0, str(repd)))
    reps = manufactured_heat_spatial(levels=(8, 16, 32), tau=1e-3)
    checks.append(_check("heat spatial order about 2",
                         1.8 <= reps.order <= 2.2, str(reps)))
    rept = manufactured_heat_temporal()
    checks.append(_check("heat temporal order about 1",
                         0.85 <= rept.order <= 1.15, str(rept)))
    deficit = transport_budget_deficit(nsteps=20)
    checks.append(_check("transport mass budget", deficit < 1e-8,
                         f"worst relative deficit {deficit:.2e}"))
    return checks


SUITES = {
    "kernels": suite_kernels,
    "fem": suite_fem,
    "steppers": suite_steppers,
}


def run_suite(name):
    if name == "all":
        out = []
        for key in ("kernels", "fem", "steppers"):
            out.extend(SUITES[key]())
        return out
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; choose from "
                          f"{('all',) + tuple(SUITES)}")
    return SUITES[name]()
