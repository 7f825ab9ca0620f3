"""Tissue material laws and temperature-dependent PDE coefficients.

Temperatures are handled in two conventions: material laws take the
absolute temperature Theta in degrees Celsius, while simulation fields
store the rise theta = Theta - theta_a relative to the ambient value.

The liver model uses a quintic fit of the sound speed c(Theta) in m/s;
derived coefficients are

    q(Theta) = c(Theta)^2                    wave speed squared,
    b(Theta) = (2 alpha0 / omega^2) c^3      fractional damping strength,
    k(Theta) = beta_acou / (rho_a q(Theta))  quadratic nonlinearity,
    omega_b(Theta) = 1e-4 (5 + Theta)        blood perfusion rate,

with alpha0 = 4.5e-6 * frequency (absorption) and omega = 2 pi frequency.
b is implemented as the signed cube of c, which coincides with q^(3/2)
everywhere the fit is meaningful (c > 0; the fit crosses zero near
191 degrees Celsius) and lets the degeneracy monitor catch runs that leave
the validity region instead of silently continuing with nonphysical
damping.

The heating source of the bioheat equation is

    G(p_t, Theta) = zeta / (rho_a C_a) * b(Theta)/q(Theta)^2 * p_t^2 >= 0.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import DegeneracyError, DomainError

LIVER_SPEED_COEFFS = (1529.3, 1.6856, 6.1131e-2, -2.2967e-3, 2.2657e-5,
                      -7.1795e-8)

DEGENERACY_REL = 1e-12


@dataclass(frozen=True)
class MaterialModel:
    """Bundle of material laws and scalar constants.

    The callables map absolute temperature (any array shape) to
    coefficient values.
    """

    name: str
    q_of: object
    b_of: object
    k_of: object
    omega_b_of: object
    rho_a: float = 1050.0       # tissue density [kg/m^3]
    C_a: float = 3600.0         # tissue specific heat [J/(kg K)]
    rho_b: float = 1030.0       # blood density
    C_b: float = 3620.0         # blood specific heat
    kappa_a: float = 0.512      # thermal conductivity [W/(m K)]
    theta_a: float = 37.0       # ambient temperature [deg C]
    zeta: float = 2.0           # absorbed-energy scaling

    @property
    def kappa(self):
        """Thermal diffusivity kappa_a / (rho_a C_a)."""
        return self.kappa_a / (self.rho_a * self.C_a)

    @property
    def nu(self):
        """Perfusion prefactor rho_b C_b / (rho_a C_a)."""
        return self.rho_b * self.C_b / (self.rho_a * self.C_a)

    def ambient_q(self):
        return float(self.q_of(np.float64(self.theta_a)))

    def ambient_b(self):
        return float(self.b_of(np.float64(self.theta_a)))

    def ambient_k(self):
        return float(self.k_of(np.float64(self.theta_a)))


def sound_speed(theta_abs, coeffs=LIVER_SPEED_COEFFS):
    """Polynomial sound-speed fit, absolute temperature in, m/s out."""
    theta_abs = np.asarray(theta_abs, dtype=np.float64)
    acc = np.zeros_like(theta_abs)
    for c in reversed(coeffs):
        acc = acc * theta_abs + c
    return acc


def polynomial_omega_b(coeffs):
    """Perfusion law sum_i coeffs[i] Theta^i of absolute temperature."""
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise DomainError("polynomial_omega_b needs at least one "
                          "coefficient")

    def law(theta_abs):
        theta_abs = np.asarray(theta_abs, dtype=np.float64)
        acc = np.zeros_like(theta_abs)
        for c in reversed(coeffs):
            acc = acc * theta_abs + c
        return acc

    return law


def gaussian_omega_b(a1, a2, a3, a4, lo, hi):
    """Perfusion law a1 + a2 exp(-a3 (s - a4)^2), held constant outside
    the absolute-temperature window [lo, hi]."""
    a1, a2, a3, a4 = (float(v) for v in (a1, a2, a3, a4))
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise DomainError("gaussian_omega_b needs hi > lo")

    def law(theta_abs):
        s = np.clip(np.asarray(theta_abs, dtype=np.float64), lo, hi)
        return a1 + a2 * np.exp(-a3 * (s - a4) ** 2)

    return law


def liver_model(frequency):
    """Liver tissue laws at the given excitation frequency (Hz)."""
    frequency = float(frequency)
    if not frequency > 0.0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    omega = 2.0 * math.pi * frequency
    alpha0 = 4.5e-6 * frequency
    beta_acou = 6.0
    rho_a = 1050.0

    def q_of(theta_abs):
        return sound_speed(theta_abs) ** 2

    def b_of(theta_abs):
        return (2.0 * alpha0 / omega ** 2) * sound_speed(theta_abs) ** 3

    def k_of(theta_abs):
        return beta_acou / (rho_a * q_of(theta_abs))

    return MaterialModel(
        name="liver",
        q_of=q_of,
        b_of=b_of,
        k_of=k_of,
        omega_b_of=polynomial_omega_b((5e-4, 1e-4)),
        rho_a=rho_a,
    )


def custom_model(speed_coeffs, frequency, beta_acou=6.0,
                 omega_b=None, **constants):
    """Material from a sound-speed polynomial (config-file path)."""
    coeffs = tuple(float(c) for c in speed_coeffs)
    if not coeffs:
        raise DomainError("custom_model needs sound-speed coefficients")
    frequency = float(frequency)
    if not frequency > 0.0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    omega = 2.0 * math.pi * frequency
    alpha0 = 4.5e-6 * frequency
    base = MaterialModel(name="custom", q_of=None, b_of=None, k_of=None,
                         omega_b_of=None, **constants)

    def q_of(theta_abs):
        return sound_speed(theta_abs, coeffs) ** 2

    def b_of(theta_abs):
        return (2.0 * alpha0 / omega ** 2) * sound_speed(theta_abs,
                                                         coeffs) ** 3

    def k_of(theta_abs):
        return float(beta_acou) / (base.rho_a * q_of(theta_abs))

    return MaterialModel(
        name="custom", q_of=q_of, b_of=b_of, k_of=k_of,
        omega_b_of=omega_b if omega_b is not None
        else polynomial_omega_b((5e-4, 1e-4)),
        **constants)


def constant_model(q, b, k=0.0, omega_b=0.0, **constants):
    """Temperature-independent material (verification runs)."""
    q, b, k, omega_b = (float(v) for v in (q, b, k, omega_b))
    if not q > 0.0:
        raise DomainError(f"constant_model needs q > 0, got {q}")

    def const(value):
        def law(theta_abs):
            return np.full_like(np.asarray(theta_abs, dtype=np.float64),
                                value)
        return law

    return MaterialModel(name="constant", q_of=const(q), b_of=const(b),
                         k_of=const(k), omega_b_of=const(omega_b),
                         **constants)


@dataclass(frozen=True)
class CoefficientFields:
    """Nodal coefficient fields evaluated at one temperature state."""

    q: np.ndarray
    b: np.ndarray
    k: np.ndarray
    omega_b: np.ndarray


def eval_coefficient_fields(model, theta):
    """Evaluate q, b, k, omega_b at the nodal temperature rise theta.

    Raises DegeneracyError when q or b drops to or below 1e-12 of its
    ambient value anywhere (b is exempt for models with zero ambient
    damping).
    """
    theta = np.asarray(theta, dtype=np.float64)
    theta_abs = theta + model.theta_a
    q = np.asarray(model.q_of(theta_abs), dtype=np.float64)
    b = np.asarray(model.b_of(theta_abs), dtype=np.float64)
    k = np.asarray(model.k_of(theta_abs), dtype=np.float64)
    wb = np.asarray(model.omega_b_of(theta_abs), dtype=np.float64)
    q_floor = DEGENERACY_REL * model.ambient_q()
    if np.any(q <= q_floor):
        raise DegeneracyError(
            f"wave speed degenerate: min q = {q.min():.6g} at "
            f"Theta = {theta_abs.ravel()[np.argmin(q)]:.6g} C")
    b_amb = model.ambient_b()
    if b_amb > 0.0 and np.any(b <= DEGENERACY_REL * b_amb):
        raise DegeneracyError(
            f"damping degenerate: min b = {b.min():.6g} at "
            f"Theta = {theta_abs.ravel()[np.argmin(b)]:.6g} C")
    return CoefficientFields(q=q, b=b, k=k, omega_b=wb)


def absorbed_energy(model, p_t, theta):
    """Heating source G = zeta/(rho_a C_a) * b/q^2 * p_t^2 (nonnegative)."""
    fields = eval_coefficient_fields(model, theta)
    p_t = np.asarray(p_t, dtype=np.float64)
    return model.zeta / (model.rho_a * model.C_a) \
        * fields.b / fields.q ** 2 * p_t ** 2
