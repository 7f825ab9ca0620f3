import math

import numpy as np
import pytest
from scipy.optimize import brentq

from hifusim import materials
from hifusim.errors import DegeneracyError, DomainError
from hifusim.materials import (LIVER_SPEED_COEFFS, absorbed_energy,
                               constant_model, custom_model,
                               eval_coefficient_fields, gaussian_omega_b,
                               liver_model, polynomial_omega_b, sound_speed)


# --- sound speed fit ----------------------------------------------------------

def test_sound_speed_matches_polyval():
    grid = np.linspace(10.0, 120.0, 23)
    ref = np.polyval(LIVER_SPEED_COEFFS[::-1], grid)
    assert np.allclose(sound_speed(grid), ref, rtol=1e-14)


def test_sound_speed_at_body_temperature():
    c37 = float(sound_speed(37.0))
    # direct power-sum evaluation as an independent check
    ref = sum(c * 37.0 ** i for i, c in enumerate(LIVER_SPEED_COEFFS))
    assert c37 == pytest.approx(ref, rel=1e-14)
    assert 1570.0 < c37 < 1610.0


def test_sound_speed_accepts_custom_coefficients():
    assert float(sound_speed(5.0, (2.0, 3.0))) == pytest.approx(17.0)


# --- liver model ----------------------------------------------------------------

def test_liver_ambient_values(liver):
    c = float(sound_speed(37.0))
    omega = 2.0 * math.pi * 1e5
    alpha0 = 4.5e-6 * 1e5
    assert liver.ambient_q() == pytest.approx(c * c, rel=1e-14)
    assert liver.ambient_b() == pytest.approx(
        2.0 * alpha0 / omega ** 2 * c ** 3, rel=1e-14)
    assert liver.ambient_k() == pytest.approx(
        6.0 / (1050.0 * c * c), rel=1e-14)
    assert float(liver.omega_b_of(np.float64(37.0))) == pytest.approx(
        4.2e-3, rel=1e-14)


def test_liver_scalar_constants(liver):
    assert liver.rho_a == 1050.0
    assert liver.C_a == 3600.0
    assert liver.rho_b == 1030.0
    assert liver.C_b == 3620.0
    assert liver.kappa_a == 0.512
    assert liver.theta_a == 37.0
    assert liver.zeta == 2.0
    assert liver.kappa == pytest.approx(0.512 / (1050.0 * 3600.0),
                                        rel=1e-15)
    assert liver.nu == pytest.approx(1030.0 * 3620.0 / (1050.0 * 3600.0),
                                     rel=1e-15)


def test_liver_rejects_bad_frequency():
    with pytest.raises(DomainError):
        liver_model(0.0)
    with pytest.raises(DomainError):
        liver_model(-1e5)


# --- perfusion laws -------------------------------------------------------------

def test_polynomial_omega_b():
    law = polynomial_omega_b((1.0, 2.0, 0.5))
    assert float(law(3.0)) == pytest.approx(1.0 + 6.0 + 4.5, rel=1e-15)
    with pytest.raises(DomainError):
        polynomial_omega_b(())


def test_gaussian_omega_b_clips():
    law = gaussian_omega_b(0.1, 1.0, 0.5, 45.0, 36.0, 50.0)
    inside = float(law(45.0))
    assert inside == pytest.approx(1.1, rel=1e-14)
    # outside the window the argument is clamped to the nearer endpoint
    assert float(law(60.0)) == float(law(50.0))
    assert float(law(-10.0)) == float(law(36.0))
    with pytest.raises(DomainError):
        gaussian_omega_b(0.1, 1.0, 0.5, 45.0, 50.0, 36.0)


# --- constant / custom models -----------------------------------------------------

def test_constant_model_fields():
    m = constant_model(q=2.0, b=0.5, k=0.1, omega_b=0.3)
    theta = np.array([0.0, 10.0, -5.0])
    cf = eval_coefficient_fields(m, theta)
    assert np.allclose(cf.q, 2.0)
    assert np.allclose(cf.b, 0.5)
    assert np.allclose(cf.k, 0.1)
    assert np.allclose(cf.omega_b, 0.3)
    with pytest.raises(DomainError):
        constant_model(q=0.0, b=0.5)


def test_custom_model_matches_liver():
    m = custom_model(LIVER_SPEED_COEFFS, 1e5)
    ref = liver_model(1e5)
    assert m.ambient_q() == pytest.approx(ref.ambient_q(), rel=1e-15)
    assert m.ambient_b() == pytest.approx(ref.ambient_b(), rel=1e-15)
    assert m.ambient_k() == pytest.approx(ref.ambient_k(), rel=1e-15)
    with pytest.raises(DomainError):
        custom_model((), 1e5)
    with pytest.raises(DomainError):
        custom_model(LIVER_SPEED_COEFFS, -1.0)


def test_custom_model_constant_overrides():
    m = custom_model(LIVER_SPEED_COEFFS, 1e5, rho_a=1000.0, zeta=1.0)
    assert m.rho_a == 1000.0
    assert m.zeta == 1.0
    assert m.ambient_k() == pytest.approx(
        6.0 / (1000.0 * m.ambient_q()), rel=1e-14)


# --- coefficient evaluation -------------------------------------------------------

def test_eval_fields_shapes_and_values(liver):
    theta = np.array([0.0, 20.0, 50.0])
    cf = eval_coefficient_fields(liver, theta)
    cs = sound_speed(theta + 37.0)
    assert np.allclose(cf.q, cs ** 2, rtol=1e-14)
    assert np.allclose(cf.omega_b, 1e-4 * (5.0 + theta + 37.0),
                       rtol=1e-14)


def test_degeneracy_at_fit_zero_crossing(liver):
    # the quintic speed fit crosses zero somewhere above 150 C absolute;
    # any nodal temperature beyond that point must be rejected loudly
    root = brentq(lambda s: float(sound_speed(s)), 150.0, 250.0)
    assert 150.0 < root < 250.0
    theta_bad = np.array([0.0, root - 37.0 + 1.0])
    with pytest.raises(DegeneracyError):
        eval_coefficient_fields(liver, theta_bad)
    # just below the crossing both q and b stay positive
    ok = eval_coefficient_fields(liver, np.array([root - 37.0 - 1.0]))
    assert (ok.q > 0.0).all() and (ok.b > 0.0).all()


def test_degeneracy_exempts_zero_ambient_damping():
    m = constant_model(q=1.0, b=0.0)
    cf = eval_coefficient_fields(m, np.zeros(4))
    assert np.allclose(cf.b, 0.0)


# --- heating source ------------------------------------------------------------

def test_absorbed_energy_arithmetic(liver):
    p_t = np.array([0.0, 1e6, -2e6])
    g = absorbed_energy(liver, p_t, np.zeros(3))
    q = liver.ambient_q()
    b = liver.ambient_b()
    ref = 2.0 / (1050.0 * 3600.0) * b / q ** 2 * p_t ** 2
    assert np.allclose(g, ref, rtol=1e-14)
    assert (g >= 0.0).all()


def test_absorbed_energy_scales_quadratically(liver):
    theta = np.zeros(2)
    g1 = absorbed_energy(liver, np.array([1e5, 2e5]), theta)
    g2 = absorbed_energy(liver, np.array([2e5, 4e5]), theta)
    assert np.allclose(g2, 4.0 * g1, rtol=1e-14)
