import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sph_harm_y
from sympy.physics.wigner import wigner_3j as sympy_3j

from oracles import racah_3j
from rte_kernel_lab.errors import ParameterError, RangeError
from rte_kernel_lab.special import (gegenbauer_table, gegenbauer_values, legendre, legendre_all,
                                    mu_constant, product_expansion, spherical_harmonic, wigner3j,
                                    yn0_limit, yn0_weighted_integral)


def random_directions(k, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((k, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return np.arccos(v[:, 2]), np.arctan2(v[:, 1], v[:, 0]), v


# -- Legendre --------------------------------------------------------------------

def test_legendre_examples():
    assert legendre(1, 0.3) == pytest.approx(0.3)
    for n in range(30):
        assert legendre(n, 1.0) == pytest.approx(1.0, abs=1e-13)


def test_legendre_matches_numpy_polynomial():
    z = np.array([0.3 + 0.4j, -0.7j, 0.9, -1.0])
    for n in range(12):
        ref = np.polynomial.legendre.legval(z, [0] * n + [1])
        np.testing.assert_allclose(legendre(n, z), ref, rtol=1e-12, atol=1e-13)


def test_legendre_circle_sup_at_i():
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 10_000, endpoint=False))
    for n in range(21):
        at_i = abs(complex(legendre(n, 1j)))
        assert at_i <= 3.0 ** n
        assert np.max(np.abs(legendre(n, z))) <= at_i * (1 + 1e-12)


@given(st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_legendre_recurrence_residual(rad, ang):
    z = rad * np.exp(1j * ang)
    P = legendre_all(65, z)
    scale = np.max(np.abs(P))
    for n in range(1, 65):
        res = (n + 1) * P[n + 1] - (2 * n + 1) * z * P[n] + n * P[n - 1]
        assert abs(res) <= 1e-10 * scale


def test_legendre_negative_degree():
    with pytest.raises(ParameterError):
        legendre(-1, 0.0)


# -- Gegenbauer ---------------------------------------------------------------------

def test_gegenbauer_examples():
    t = gegenbauer_table(0.5, 1)
    np.testing.assert_array_equal(t.coeffs[1, :2], [0.0, 1.0])
    assert gegenbauer_table(2.0, 3).value_at_one(3) == pytest.approx(20.0)


def test_gegenbauer_generating_function():
    w, t = 1.0, 0.3
    vals = gegenbauer_values(1.0, 40, math.cos(w))
    lhs = float(np.sum(vals * t ** np.arange(41)))
    assert lhs == pytest.approx((1 - 2 * t * math.cos(w) + t * t) ** -1, abs=1e-10)


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5, 4.0])
def test_gegenbauer_table_structure(lam):
    tab = gegenbauer_table(lam, 12)
    assert tab.coeffs[0, 0] == 1.0
    x = np.linspace(-1, 1, 7)
    rec = gegenbauer_values(lam, 12, x)
    for s in range(13):
        row = tab.coeffs[s]
        assert np.all(row[s + 1:] == 0)
        assert np.all(row[(s + 1) % 2::2] == 0)        # parity
        np.testing.assert_allclose(tab.horner(s, x), rec[s], rtol=1e-11, atol=1e-11)
        assert tab.horner(s, 1.0) == pytest.approx(tab.value_at_one(s), rel=1e-12)


def test_gegenbauer_fourier_coefficients():
    tab = gegenbauer_table(1.5, 6)
    w = 0.7
    for s in range(7):
        a = tab.fourier_coefficients(s)
        val = sum(float(c) * np.exp(1j * f * w) for f, c in a.items())
        assert val == pytest.approx(tab.values(math.cos(w))[s], abs=1e-12)


def test_gegenbauer_overflow_is_reported():
    with pytest.raises(RangeError):
        gegenbauer_table(2000.0, 250)


# -- spherical harmonics ------------------------------------------------------------

def test_y00_unit():
    th, ph, _ = random_directions(10, 0)
    np.testing.assert_allclose(spherical_harmonic(0, 0, th, ph), 1.0)


@pytest.mark.parametrize("n", range(0, 8))
def test_standard_harmonics_match_scipy(n):
    th, ph, _ = random_directions(25, n)
    for m in range(-n, n + 1):
        np.testing.assert_allclose(spherical_harmonic(n, m, th, ph, "standard"),
                                   sph_harm_y(n, m, th, ph), rtol=1e-11, atol=1e-12)


def test_yn0_is_scaled_legendre():
    th = np.linspace(0, np.pi, 11)
    for n in range(6):
        np.testing.assert_allclose(spherical_harmonic(n, 0, th, 0.0),
                                   math.sqrt(2 * n + 1) * legendre(n, np.cos(th)), atol=1e-12)


def test_unit_normalisation_integrates_to_one():
    x, w = np.polynomial.legendre.leggauss(40)
    th = np.arccos(x)
    ph = 2 * np.pi * np.arange(64) / 64
    T, P = np.meshgrid(th, ph, indexing="ij")
    for n, m in [(0, 0), (2, 1), (5, -3), (7, 7)]:
        y = spherical_harmonic(n, m, T, P)
        val = np.sum(w[:, None] * np.abs(y) ** 2) / 64 / 2      # dv = dOmega / 4pi
        assert val == pytest.approx(1.0, abs=1e-12)


def test_addition_theorem_n1_unit():
    _, _, v = random_directions(2, 7)
    (t1, t2), (p1, p2) = np.arccos(v[:, 2]), np.arctan2(v[:, 1], v[:, 0])
    s = sum(spherical_harmonic(1, m, t1, p1) * np.conj(spherical_harmonic(1, m, t2, p2))
            for m in (-1, 0, 1))
    assert s == pytest.approx(3 * float(v[0] @ v[1]), abs=1e-12)


def test_addition_theorem_standard():
    th1, ph1, v1 = random_directions(100, 1)
    th2, ph2, v2 = random_directions(100, 2)
    cos = np.sum(v1 * v2, axis=1)
    for n in range(11):
        acc = sum(spherical_harmonic(n, m, th1, ph1, "standard")
                  * np.conj(spherical_harmonic(n, m, th2, ph2, "standard")) for m in range(-n, n + 1))
        np.testing.assert_allclose(4 * np.pi / (2 * n + 1) * acc, legendre(n, cos), atol=1e-9)


def test_ynn_profile():
    th = np.linspace(0.2, 2.9, 9)
    ratio = np.abs(spherical_harmonic(3, 3, th, 0.4)) / np.sin(th) ** 3
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_harmonic_rejects_bad_order():
    with pytest.raises(ParameterError):
        spherical_harmonic(2, 3, 0.1, 0.1)


# -- 3j and mu ----------------------------------------------------------------------

def test_3j_examples():
    assert wigner3j(0, 0, 0, 0, 0, 0) == 1.0
    assert wigner3j(1, 1, 0, 0, 0, 0) == pytest.approx(-1 / math.sqrt(3), abs=1e-15)
    s = sum(3 * wigner3j(2, 2, 1, m1, m2, 0) ** 2 for m1 in range(-2, 3) for m2 in range(-2, 3))
    assert s == pytest.approx(1.0, abs=1e-14)


def test_3j_against_bruteforce_racah():
    worst = 0.0
    for j1, j2 in itertools.product(range(7), repeat=2):
        for j3 in range(abs(j1 - j2), j1 + j2 + 1):
            for m1 in range(-j1, j1 + 1):
                for m2 in range(-j2, j2 + 1):
                    m3 = -m1 - m2
                    worst = max(worst, abs(wigner3j(j1, j2, j3, m1, m2, m3) - racah_3j(j1, j2, j3, m1, m2, m3)))
    assert worst <= 1e-12


@pytest.mark.parametrize("args", [(3, 4, 5, 1, -2, 1), (10, 10, 10, 0, 0, 0), (6, 9, 4, -3, 2, 1),
                                  (10, 7, 8, 5, -5, 0)])
def test_3j_against_sympy(args):
    assert wigner3j(*args) == pytest.approx(float(sympy_3j(*args)), abs=1e-12)


def test_3j_selection_rules():
    assert wigner3j(1, 1, 1, 1, 0, 0) == 0.0      # m sum
    assert wigner3j(1, 1, 3, 0, 0, 0) == 0.0      # triangle
    assert wigner3j(1, 1, 1, 2, -1, -1) == 0.0    # |m| > j
    assert wigner3j(1, 1, 1, 0, 0, 0) == 0.0      # odd j sum at m = 0


def test_3j_column_symmetries_exhaustive():
    for j1, j2 in itertools.product(range(6), repeat=2):
        for j3 in range(abs(j1 - j2), min(j1 + j2, 5) + 1):
            sgn = (-1) ** (j1 + j2 + j3)
            for m1 in range(-j1, j1 + 1):
                for m2 in range(-j2, j2 + 1):
                    m3 = -m1 - m2
                    if abs(m3) > j3:
                        continue
                    v = wigner3j(j1, j2, j3, m1, m2, m3)
                    assert wigner3j(j2, j3, j1, m2, m3, m1) == pytest.approx(v, abs=1e-14)
                    assert wigner3j(j3, j1, j2, m3, m1, m2) == pytest.approx(v, abs=1e-14)
                    assert wigner3j(j2, j1, j3, m2, m1, m3) == pytest.approx(sgn * v, abs=1e-14)
                    assert wigner3j(j1, j2, j3, -m1, -m2, -m3) == pytest.approx(sgn * v, abs=1e-14)


def test_mu_examples():
    assert mu_constant(0, 0, 0, 0, 0, 0) == pytest.approx(math.sqrt(1 / (4 * math.pi)))
    assert mu_constant(1, 0, 1, 0, 1, 0) == 0.0


@pytest.mark.parametrize("n,m,k,l", [(1, 0, 1, 0), (2, 1, 1, -1), (3, -2, 2, 1)])
def test_product_expansion_reconstructs(n, m, k, l):
    th, ph, _ = random_directions(20, 11)
    direct = spherical_harmonic(n, m, th, ph, "standard") * np.conj(spherical_harmonic(k, l, th, ph, "standard"))
    recon = sum(mu * spherical_harmonic(r, s, th, ph, "standard")
                for (r, s), mu in product_expansion(n, m, k, l).items())
    np.testing.assert_allclose(recon, direct, atol=1e-10)


# -- large-n limit ---------------------------------------------------------------------

def test_yn0_integral_examples():
    for n in (0, 3, 20):
        assert yn0_weighted_integral(lambda t, p: np.ones_like(t), n) == pytest.approx(1.0, abs=1e-12)
        assert yn0_weighted_integral(lambda t, p: np.cos(t), n) == pytest.approx(0.0, abs=1e-12)


def test_yn0_limit_theta():
    lim = yn0_limit(lambda t, p: t)
    assert lim == pytest.approx(math.pi / 2, rel=1e-10)
    v = yn0_weighted_integral(lambda t, p: t, 200)
    assert abs(v - lim) <= 0.05 * lim


def test_yn0_limit_asymmetric_weight():
    # theta^2 is not symmetric about pi/2, so the approach to the limit is visible
    f = lambda t, p: t ** 2
    lim = yn0_limit(f)
    assert lim == pytest.approx(math.pi ** 2 / 3, rel=1e-12)
    errs = [abs(yn0_weighted_integral(f, n) - lim) for n in (10, 50, 200)]
    assert errs[0] > errs[1] > errs[2] and errs[2] / lim <= 0.05
