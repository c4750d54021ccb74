import math

import numpy as np
import pytest

from rte_kernel_lab.errors import GeometryError, ParameterError, RangeError
from rte_kernel_lab.geometry import BoxDomain, constant_medium
from rte_kernel_lab.separability import bounding_box
from rte_kernel_lab.separable import (PHASE_TRUNCATION_C, calibrate_phase_constant, cos_power_approximation,
                                      cos_power_target, harmonic_target_3d, legendre_monomial_coefficients,
                                      measure_sup_error, phase_target_2d, sample_grid, separable_harmonic_3d,
                                      separable_kernel_taylor, separable_phase_2d, smooth_part)

X2, Y2 = BoxDomain((0.0, 0.0), (1.0, 1.0)), BoxDomain((3.0, 0.0), (4.0, 1.0))
X3, Y3 = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), BoxDomain((4.0, 0.0, 0.0), (5.0, 1.0, 1.0))


# -- 2D phase exp(-i n arg(x - y)) -------------------------------------------------

def test_phase_n0_is_one_term():
    a = separable_phase_2d(0, 1e-6, X2, Y2)
    assert a.term_count == 1
    assert measure_sup_error(a, phase_target_2d(0), sample_grid(X2, 5), sample_grid(Y2, 5)) == 0.0


def test_phase_n4_meets_eps_on_dense_sample():
    a = separable_phase_2d(4, 1e-6, X2, Y2)
    err = measure_sup_error(a, phase_target_2d(4), sample_grid(X2, 64), sample_grid(Y2, 64))
    assert err <= 1e-6
    assert err <= a.guaranteed_sup_error


@pytest.mark.parametrize("n", [1, 3, 8, 16])
@pytest.mark.parametrize("eps", [1e-3, 1e-8])
def test_phase_counts_and_bounds(n, eps):
    a = separable_phase_2d(n, eps, X2, Y2)
    N = a.params["N"]
    assert N <= a.params["N_bound"]
    assert a.term_count <= (2 * N + 1) ** 2
    assert a.guaranteed_sup_error <= eps
    err = measure_sup_error(a, phase_target_2d(n), sample_grid(X2, 12), sample_grid(Y2, 12))
    assert err <= a.guaranteed_sup_error


@pytest.mark.parametrize("n", [1, 4, 8])
def test_phase_degree_grows_logarithmically(n):
    N4 = separable_phase_2d(n, 1e-4, X2, Y2).params["N"]
    N8 = separable_phase_2d(n, 1e-8, X2, Y2).params["N"]
    assert N8 - N4 <= 2 * math.log(1e4) / math.log(2) + 2


def test_phase_factors_separate():
    a = separable_phase_2d(3, 1e-5, X2, Y2)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (1, 2))
    y1, y2 = Y2.lo + rng.uniform(0, 1, (2, 1, 2))
    for t in a.terms[:25]:
        fx = t.f(x)
        # perturbing y leaves f alone; perturbing x leaves g alone
        assert np.array_equal(fx, t.f(x.copy()))
        g1 = t.g(y1)
        assert np.array_equal(g1, t.g(y1 + 0.0))
        assert t.x_family is a.x_factors and t.y_family is a.y_factors
    assert np.allclose(a.evaluate(x, y1), phase_target_2d(3)(x[:, None], y1[None]), atol=1e-5)
    assert not np.allclose(a.evaluate(x, y1), a.evaluate(x, y2))


def test_phase_negative_n_is_conjugate():
    xs, ys = sample_grid(X2, 6), sample_grid(Y2, 6)
    p = separable_phase_2d(5, 1e-7, X2, Y2).evaluate(xs, ys)
    m = separable_phase_2d(-5, 1e-7, X2, Y2).evaluate(xs, ys)
    assert np.allclose(m, np.conj(p), atol=1e-12)


def test_phase_geometry_and_range_errors():
    with pytest.raises(GeometryError):
        separable_phase_2d(2, 1e-4, X2, BoxDomain((1.5, 0.0), (2.5, 1.0)))
    with pytest.raises(RangeError):
        separable_phase_2d(300, 1e-12, X2, Y2)
    with pytest.raises(ParameterError):
        separable_phase_2d(2, 0.0, X2, Y2)


def test_phase_constant_calibration():
    c = calibrate_phase_constant()
    assert c <= PHASE_TRUNCATION_C < c + 0.05


# -- piecewise polynomial smooth part ------------------------------------------------

def test_taylor_constant_stub_one_term_per_pair():
    a = separable_kernel_taylor(None, 2, 1e-3, X2, Y2, smooth=lambda x, y: np.ones(np.broadcast_shapes(x.shape, y.shape)[:-1]))
    pairs = a.params["cell_pairs"]
    assert a.term_count == pairs
    assert a.measured_sup_error < 1e-12


def test_taylor_meets_eps():
    med = constant_medium(bounding_box(X2, Y2), 1.0)
    a = separable_kernel_taylor(med, 3, 1e-4, X2, Y2)
    h = smooth_part(med)
    assert measure_sup_error(a, h, sample_grid(X2, 32), sample_grid(Y2, 32)) <= 1e-4
    assert a.measured_sup_error <= 0.5e-4


def test_taylor_pair_ratio():
    med = constant_medium(bounding_box(X2, Y2), 1.0)
    lo = separable_kernel_taylor(med, 3, 1e-2, X2, Y2).params["cell_pairs"]
    hi = separable_kernel_taylor(med, 3, 1e-4, X2, Y2).params["cell_pairs"]
    assert 25 <= hi / lo <= 400


def test_taylor_rejects_overlap():
    with pytest.raises(GeometryError):
        separable_kernel_taylor(None, 1, 1e-2, X2, X2, smooth=lambda x, y: 1.0)


# -- 3D harmonic Y_n0 -------------------------------------------------------------------

def test_harmonic_n1():
    a = separable_harmonic_3d(1, 1e-4, X3, Y3)
    err = measure_sup_error(a, harmonic_target_3d(1), sample_grid(X3, 20), sample_grid(Y3, 20))
    assert err <= a.guaranteed_sup_error <= 1e-4


@pytest.mark.parametrize("n", [2, 4, 8])
def test_harmonic_term_growth(n):
    a = separable_harmonic_3d(n, 1e-4, X3, Y3)
    assert a.term_count <= 0.1 * a.params["N"] ** 4
    err = measure_sup_error(a, harmonic_target_3d(n), sample_grid(X3, 4), sample_grid(Y3, 4))
    assert err <= 1e-4


def test_harmonic_per_power_budget():
    n, eps = 4, 1e-5
    a = separable_harmonic_3d(n, eps, X3, Y3)
    norm = math.sqrt((2 * n + 1) / (4 * math.pi))
    c = legendre_monomial_coefficients(n)
    xs, ys = sample_grid(X3, 4), sample_grid(Y3, 4)
    total = 0.0
    for k, S in a.params["S_k"].items():
        approx = cos_power_approximation(k, S, X3, Y3)
        e_k = measure_sup_error(approx, cos_power_target(k), xs, ys)
        assert e_k <= approx.guaranteed_sup_error + 1e-14
        total += norm * abs(c[k]) * e_k
    assert total <= eps


def test_legendre_monomials():
    assert legendre_monomial_coefficients(2) == [-0.5, 0.0, 1.5]
    assert sum(abs(v) for v in legendre_monomial_coefficients(12)) <= 3 ** 12


def test_harmonic_range():
    with pytest.raises(RangeError):
        separable_harmonic_3d(13, 1e-4, X3, Y3)
    with pytest.raises(ParameterError):
        separable_harmonic_3d(0, 1e-4, X3, Y3)
