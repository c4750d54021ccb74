import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rte_kernel_lab.errors import ParameterError, SingularityError
from rte_kernel_lab.geometry import BoxDomain, Grid, MediumField, constant_medium
from rte_kernel_lab.io import read_matrix, write_matrix
from rte_kernel_lab.kernels import assemble, g2d, g3d
from rte_kernel_lab.separability import bounding_box
from rte_kernel_lab.special import legendre

BIG2 = BoxDomain((-5.0, -5.0), (5.0, 5.0))
BIG3 = BoxDomain((-5.0, -5.0, -5.0), (5.0, 5.0, 5.0))
VAC2 = MediumField(BIG2, 0.0, validate=False)
VAC3 = MediumField(BIG3, 0.0, validate=False)


def test_g2d_examples():
    assert g2d(VAC2, 0, (2.0, 0.0), (0.0, 0.0)) == pytest.approx(0.5)
    assert g2d(VAC2, 1, (1.0, 0.0), (0.0, 0.0)) == pytest.approx(1.0)
    m = constant_medium(BIG2, 1.0)
    val = g2d(m, 2, (0.0, 1.0), (0.0, 0.0))
    # scalar pipeline: theta = pi/2, E = e^-1, r = 1
    ref = math.exp(-1.0) * complex(math.cos(-2 * math.pi / 2), math.sin(-2 * math.pi / 2))
    assert val == pytest.approx(ref, abs=1e-15)
    assert val == pytest.approx(-math.exp(-1), abs=1e-15)


def test_g2d_singular():
    with pytest.raises(SingularityError):
        g2d(VAC2, 0, (0.1, 0.1), (0.1, 0.1))


def test_g3d_examples():
    y00 = 1 / math.sqrt(4 * math.pi)
    assert g3d(VAC3, 0, 0, (0, 0, 2.0), (0, 0, 0)) == pytest.approx(y00 / 4)
    m = constant_medium(BIG3, 0.7)
    val = g3d(m, 1, 0, (0, 0, 1.5), (0, 0, 0))
    assert val == pytest.approx(math.sqrt(3 / (4 * math.pi)) * math.exp(-0.7 * 1.5) / 1.5 ** 2)
    with pytest.raises(SingularityError):
        g3d(VAC3, 1, 0, (0, 0, 0), (0, 0, 0))


@given(st.integers(-20, 20), st.integers(0, 10_000))
def test_modulus_independent_of_n(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-4, 4, (2, 50, 2))
    m = constant_medium(BIG2, 0.8)
    assert np.max(np.abs(np.abs(g2d(m, n, x, y)) - np.abs(g2d(m, 0, x, y)))) <= 1e-12


@given(st.integers(0, 12), st.integers(0, 10_000))
def test_g3d_zonal_is_real(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-4, 4, (2, 30, 3))
    v = g3d(VAC3, n, 0, x, y)
    assert np.max(np.abs(v.imag)) <= 1e-14 * max(1.0, np.max(np.abs(v)))
    d = x - y
    r = np.linalg.norm(d, axis=1)
    ref = math.sqrt((2 * n + 1) / (4 * math.pi)) * legendre(n, d[:, 2] / r) / r ** 2
    np.testing.assert_allclose(v.real, ref, rtol=1e-10, atol=1e-14)


def test_assemble_single_entry():
    m = constant_medium(BIG2, 1.0)
    K = assemble(m, 3, [(0.1, 0.2)], [(1.0, -0.5)])
    assert K.shape == (1, 1)
    assert K.entries[0, 0] == g2d(m, 3, (0.1, 0.2), (1.0, -0.5))


def test_assemble_negative_mode_is_conjugate():
    m = constant_medium(BIG2, 1.0)
    rng = np.random.default_rng(0)
    X, Y = rng.uniform(-1, 0, (20, 2)), rng.uniform(1, 2, (15, 2))
    Kp, Km = assemble(m, 5, X, Y), assemble(m, -5, X, Y)
    np.testing.assert_array_equal(Km.entries, np.conj(Kp.entries))
    np.testing.assert_array_equal(Kp.conj_mode().entries, Km.entries)


def test_assemble_rejects_coincident_points():
    m = constant_medium(BIG2, 1.0)
    with pytest.raises(SingularityError):
        assemble(m, 0, [(0.0, 0.0), (1.0, 1.0)], [(1.0, 1.0)])


def test_assemble_thread_count_bitwise(monkeypatch):
    import rte_kernel_lab.kernels as kmod
    monkeypatch.setattr(kmod, "_ROW_CHUNK_ENTRIES", 200)
    m = constant_medium(BIG2, 1.0)
    rng = np.random.default_rng(1)
    X, Y = rng.uniform(-1, 0, (64, 2)), rng.uniform(1, 2, (40, 2))
    a = assemble(m, 7, X, Y, threads=1).entries
    b = assemble(m, 7, X, Y, threads=4).entries
    assert np.array_equal(a, b)


def test_frobenius_norm_grid_refinement():
    X, Y = BoxDomain((0, 0), (1, 1)), BoxDomain((1.25, 0.5), (2.25, 1.5))
    m = constant_medium(bounding_box(X, Y), 1.0)

    def norm(k):
        gx, gy = Grid(X, k), Grid(Y, k)
        K = assemble(m, 0, gx.centers, gy.centers, weights=(gx.cell_volume, gy.cell_volume))
        assert K.scaling
        return np.linalg.norm(K.entries)
    assert abs(norm(16) - norm(64)) <= 0.02 * norm(64)


def test_mode_and_dimension_checks():
    with pytest.raises(ParameterError):
        g2d(VAC3, 0, (0, 0, 1), (0, 0, 0))
    with pytest.raises(ParameterError):
        g3d(VAC2, 0, 0, (0, 1), (0, 0))


def test_matrix_binary_roundtrip(tmp_path):
    m = constant_medium(BIG2, 1.0)
    K = assemble(m, 2, [(0, 0), (0.5, 0)], [(2, 1), (3, 1), (3, 2)])
    write_matrix(tmp_path / "k.bin", K.entries)
    raw = (tmp_path / "k.bin").read_bytes()
    assert np.frombuffer(raw[:16], "<u8").tolist() == [2, 3]
    np.testing.assert_array_equal(read_matrix(tmp_path / "k.bin"), K.entries)


def test_g_n0_norm_bounded_in_n():
    # L2(X) norm of G_n0(., y) over the unit cube, y = (2, 2, 2)
    X = BoxDomain((0, 0, 0), (1, 1, 1))
    y = np.array([2.0, 2.0, 2.0])
    m = constant_medium(bounding_box(X, y), 1.0)
    t, w = np.polynomial.legendre.leggauss(48)
    t, w = 0.5 * (t + 1), 0.5 * w
    P = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    norms = [math.sqrt(np.sum(W * np.abs(g3d(m, n, 0, P, y)) ** 2)) for n in (8, 16, 32, 64)]
    assert max(norms) / min(norms) <= 2.0
