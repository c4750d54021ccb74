"""Pointwise evaluation and dense assembly of the moment-system kernels.

2D:  G_n(x, y)  = E(x, y) / |x - y|   * exp(-i n theta),  theta = arg(x - y)
3D:  G_rs(x, y) = E(x, y) / |x - y|^2 * Y_rs((x - y) / |x - y|)

``theta`` uses the two-argument arctangent, range (-pi, pi]; the value of
exp(-i n theta) does not depend on the branch.  The 3D kernels use the
standard (not unit-measure) spherical harmonics.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SingularityError
from .geometry import DEFAULT_QUADRATURE, MediumField, SegmentQuadrature, as_points, attenuation
from .special import direction_angles, spherical_harmonic

_ROW_CHUNK_ENTRIES = 1_000_000


def _diff(x, y):
    x, y = as_points(x), as_points(y)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0.0):
        raise SingularityError("kernel evaluated at coincident points x = y")
    return x, y, d, r


def g2d(medium: MediumField, n: int, x, y, quad: SegmentQuadrature = DEFAULT_QUADRATURE):
    x, y, d, r = _diff(x, y)
    if d.shape[-1] != 2:
        raise ParameterError("g2d needs 2D points")
    theta = np.arctan2(d[..., 1], d[..., 0])
    return attenuation(medium, x, y, quad) / r * np.exp(-1j * n * theta)


def g3d(medium: MediumField, r_deg: int, s: int, x, y, quad: SegmentQuadrature = DEFAULT_QUADRATURE):
    x, y, d, r = _diff(x, y)
    if d.shape[-1] != 3:
        raise ParameterError("g3d needs 3D points")
    theta, phi = direction_angles(d)
    ylm = spherical_harmonic(r_deg, s, theta, phi, normalization="standard")
    return attenuation(medium, x, y, quad) / r ** 2 * ylm


@dataclass
class KernelMatrix:
    """Dense samples ``entries[i, j] = kernel(rows[i], cols[j])``."""

    rows: np.ndarray
    cols: np.ndarray
    mode: object
    entries: np.ndarray
    scaling: bool = False

    @property
    def shape(self):
        return self.entries.shape

    def conj_mode(self) -> "KernelMatrix":
        """Matrix of the 2D kernel with mode -n (entrywise conjugate)."""
        if not np.isscalar(self.mode):
            raise ParameterError("conjugation shortcut is only valid for 2D kernels")
        return KernelMatrix(self.rows, self.cols, -self.mode, np.conj(self.entries), self.scaling)


def default_threads() -> int:
    env = os.environ.get("RTE_KERNEL_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _kernel_block(medium, mode, xb, Y, quad):
    xs = xb[:, None, :]
    ys = Y[None, :, :]
    if np.isscalar(mode):
        return g2d(medium, int(mode), xs, ys, quad)
    r_deg, s = mode
    return g3d(medium, int(r_deg), int(s), xs, ys, quad)


def assemble(medium: MediumField, mode, X_points, Y_points, disjoint: bool = True,
             quad: SegmentQuadrature = DEFAULT_QUADRATURE, threads: int | None = None,
             weights: tuple | None = None) -> KernelMatrix:
    """Dense kernel matrix over two point sets.

    ``mode`` is an integer n for the 2D kernel or a pair (r, s) for 3D.
    Rows are evaluated in independent chunks (optionally on a thread pool);
    every entry is computed on its own, so the result does not depend on the
    thread count.  ``weights=(wx, wy)`` scales entry (i, j) by
    sqrt(wx_i wy_j), which turns the matrix into a discretisation of the
    integral operator.
    """
    X = np.atleast_2d(as_points(X_points))
    Y = np.atleast_2d(as_points(Y_points))
    if disjoint:
        # exact coincidences only; near misses are legitimate
        common = set(map(tuple, X)) & set(map(tuple, Y))
        if common:
            raise SingularityError(f"{len(common)} coincident point pair(s) in disjoint assembly")
    out = np.empty((len(X), len(Y)), dtype=complex)
    step = max(1, _ROW_CHUNK_ENTRIES // max(1, len(Y)))
    chunks = [(a, min(a + step, len(X))) for a in range(0, len(X), step)]

    def work(ab):
        a, b = ab
        out[a:b] = _kernel_block(medium, mode, X[a:b], Y, quad)

    threads = default_threads() if threads is None else int(threads)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for ab in chunks:
            work(ab)
    scaled = weights is not None
    if scaled:
        wx, wy = (np.broadcast_to(np.asarray(w, float), (len(P),)) for w, P in zip(weights, (X, Y)))
        out *= np.sqrt(wx)[:, None] * np.sqrt(wy)[None, :]
    return KernelMatrix(X, Y, mode, out, scaled)
