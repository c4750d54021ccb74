"""Measured separability of the moment kernels.

Correlation of kernel columns, SVD epsilon-ranks against the mode index,
and the eigenvalue count of the correlation Gram matrix.  The
constructive side lives in :mod:`rte_kernel_lab.separable`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import FitError, GeometryError, NumericalError, ParameterError, ResolutionError, ResourceError
from .geometry import BoxDomain, Grid, MediumField, as_points, attenuation, constant_medium
from .kernels import KernelMatrix, assemble
from .special import spherical_harmonic

PPW_MIDPOINT = 10.0
PPW_GAUSS = 2.5
MIN_POINTS_MIDPOINT = 64
MIN_POINTS_GAUSS = 16


def bounding_box(*parts, pad: float = 0.0) -> BoxDomain:
    """Smallest box containing the given boxes and points."""
    lo, hi = [], []
    for p in parts:
        if isinstance(p, BoxDomain):
            lo.append(np.asarray(p.lo, float))
            hi.append(np.asarray(p.hi, float))
        else:
            q = np.atleast_2d(as_points(p))
            lo.append(q.min(axis=0))
            hi.append(q.max(axis=0))
    lo, hi = np.min(lo, axis=0) - pad, np.max(hi, axis=0) + pad
    # degenerate extents (all parts on a plane) get a unit-free nudge
    hi = np.where(hi > lo, hi, lo + 1e-9)
    return BoxDomain(tuple(lo), tuple(hi))


# -- correlation ----------------------------------------------------------------------

@dataclass
class CorrelationProfile:
    geometry: dict
    samples: list                 # (n, n_tilde, |C|)
    fitted_slope: float
    fit_window: tuple
    fit_points: list = field(default_factory=list)
    resolution: int = 0
    quadrature: str = "midpoint"
    wall_time: float = 0.0


def _tensor_rule(X: BoxDomain, m: int, quadrature: str):
    if quadrature == "midpoint":
        t = (np.arange(m) + 0.5) / m
        w = np.full(m, 1.0 / m)
    elif quadrature == "gauss":
        t, w = np.polynomial.legendre.leggauss(m)
        t, w = 0.5 * (t + 1.0), 0.5 * w
    else:
        raise ParameterError(f"unknown quadrature {quadrature!r}")
    axes = [lo + t * L for lo, L in zip(X.lo, X.lengths)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    wm = np.meshgrid(*([w * L for L in X.lengths]), indexing="ij")
    return pts, np.prod(np.stack([a.ravel() for a in wm]), axis=0)


def required_resolution(n: int, X: BoxDomain, points, quadrature: str = "midpoint") -> int:
    """Points per dimension needed to resolve exp(-i n theta) over X.

    The kernel phase changes at rate |n| / dist along X, so
    ``ppw * |n| * diam(X) / (2 pi dist)`` points per dimension give ``ppw``
    samples per local wavelength.
    """
    pts = np.atleast_2d(as_points(points))
    dist = float(np.min(X.distance_to_point(pts)))
    if dist <= 0.0:
        raise GeometryError("source points must lie outside X")
    ppw, floor = (PPW_MIDPOINT, MIN_POINTS_MIDPOINT) if quadrature == "midpoint" else (PPW_GAUSS, MIN_POINTS_GAUSS)
    return max(floor, math.ceil(ppw * abs(n) * X.diam / (2 * math.pi * dist)))


def _column_data(medium, X_pts, y, dim):
    d = X_pts - y[None, :]
    r = np.linalg.norm(d, axis=1)
    amp = attenuation(medium, X_pts, y[None, :], check=False) / r ** (dim - 1)
    return d, r, amp


def correlation_sweep(medium: MediumField, n_values, X: BoxDomain, y1, y2,
                      resolution: int | None = None, quadrature: str = "midpoint",
                      order: int = 0) -> np.ndarray:
    """C(y1, y2) for every n in ``n_values`` on one quadrature grid.

    2D uses G_n; 3D uses G_{n, order}.  The grid is fixed by the largest n,
    so smaller modes are over-resolved rather than re-sampled.
    """
    n_values = np.atleast_1d(np.asarray(n_values, dtype=int))
    y1, y2 = np.asarray(y1, float), np.asarray(y2, float)
    dim = X.dim
    if y1.shape != (dim,) or y2.shape != (dim,):
        raise ParameterError("points must match the dimension of X")
    need = required_resolution(int(np.max(np.abs(n_values))), X, [y1, y2], quadrature)
    if resolution is None:
        resolution = need
    elif resolution < need:
        raise ResolutionError(f"resolution {resolution} per dimension is too coarse for n = "
                              f"{int(np.max(np.abs(n_values)))}; need at least {need}")
    if np.array_equal(y1, y2):
        return np.ones(len(n_values), dtype=complex)
    pts, w = _tensor_rule(X, resolution, quadrature)
    d1, r1, a1 = _column_data(medium, pts, y1, dim)
    d2, r2, a2 = _column_data(medium, pts, y2, dim)
    out = np.empty(len(n_values), dtype=complex)
    if dim == 2:
        base = w * a1 * a2
        norm = math.sqrt(np.sum(w * a1 ** 2) * np.sum(w * a2 ** 2))
        dtheta = np.arctan2(d1[:, 1], d1[:, 0]) - np.arctan2(d2[:, 1], d2[:, 0])
        for i, n in enumerate(n_values):
            out[i] = np.sum(base * np.exp(-1j * n * dtheta)) / norm
        return out
    if order == 0:
        # Legendre recurrence in n; the Y_n0 normalisation cancels in C
        c1, c2 = d1[:, 2] / r1, d2[:, 2] / r2
        want = {int(n): i for i, n in enumerate(n_values)}
        if min(want) < 0:
            raise ParameterError("3D modes need n >= 0")
        p0a, p1a = np.ones_like(c1), c1.copy()
        p0b, p1b = np.ones_like(c2), c2.copy()
        for n in range(0, max(want) + 1):
            if n == 0:
                pa, pb = p0a, p0b
            elif n == 1:
                pa, pb = p1a, p1b
            else:
                p0a, p1a = p1a, ((2 * n - 1) * c1 * p1a - (n - 1) * p0a) / n
                p0b, p1b = p1b, ((2 * n - 1) * c2 * p1b - (n - 1) * p0b) / n
                pa, pb = p1a, p1b
            if n in want:
                A, B = a1 * pa, a2 * pb
                nrm = math.sqrt(np.sum(w * A * A) * np.sum(w * B * B))
                out[want[n]] = np.sum(w * A * B) / nrm if nrm > 0 else 0.0
        return out
    for i, n in enumerate(n_values):
        A = a1 * spherical_harmonic(int(n), order, *_angles(d1, r1), normalization="standard")
        B = a2 * spherical_harmonic(int(n), order, *_angles(d2, r2), normalization="standard")
        nrm = math.sqrt(np.sum(w * np.abs(A) ** 2) * np.sum(w * np.abs(B) ** 2))
        out[i] = np.sum(w * A * np.conj(B)) / nrm
    return out


def _angles(d, r):
    return np.arccos(np.clip(d[:, 2] / r, -1.0, 1.0)), np.arctan2(d[:, 1], d[:, 0])


def correlation(medium: MediumField, n: int, X: BoxDomain, y1, y2, resolution: int | None = None,
                quadrature: str = "midpoint", order: int = 0) -> complex:
    """Normalised L2(X) inner product of G_n(., y1) and G_n(., y2)."""
    return complex(correlation_sweep(medium, [n], X, y1, y2, resolution, quadrature, order)[0])


@dataclass
class CorrelationStudyConfig:
    """Geometry and sweep for a correlation-decay measurement.

    Without explicit ``n_values`` the sweep covers n_tilde in
    [ntilde_min, ntilde_max]: ``n_count`` log-spaced integers for the
    ``"ols"`` fit, every integer for the ``"envelope"`` fit.
    """

    X: BoxDomain
    y1: tuple
    y2: tuple
    sigma_t: float = 1.0
    n_values: tuple | None = None
    ntilde_min: float = 1.0
    ntilde_max: float = 150.0
    n_count: int = 40
    fit: str = "ols"
    envelope_bins: int = 8
    quadrature: str = "midpoint"
    resolution: int | None = None
    min_window_points: int = 5
    order: int = 0

    def sweep(self) -> np.ndarray:
        if self.n_values is not None:
            return np.unique(np.asarray(self.n_values, dtype=int))
        sep = float(np.linalg.norm(np.subtract(self.y1, self.y2)))
        if sep == 0.0:
            raise ParameterError("y1 = y2 gives n_tilde = 0; pass n_values explicitly")
        lo, hi = max(1, math.ceil(self.ntilde_min / sep)), max(1, math.floor(self.ntilde_max / sep))
        if self.fit == "envelope":
            return np.arange(lo, hi + 1)
        return np.unique(np.round(np.geomspace(lo, hi, self.n_count)).astype(int))


def fit_loglog(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _top_decade(nt, vals, min_points):
    lo = nt.max() / 10.0
    sel = nt >= lo * (1 - 1e-12)
    if np.count_nonzero(sel) < min_points:
        raise FitError(f"only {np.count_nonzero(sel)} samples in the fit window "
                       f"[{lo:.4g}, {nt.max():.4g}]; need {min_points}")
    return sel, (float(lo), float(nt.max()))


def envelope_points(nt, vals, bins: int):
    """Largest sample in each of ``bins`` log-spaced bins."""
    edges = np.geomspace(nt.min(), nt.max(), bins + 1)
    edges[-1] *= 1 + 1e-12
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        s = (nt >= a) & (nt < b)
        if np.any(s):
            i = int(np.argmax(vals[s]))
            xs.append(float(nt[s][i]))
            ys.append(float(vals[s][i]))
    return xs, ys


def correlation_decay_study(config: CorrelationStudyConfig) -> CorrelationProfile:
    """Sweep n and fit log|C| against log n_tilde over the top decade of n_tilde."""
    t0 = time.perf_counter()
    X = config.X
    y1, y2 = np.asarray(config.y1, float), np.asarray(config.y2, float)
    if np.any(X.contains(np.stack([y1, y2]))):
        raise GeometryError("y1 and y2 must lie outside X")
    medium = constant_medium(bounding_box(X, y1, y2), config.sigma_t)
    ns = config.sweep()
    sep = float(np.linalg.norm(y1 - y2))
    res = config.resolution
    if res is None:
        res = required_resolution(int(ns.max()), X, [y1, y2], config.quadrature)
    C = np.abs(correlation_sweep(medium, ns, X, y1, y2, res, config.quadrature, config.order))
    nt = ns * sep
    samples = [(int(n), float(t), float(c)) for n, t, c in zip(ns, nt, C)]
    sel, window = _top_decade(nt, C, config.min_window_points)
    if config.fit == "ols":
        xs, ys = nt[sel].tolist(), C[sel].tolist()
    elif config.fit == "envelope":
        xs, ys = envelope_points(nt[sel], C[sel], config.envelope_bins)
        if len(xs) < 3:
            raise FitError("too few envelope points")
    else:
        raise ParameterError(f"unknown fit {config.fit!r}")
    slope = fit_loglog(xs, ys)
    geometry = dict(X=(tuple(X.lo), tuple(X.hi)), y1=tuple(y1), y2=tuple(y2), dim=X.dim,
                    sigma_t=config.sigma_t)
    return CorrelationProfile(geometry, samples, slope, window, list(zip(xs, ys)), int(res),
                              config.quadrature, time.perf_counter() - t0)


# -- epsilon ranks --------------------------------------------------------------------

def rank_from_singular_values(s, eps: float, criterion: str = "frobenius") -> int:
    """Smallest r meeting the truncation criterion.

    ``"frobenius"``: (sum_{k>r} s_k^2)^(1/2) <= eps (sum_k s_k^2)^(1/2).
    ``"spectral"``:  s_{r+1} <= eps s_1.
    """
    s = np.sort(np.abs(np.asarray(s, float)))[::-1]
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    if s.size == 0 or s[0] == 0.0:
        return 0
    if criterion == "frobenius":
        # tail[r] = sqrt(sum_{k >= r} s_k^2), summed from the small end
        tail = np.sqrt(np.cumsum((s * s)[::-1])[::-1])
        tail = np.append(tail, 0.0)
        ok = np.nonzero(tail <= eps * tail[0])[0]
    elif criterion == "spectral":
        nxt = np.append(s, 0.0)
        ok = np.nonzero(nxt <= eps * s[0])[0]
    else:
        raise ParameterError(f"unknown criterion {criterion!r}")
    return int(ok[0])


def singular_values(matrix) -> np.ndarray:
    A = matrix.entries if isinstance(matrix, KernelMatrix) else np.asarray(matrix)
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    if np.iscomplexobj(A) and not np.any(A.imag):
        A = A.real
    return sla.svdvals(A, check_finite=False)


def epsilon_rank(matrix, eps: float, criterion: str = "frobenius") -> int:
    return rank_from_singular_values(singular_values(matrix), eps, criterion)


@dataclass
class RankProfile:
    epsilons: list
    n_values: list
    ranks: dict                   # eps -> [N^eps for each n]
    fitted_exponents: dict        # eps -> log-log slope
    shapes: list = field(default_factory=list)
    criterion: str = "frobenius"
    quadratic_fit: dict = field(default_factory=dict)   # eps -> (a, b) in N ~ a n + b n^2
    wall_time: float = 0.0

    def rank(self, eps, n) -> int:
        return self.ranks[eps][self.n_values.index(n)]


@dataclass
class RankStudyConfig:
    """Kernel matrices G_n (2D) or G_{n0} (3D) on uniform grids of X and Y.

    ``points_per_unit`` is the number of grid points per unit length and per
    unit of n; spacing <= 1 / (2n) needs at least 2.
    """

    X: BoxDomain
    Y: BoxDomain
    n_values: tuple = (4, 8, 16, 32)
    epsilons: tuple = (1e-2, 1e-4, 1e-8)
    sigma_t: float = 1.0
    points_per_unit: float = 2.0
    criterion: str = "frobenius"
    memory_budget: float = 2 * 1024 ** 3
    threads: int | None = None


def _study_grid(box: BoxDomain, n: int, ppu: float) -> Grid:
    cells = tuple(max(1, math.ceil(ppu * n * L - 1e-9)) for L in box.lengths)
    return Grid(box, cells)


def rank_growth_study(config: RankStudyConfig, keep_singular_values: bool = False) -> RankProfile:
    t0 = time.perf_counter()
    if config.points_per_unit < 2.0:
        raise ResolutionError(f"grid spacing must be <= 1/(2n); points_per_unit = "
                              f"{config.points_per_unit} < 2")
    if config.X.dim != config.Y.dim:
        raise ParameterError("X and Y must have the same dimension")
    if config.X.distance_to_box(config.Y) <= 0:
        raise GeometryError("X and Y must be disjoint")
    dim = config.X.dim
    medium = constant_medium(bounding_box(config.X, config.Y), config.sigma_t)
    eps_list = [float(e) for e in config.epsilons]
    ranks = {e: [] for e in eps_list}
    shapes = []
    for n in config.n_values:
        gx = _study_grid(config.X, n, config.points_per_unit)
        gy = _study_grid(config.Y, n, config.points_per_unit)
        need = gx.size * gy.size * 16 * 3
        if need > config.memory_budget:
            raise ResourceError(f"n = {n}: {gx.size} x {gy.size} matrix exceeds the memory budget")
        mode = int(n) if dim == 2 else (int(n), 0)
        K = assemble(medium, mode, gx.centers, gy.centers, threads=config.threads)
        s = singular_values(K)
        del K
        shapes.append((gx.size, gy.size))
        for e in eps_list:
            ranks[e].append(rank_from_singular_values(s, e, config.criterion))
    ns = np.asarray(config.n_values, float)
    exps, quad = {}, {}
    for e in eps_list:
        r = np.asarray(ranks[e], float)
        exps[e] = fit_loglog(ns, r) if len(ns) > 1 else float("nan")
        if len(ns) > 1:
            coef, *_ = np.linalg.lstsq(np.stack([ns, ns ** 2], axis=1), r, rcond=None)
            quad[e] = (float(coef[0]), float(coef[1]))
    return RankProfile(eps_list, [int(n) for n in config.n_values], ranks, exps, shapes,
                       config.criterion, quad, time.perf_counter() - t0)


# -- PCA lower bound ---------------------------------------------------------------

@dataclass
class PCABound:
    M_delta: int
    eigenvalues: np.ndarray
    ranks: dict                  # eps -> N_delta^eps
    y_points: np.ndarray
    spacing: float


def pca_lower_bound(medium: MediumField, n: int, X: BoxDomain, Y: BoxDomain, delta: float,
                    epsilons=(1e-2,), resolution: int | None = None,
                    quadrature: str = "midpoint", psd_tol: float = 1e-8) -> PCABound:
    """Eigenvalue count of the correlation Gram matrix A = [C(y_m, y_k)].

    The y_m form a cell-centred grid in Y with spacing n^(delta - 1) times
    the longest side of Y.  N^eps is the smallest M whose eigenvalue tail
    sum_{m > M} lambda_m is at most eps^2 trace(A).
    """
    if not 0.0 <= delta <= 1.0:
        raise ParameterError("delta must lie in [0, 1]")
    if n < 1:
        raise ParameterError("n must be >= 1")
    scale = float(np.max(Y.lengths))
    h = n ** (delta - 1.0) * scale
    cells = tuple(max(1, math.ceil(L / h - 1e-9)) for L in Y.lengths)
    ys = Grid(Y, cells).centers
    need = required_resolution(n, X, ys, quadrature)
    if resolution is None:
        resolution = need
    elif resolution < need:
        raise ResolutionError(f"resolution {resolution} too coarse; need {need}")
    pts, w = _tensor_rule(X, resolution, quadrature)
    mode = int(n) if X.dim == 2 else (int(n), 0)
    G = assemble(medium, mode, pts, ys, disjoint=False).entries
    G *= np.sqrt(w)[:, None]
    G /= np.linalg.norm(G, axis=0)[None, :]
    A = G.T @ np.conj(G)
    A = 0.5 * (A + A.conj().T)
    lam = np.linalg.eigvalsh(A)[::-1]
    if lam[-1] < -psd_tol:
        raise NumericalError(f"correlation matrix is not PSD: smallest eigenvalue {lam[-1]:.3e}")
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    tail = np.append(np.cumsum(lam[::-1])[::-1], 0.0)
    ranks = {float(e): int(np.nonzero(tail <= e * e * total)[0][0]) for e in epsilons}
    return PCABound(len(ys), lam, ranks, ys, h)
