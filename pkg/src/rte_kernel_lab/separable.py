"""Explicit separable approximations sum_l f_l(x) g_l(y) of the kernels.

An approximation is stored as two factor families and a sparse coupling
matrix B, so that on point sets xs, ys

    approx(xs, ys) = F(xs) @ B @ G(ys).T,   F[i, l] = f_l(x_i), G[j, q] = g_q(y_j).

Factor families only ever see one point set, so x- and y-dependence
cannot mix.  Three constructions are provided:

* ``separable_phase_2d``: exp(-i n arg(x - y)) from the binomial expansion
  of the numerator and the Gegenbauer generating function for the
  denominator, factors |x|^m e^{i l theta_1} and |y|^{-m} e^{-i (l + n) theta_2}.
* ``separable_kernel_taylor``: piecewise polynomials for the smooth part
  E / |x - y|^{d-1} on a product of sub-cells.
* ``separable_harmonic_3d``: Y_n0((x - y) / |x - y|) through the monomial
  form of P_n, with factors |x|^m cos^a(theta) sin^b(theta) cos^c(phi) sin^d(phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.special import eval_legendre

from .errors import GeometryError, ParameterError, RangeError
from .geometry import BoxDomain, Grid, MediumField, as_points, attenuation
from .special import gegenbauer_table

UNIT_ROUNDOFF = np.finfo(float).eps
REFERENCE_PHASE_GEOMETRY = (BoxDomain((0.0, 0.0), (1.0, 1.0)), BoxDomain((3.0, 0.0), (4.0, 1.0)))
# N = 2n + ceil(c log(1/eps)) bounds the radial degree of separable_phase_2d
# on the reference geometry for n <= 16; fitted once by calibrate_phase_constant().
PHASE_TRUNCATION_C = 3.26
MAX_STABLE_HARMONIC_N = 12


# -- factor families ---------------------------------------------------------------

class FactorFamily:
    """A list of functions of one point set, evaluated all at once."""

    def __len__(self) -> int:
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class PolarMonomials(FactorFamily):
    """|p - o|^power_l exp(i freq_l arg(p - o)) in 2D."""

    origin: tuple
    powers: tuple
    freqs: tuple

    def __len__(self):
        return len(self.powers)

    def __call__(self, points):
        p = np.atleast_2d(as_points(points)) - np.asarray(self.origin)[None, :]
        r = np.hypot(p[:, 0], p[:, 1])
        z = p[:, 0] + 1j * p[:, 1]
        pw = np.asarray(self.powers)[None, :]
        fq = np.asarray(self.freqs)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)[:, None]
            out = r[:, None] ** pw * unit ** fq
        # at the origin only the constant survives (|l| <= m for every x-factor)
        at0 = r == 0
        if np.any(at0):
            out[at0] = np.where((pw == 0) & (fq == 0), 1.0, 0.0)
        return out


@dataclass(frozen=True)
class CartesianMonomials(FactorFamily):
    """|p - o|^power_l * p3^a_l * p1^c_l * p2^d_l in 3D (p relative to o)."""

    origin: tuple
    powers: tuple
    a: tuple
    c: tuple
    d: tuple

    def __len__(self):
        return len(self.powers)

    def __call__(self, points):
        p = np.atleast_2d(as_points(points)) - np.asarray(self.origin)[None, :]
        r = np.linalg.norm(p, axis=1)[:, None]
        with np.errstate(divide="ignore"):
            rad = r ** np.asarray(self.powers, float)[None, :]
        return (rad * p[:, 2:3] ** np.asarray(self.a)[None, :]
                * p[:, 0:1] ** np.asarray(self.c)[None, :]
                * p[:, 1:2] ** np.asarray(self.d)[None, :])


@dataclass(frozen=True)
class CellMonomials(FactorFamily):
    """Indicator of a sub-cell times a scaled monomial ((p - centre) / half)^alpha.

    Cells tile ``box`` on a ``cells`` grid; each point belongs to exactly one
    cell (cells are closed on the low side, the last one on both).
    """

    box: BoxDomain
    cells: tuple
    cell_ids: tuple          # flat cell index per factor
    exponents: tuple         # exponent tuple per factor

    def __len__(self):
        return len(self.cell_ids)

    def locate(self, points):
        p = np.atleast_2d(as_points(points))
        h = self.box.lengths / np.asarray(self.cells)
        idx = np.floor((p - np.asarray(self.box.lo)) / h).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.cells) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), self.cells)
        centre = np.asarray(self.box.lo) + (idx + 0.5) * h
        return flat, (p - centre) / (0.5 * h)

    def __call__(self, points):
        flat, xi = self.locate(points)
        ids = np.asarray(self.cell_ids)
        ex = np.asarray(self.exponents)                  # (T, d)
        mono = np.prod(xi[:, None, :] ** ex[None, :, :], axis=2)
        return np.where(flat[:, None] == ids[None, :], mono, 0.0)


@dataclass(frozen=True)
class ConstantFactor(FactorFamily):
    def __len__(self):
        return 1

    def __call__(self, points):
        return np.ones((len(np.atleast_2d(as_points(points))), 1))


@dataclass(frozen=True)
class SeparableTerm:
    """f(x) * g(y) with f a single factor and g a combination of y-factors."""

    x_family: FactorFamily
    x_index: int
    y_family: FactorFamily
    y_indices: tuple
    y_weights: tuple

    def f(self, x):
        return self.x_family(x)[:, self.x_index]

    def g(self, y):
        return self.y_family(y)[:, list(self.y_indices)] @ np.asarray(self.y_weights)


@dataclass
class SeparableApproximation:
    x_factors: FactorFamily
    y_factors: FactorFamily
    coupling: sp.csr_matrix
    term_count: int
    guaranteed_sup_error: float
    params: dict = field(default_factory=dict)
    measured_sup_error: float | None = None

    @property
    def terms(self) -> list:
        B = self.coupling.tocsr()
        out = []
        for l in range(B.shape[0]):
            row = B.getrow(l)
            if row.nnz:
                out.append(SeparableTerm(self.x_factors, l, self.y_factors,
                                         tuple(row.indices), tuple(row.data)))
        return out

    def evaluate(self, xs, ys) -> np.ndarray:
        F = self.x_factors(xs)
        G = self.y_factors(ys)
        return np.asarray((self.coupling.T @ F.T).T) @ G.T


def measure_sup_error(approx: SeparableApproximation, target, xs, ys, chunk: int = 256) -> float:
    """max |target(x, y) - approx(x, y)| over all pairs, in row chunks."""
    xs, ys = np.atleast_2d(as_points(xs)), np.atleast_2d(as_points(ys))
    G = approx.y_factors(ys)
    worst = 0.0
    for a in range(0, len(xs), chunk):
        xb = xs[a:a + chunk]
        F = approx.x_factors(xb)
        val = np.asarray((approx.coupling.T @ F.T).T) @ G.T
        ref = target(xb[:, None, :], ys[None, :, :])
        worst = max(worst, float(np.max(np.abs(ref - val))))
    return worst


def sample_grid(box: BoxDomain, per_dim: int) -> np.ndarray:
    return Grid(box, per_dim).centers


# -- geometry ---------------------------------------------------------------------

@dataclass(frozen=True)
class SeparationGeometry:
    """Radii about the centre of X: |x - x_c| <= zeta, |y - y_c| <= eta, rho = |x_c - y_c|."""

    origin: tuple
    zeta: float
    eta: float
    rho: float

    @property
    def ratio(self) -> float:
        """Upper bound on |x - x_c| / |y - x_c| over X x Y."""
        return self.zeta / (self.rho - self.eta)


def separation_geometry(X: BoxDomain, Y: BoxDomain) -> SeparationGeometry:
    if X.dim != Y.dim:
        raise ParameterError("X and Y must have the same dimension")
    rho = float(np.linalg.norm(X.center - Y.center))
    zeta, eta = X.radius, Y.radius
    if rho <= 0 or (zeta + eta) / rho >= 0.5:
        raise GeometryError(f"need (zeta + eta) / rho < 1/2, got {(zeta + eta) / max(rho, 1e-300):.4g}")
    return SeparationGeometry(tuple(X.center), zeta, eta, rho)


def gegenbauer_tail_bound(lam_twice: int, ratio: float, S: int) -> float:
    """(1 + r)^k * sum_{s > S} C_s^{k/2}(1) r^s with k = lam_twice.

    C_s^{k/2}(1) = binom(s + k - 1, s); terms are summed in log space until
    they stop mattering.
    """
    k, r = int(lam_twice), float(ratio)
    if k == 0:
        return 0.0
    if not 0.0 <= r < 1.0:
        raise GeometryError("ratio must lie in [0, 1)")
    if r == 0.0:
        return 0.0
    lr = math.log(r)
    total, s = 0.0, S + 1
    while True:
        t = math.exp(math.lgamma(s + k) - math.lgamma(s + 1) - math.lgamma(k) + s * lr)
        total += t
        # terms are eventually decreasing with ratio (s + k)/(s + 1) r
        q = (s + k) / (s + 1) * r
        if q < 1 and t * q / (1 - q) <= 1e-17 * total:
            break
        s += 1
        if s > S + 100_000:
            break
    return (1.0 + r) ** k * total


def truncation_degree(lam_twice: int, ratio: float, budget: float) -> int:
    """Smallest S with gegenbauer_tail_bound(lam_twice, ratio, S) <= budget."""
    if budget <= 0:
        raise ParameterError("error budget must be positive")
    # bisection on a doubling bracket; the bound is decreasing in S
    hi = 1
    while gegenbauer_tail_bound(lam_twice, ratio, hi) > budget:
        hi *= 2
        if hi > 1 << 20:
            raise RangeError("truncation degree does not fit the error budget")
    lo = -1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= 0 and gegenbauer_tail_bound(lam_twice, ratio, mid) <= budget:
            hi = mid
        else:
            lo = mid
    return hi


# -- 2D phase factor ------------------------------------------------------------------

def phase_target_2d(n: int):
    def target(x, y):
        d = x - y
        return np.exp(-1j * n * np.arctan2(d[..., 1], d[..., 0]))
    return target


@lru_cache(maxsize=32)
def _phase_coefficients(n: int, S: int) -> dict:
    """Exact gamma[(m, l)] for exp(-i n arg(x - y)), truncated at Gegenbauer degree S."""
    table = gegenbauer_table(n / 2.0, S)
    gamma: dict = {}
    for s in range(S + 1):
        a = table.fourier_coefficients(s)
        for k in range(n + 1):
            b = math.comb(n, k) * (-1) ** (n - k)
            for f, af in a.items():
                key = (k + s, f - k)
                gamma[key] = gamma.get(key, Fraction(0)) + b * af
    return {k: v for k, v in gamma.items() if v != 0}


def phase_truncation_bound(n: int, eps: float, c: float = PHASE_TRUNCATION_C) -> int:
    """N = 2|n| + ceil(c log(1/eps))."""
    return 2 * abs(n) + math.ceil(c * math.log(1.0 / eps))


def separable_phase_2d(n: int, eps: float, X: BoxDomain, Y: BoxDomain) -> SeparableApproximation:
    """Separable expansion of exp(-i n arg(x - y)) on X x Y to sup error eps.

    With origin at the centre of X, exp(-i n arg z) = conj(z)^n / |z|^n.
    The numerator is expanded binomially; the denominator is
    |y|^{-n} sum_s C_s^{n/2}(cos(theta_1 - theta_2)) (|x| / |y|)^s, truncated
    at the smallest S whose tail bound
    (1 + r)^n sum_{s > S} C_s^{n/2}(1) r^s, r = zeta / (rho - eta),
    is below eps.  Terms are grouped by (m, l), the radial power and angular
    frequency of the x-factor.
    """
    if X.dim != 2:
        raise ParameterError("separable_phase_2d needs 2D boxes")
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    geo = separation_geometry(X, Y)
    origin = geo.origin
    if n == 0:
        one = PolarMonomials(origin, (0,), (0,))
        return SeparableApproximation(one, one, sp.csr_matrix(np.ones((1, 1))), 1, 0.0,
                                      dict(n=0, S=0, N=0, ratio=geo.ratio))
    m_abs = abs(int(n))
    r = geo.ratio
    S = truncation_degree(m_abs, r, 0.5 * eps)
    tail = gegenbauer_tail_bound(m_abs, r, S)
    try:
        gamma = _phase_coefficients(m_abs, S)
        coef = {k: float(v) for k, v in gamma.items()}
    except OverflowError as exc:
        raise RangeError(f"phase coefficients overflow for n = {n}") from exc
    keys = sorted(coef)
    vals = np.array([coef[k] for k in keys])
    if not np.all(np.isfinite(vals)):
        raise RangeError(f"phase coefficients overflow for n = {n}")
    # |term (m, l)| <= |gamma| r^m on X x Y
    rounding = 16 * UNIT_ROUNDOFF * (S + m_abs + 1) * float(np.sum(np.abs(vals) * r ** np.array([m for m, _ in keys])))
    if tail + rounding > eps:
        raise RangeError(f"rounding ({rounding:.2e}) swamps the requested eps for n = {n}")
    sign = 1 if n > 0 else -1          # negative n: conjugate every factor
    powers = tuple(m for m, _ in keys)
    xf = PolarMonomials(origin, powers, tuple(sign * l for _, l in keys))
    yf = PolarMonomials(origin, tuple(-m for m in powers), tuple(-sign * (l + m_abs) for _, l in keys))
    T = len(keys)
    B = sp.csr_matrix(sp.diags(vals))
    N = m_abs + S
    return SeparableApproximation(xf, yf, B, T, float(tail + rounding),
                                  dict(n=int(n), S=S, N=N, ratio=r,
                                       N_bound=phase_truncation_bound(n, eps)))


def calibrate_phase_constant(n_values=range(1, 17), epsilons=tuple(10.0 ** -k for k in range(2, 15)),
                             ratio: float | None = None) -> float:
    """Smallest c with n + S(n, eps) <= 2n + c log(1/eps) over the grid.

    The default ratio is that of the reference geometry X = [0,1]^2,
    Y = X + (3, 0).  The truncation degree grows with the ratio, so a
    geometry closer to the admissibility limit needs a larger c.
    """
    if ratio is None:
        ratio = separation_geometry(*REFERENCE_PHASE_GEOMETRY).ratio
    c = 0.0
    for m in n_values:
        for e in epsilons:
            S = truncation_degree(m, ratio, 0.5 * e)
            c = max(c, (S - m) / math.log(1.0 / e))
    return c


# -- piecewise polynomial smooth part ------------------------------------------------

TAYLOR_CELL_SCALE = 1.1


def smooth_part(medium: MediumField):
    """h(x, y) = E(x, y) / |x - y|^{d-1}."""
    d = medium.dim

    def h(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        r = np.linalg.norm(x - y, axis=-1)
        return attenuation(medium, x, y, check=False) / r ** (d - 1)
    return h


def _monomial_exponents(nvars: int, k: int):
    return [e for e in product(range(k + 1), repeat=nvars) if sum(e) <= k]


def _chebyshev_nodes(m: int):
    return np.cos((2 * np.arange(m) + 1) * np.pi / (2 * m))


def _fit_cell_pairs(h, X, Y, cx, cy, k):
    d = X.dim
    joint = _monomial_exponents(2 * d, k)
    nodes = _chebyshev_nodes(k + 2)
    ref = np.array(list(product(nodes, repeat=2 * d)))            # (P, 2d)
    V = np.prod(ref[:, None, :] ** np.asarray(joint)[None, :, :], axis=2)
    pinv = np.linalg.pinv(V)
    hx, hy = X.lengths / np.asarray(cx), Y.lengths / np.asarray(cy)
    xcells = np.array(list(np.ndindex(*cx)))
    ycells = np.array(list(np.ndindex(*cy)))
    xc = np.asarray(X.lo) + (xcells + 0.5) * hx                    # cell centres
    yc = np.asarray(Y.lo) + (ycells + 0.5) * hy
    xs = xc[:, None, :] + ref[None, :, :d] * (0.5 * hx)            # (ncx, P, d)
    ys = yc[:, None, :] + ref[None, :, d:] * (0.5 * hy)
    coeffs = np.empty((len(xcells), len(ycells), len(joint)))
    for i in range(len(xcells)):
        vals = h(xs[i][None, :, :], ys)                            # (ncy, P)
        coeffs[i] = vals @ pinv.T
    return joint, coeffs


def separable_kernel_taylor(medium: MediumField | None, k_smooth: int, eps: float, X: BoxDomain,
                            Y: BoxDomain, smooth=None, check_points: int = 32, max_refine: int = 12,
                            cell_scale: float = TAYLOR_CELL_SCALE) -> SeparableApproximation:
    """Piecewise polynomial separable approximation of the smooth part.

    X and Y are split into sub-cells of side about
    ``cell_scale * eps^(1/(k+1))``.  On every cell pair a polynomial of
    total degree <= k in (x - x_i, y - y_j) is fitted by least squares on a
    Chebyshev tensor grid; each monomial x^alpha y^beta is one separable
    term.  If the error measured on the ``check_points``-per-dimension grid
    pair exceeds eps / 2, every cell count grows by one and the fit is
    repeated.  The reported bound is twice the measured error (an
    a-posteriori estimate; derivative bounds for h are not assumed).
    """
    if X.dim != Y.dim:
        raise ParameterError("X and Y must have the same dimension")
    if k_smooth < 0:
        raise ParameterError("k_smooth must be >= 0")
    if X.distance_to_box(Y) <= 0:
        raise GeometryError("X and Y must be disjoint")
    if smooth is None:
        if medium is None:
            raise ParameterError("need a medium or an explicit smooth part")
        smooth = smooth_part(medium)
    d = X.dim
    ell = cell_scale * eps ** (1.0 / (k_smooth + 1))
    cx = tuple(max(1, math.ceil(L / ell - 1e-9)) for L in X.lengths)
    cy = tuple(max(1, math.ceil(L / ell - 1e-9)) for L in Y.lengths)
    xs_chk, ys_chk = sample_grid(X, check_points), sample_grid(Y, check_points)
    for _ in range(max_refine + 1):
        joint, coeffs = _fit_cell_pairs(smooth, X, Y, cx, cy, k_smooth)
        approx = _assemble_taylor(X, Y, cx, cy, joint, coeffs, k_smooth, d)
        err = measure_sup_error(approx, smooth, xs_chk, ys_chk)
        if err <= 0.5 * eps:
            break
        cx = tuple(c + 1 for c in cx)
        cy = tuple(c + 1 for c in cy)
    approx.measured_sup_error = err
    approx.guaranteed_sup_error = 2.0 * err
    approx.params.update(cells_x=cx, cells_y=cy, cell_pairs=int(np.prod(cx) * np.prod(cy)), k=k_smooth)
    return approx


def _assemble_taylor(X, Y, cx, cy, joint, coeffs, k, d):
    """Turn per-cell-pair joint coefficients into factor families + coupling."""
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    alphas = _monomial_exponents(d, k)
    a_index = {a: i for i, a in enumerate(alphas)}
    ncx, ncy = coeffs.shape[:2]
    na = len(alphas)
    rows, cols, vals = [], [], []
    for q, e in enumerate(joint):
        ia, ib = a_index[tuple(e[:d])], a_index[tuple(e[d:])]
        c = coeffs[:, :, q]
        keep = np.abs(c) > 1e-14 * scale
        I, J = np.nonzero(keep)
        rows.append(I * na + ia)
        cols.append(J * na + ib)
        vals.append(c[I, J])
    rows, cols, vals = (np.concatenate(v) if v else np.zeros(0) for v in (rows, cols, vals))
    B = sp.csr_matrix((vals, (rows.astype(int), cols.astype(int))), shape=(ncx * na, ncy * na))
    xf = CellMonomials(X, cx, tuple(np.repeat(np.arange(ncx), na)), tuple(alphas) * ncx)
    yf = CellMonomials(Y, cy, tuple(np.repeat(np.arange(ncy), na)), tuple(alphas) * ncy)
    return SeparableApproximation(xf, yf, B, int(B.nnz), np.inf, dict(terms_per_pair=len(joint)))


# -- 3D spherical harmonic Y_n0 -------------------------------------------------------

def harmonic_target_3d(n: int):
    """Y_n0((x - y) / |x - y|), standard normalisation."""
    norm = math.sqrt((2 * n + 1) / (4 * math.pi))

    def target(x, y):
        dvec = x - y
        c = dvec[..., 2] / np.linalg.norm(dvec, axis=-1)
        return norm * eval_legendre(n, c)
    return target


def cos_power_target(k: int):
    def target(x, y):
        dvec = x - y
        return (dvec[..., 2] / np.linalg.norm(dvec, axis=-1)) ** k
    return target


@lru_cache(maxsize=None)
def _compositions(p: int):
    """All (a1, a2, a3) with sum p and their multinomial weights."""
    out = [(i, j, p - i - j) for i in range(p + 1) for j in range(p + 1 - i)]
    a = np.array(out, dtype=int).reshape(-1, 3)
    w = np.array([math.factorial(p) // (math.factorial(i) * math.factorial(j) * math.factorial(l))
                  for i, j, l in out], float)
    return a, w


def legendre_monomial_coefficients(n: int) -> list:
    """c_nk with P_n(t) = sum_k c_nk t^k (exact, via the Gegenbauer table at lambda = 1/2)."""
    return [float(c) for c in gegenbauer_table(0.5, n).exact[n]]


def _cos_power_terms(k: int, S: int):
    """(x-key, y-key, coefficient) arrays for ((x3 - y3) / |x - y|)^k.

    x-key (m, a, c, d): |x|^(m - a - c - d) x3^a x1^c x2^d.
    y-key (p, a, c, d): |y|^p y3^a y1^c y2^d (p <= 0).
    """
    if k == 0:
        return (np.zeros((1, 4), int), np.zeros((1, 4), int), np.ones(1))
    table = gegenbauer_table(k / 2.0, S)
    xk, yk, cf = [], [], []
    for e in range(k + 1):
        be = math.comb(k, e) * (-1) ** (k - e)
        for s in range(S + 1):
            gs = table.coeffs[s]
            for p in range(s % 2, s + 1, 2):
                g = gs[p]
                if g == 0:
                    continue
                comp, w = _compositions(p)
                cnt = len(w)
                xk.append(np.column_stack([np.full(cnt, e + s), comp[:, 2] + e, comp[:, 0], comp[:, 1]]))
                yk.append(np.column_stack([np.full(cnt, -k - s - p), k - e + comp[:, 2], comp[:, 0], comp[:, 1]]))
                cf.append(be * g * w)
    return np.concatenate(xk), np.concatenate(yk), np.concatenate(cf)


def _monomial_approximation(origin, xkeys, ykeys, coef, guaranteed, params):
    ux, xi = np.unique(xkeys, axis=0, return_inverse=True)
    uy, yi = np.unique(ykeys, axis=0, return_inverse=True)
    B = sp.csr_matrix((coef, (xi.ravel(), yi.ravel())), shape=(len(ux), len(uy)))
    B.sum_duplicates()
    B.eliminate_zeros()
    # x-key m is the total degree; the radial power is m - a - c - d
    xf = CartesianMonomials(origin, tuple(ux[:, 0] - ux[:, 1] - ux[:, 2] - ux[:, 3]),
                            tuple(ux[:, 1]), tuple(ux[:, 2]), tuple(ux[:, 3]))
    yf = CartesianMonomials(origin, tuple(uy[:, 0]), tuple(uy[:, 1]), tuple(uy[:, 2]), tuple(uy[:, 3]))
    live = int(np.count_nonzero(np.diff(B.indptr)))
    params = dict(params, x_keys=[tuple(map(int, r)) for r in ux])
    return SeparableApproximation(xf, yf, B, live, guaranteed, params)


def _cos_power_magnitude(k: int, S: int, r: float) -> float:
    """sum over (e, s, p) of binom(k, e) |g_{s,p}| r^(e+s).

    Bounds sum |coefficient * x-factor * y-factor| over the expansion of t^k
    on X x Y, which is what rounding in the evaluation is proportional to
    (the multinomial split of the Gegenbauer argument adds nothing since
    sum_alpha multinom |x^alpha y^alpha| <= (|x| |y|)^p).
    """
    if k == 0:
        return 1.0
    table = gegenbauer_table(k / 2.0, S)
    row = np.sum(np.abs(table.coeffs), axis=1)           # sum_p |g_{s,p}|
    s = np.arange(S + 1)
    return float(sum(math.comb(k, e) * r ** e for e in range(k + 1)) * np.sum(row * r ** s))


def cos_power_approximation(k: int, S: int, X: BoxDomain, Y: BoxDomain) -> SeparableApproximation:
    """((x3 - y3) / |x - y|)^k with the denominator expanded to Gegenbauer degree S."""
    geo = separation_geometry(X, Y)
    xk, yk, cf = _cos_power_terms(k, S)
    bound = gegenbauer_tail_bound(k, geo.ratio, S)
    return _monomial_approximation(geo.origin, xk, yk, cf, bound, dict(k=k, S=S, ratio=geo.ratio))


def separable_harmonic_3d(n: int, eps: float, X: BoxDomain, Y: BoxDomain,
                          max_n: int = MAX_STABLE_HARMONIC_N) -> SeparableApproximation:
    """Separable approximation of Y_n0((x - y) / |x - y|) on X x Y.

    P_n(t) = sum_k c_nk t^k with t = (x3 - y3) / |x - y|.  Each power t^k is
    expanded with the Gegenbauer generating function for |x - y|^{-k} and
    truncated at degree S_k whose tail bound is eps / (3^n sqrt((2n+1)/4pi));
    since sum_k |c_nk| = |P_n(i)| <= 3^n the total error is at most eps.
    Terms are grouped by their x-monomial |x|^m cos^a sin^b(theta) cos^c sin^d(phi).
    """
    if X.dim != 3:
        raise ParameterError("separable_harmonic_3d needs 3D boxes")
    if n < 1:
        raise ParameterError("n must be >= 1")
    if n > max_n:
        raise RangeError(f"n = {n} exceeds the stable range n <= {max_n} (coefficients grow like 3^n)")
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    geo = separation_geometry(X, Y)
    norm = math.sqrt((2 * n + 1) / (4 * math.pi))
    c_nk = legendre_monomial_coefficients(n)
    budget = eps / (3.0 ** n * norm)
    r = geo.ratio
    xs, ys, cs = [], [], []
    S_k, tails = {}, {}
    total = 0.0
    for k, c in enumerate(c_nk):
        if c == 0:
            continue
        S = truncation_degree(k, r, budget) if k else 0
        S_k[k], tails[k] = S, gegenbauer_tail_bound(k, r, S)
        total += abs(c) * tails[k]
        xk, yk, cf = _cos_power_terms(k, S)
        xs.append(xk)
        ys.append(yk)
        cs.append(norm * c * cf)
    cf = np.concatenate(cs)
    xk_all = np.concatenate(xs)
    N_n = max(k + S for k, S in S_k.items())
    magnitude = norm * sum(abs(c) * _cos_power_magnitude(k, S_k[k], r) for k, c in enumerate(c_nk) if c)
    rounding = 16 * UNIT_ROUNDOFF * (N_n + 1) * magnitude
    guaranteed = norm * total + rounding
    if guaranteed > eps:
        raise RangeError(f"rounding ({rounding:.2e}) swamps the requested eps for n = {n}")
    return _monomial_approximation(geo.origin, xk_all, np.concatenate(ys), cf, guaranteed,
                                   dict(n=n, S_k=S_k, tail_k=tails, N=N_n, ratio=r,
                                        legendre_coefficients=c_nk))
