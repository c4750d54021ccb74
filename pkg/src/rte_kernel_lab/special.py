"""Legendre and Gegenbauer polynomials, spherical harmonics, 3j symbols.

Spherical harmonics come in two normalisations:

* ``"unit"`` (default): orthonormal for the normalised measure
  ``dv = sin theta d theta d phi / 4 pi``, so ``Y_00 = 1`` and
  ``Y_n0 = sqrt(2n + 1) P_n(cos theta)``;
* ``"standard"``: the usual orthonormal harmonics for ``sin theta d theta d phi``.
  They differ from the unit ones by a factor ``1 / sqrt(4 pi)``.  Formulas
  that carry an explicit 1/(4 pi) (the 3D kernels and the mu constants) use
  this one.

Both carry the Condon-Shortley phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ParameterError, RangeError

FOUR_PI = 4.0 * np.pi


def legendre(n: int, z):
    """P_n(z) by the three-term recurrence; z may be complex."""
    if n < 0:
        raise ParameterError("degree must be non-negative")
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        z = z.astype(float)
    p_prev, p = np.ones_like(z), z.copy()
    if n == 0:
        return p_prev
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * z * p - k * p_prev) / (k + 1)
    return p


def legendre_all(n_max: int, x) -> np.ndarray:
    """Stack of P_0..P_{n_max} evaluated at x, shape (n_max + 1, *x.shape)."""
    x = np.asarray(x)
    out = np.empty((n_max + 1,) + x.shape, dtype=np.result_type(x, float))
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out


# -- Gegenbauer ------------------------------------------------------------------

@dataclass(frozen=True)
class GegenbauerTable:
    """Monomial coefficients of C_s^lambda for s = 0..max_degree.

    ``coeffs[s, t]`` is the coefficient of x**t in C_s^lambda(x).  The table
    is built in exact rational arithmetic (``exact``) so the alternating
    coefficients carry no rounding; ``coeffs`` is the float image.
    """

    lam: float
    max_degree: int
    coeffs: np.ndarray
    exact: tuple

    def value_at_one(self, s: int) -> float:
        """C_s^lambda(1) = prod_{i<s} (2 lambda + i) / s!."""
        return float(_gegenbauer_at_one(Fraction(self.lam), s))

    def values(self, x) -> np.ndarray:
        """All C_s^lambda(x), s <= max_degree, via the stable recurrence."""
        return gegenbauer_values(self.lam, self.max_degree, x)

    def horner(self, s: int, x):
        """Evaluate degree s from the stored monomial coefficients."""
        return np.polynomial.polynomial.polyval(np.asarray(x), self.coeffs[s, : s + 1])

    def fourier_coefficients(self, s: int) -> dict:
        """Exact a_f with C_s(cos w) = sum_f a_f exp(i f w), f = s, s-2, ..., -s.

        Obtained by writing x**t = ((e^{iw} + e^{-iw}) / 2)**t and collecting.
        """
        out = {}
        for t, c in enumerate(self.exact[s]):
            if c == 0:
                continue
            scale = c / (2 ** t)
            for l in range(t + 1):
                f = t - 2 * l
                out[f] = out.get(f, 0) + scale * math.comb(t, l)
        return out


def _gegenbauer_at_one(lam: Fraction, s: int) -> Fraction:
    v = Fraction(1)
    for i in range(s):
        v *= (2 * lam + i)
    return v / math.factorial(s)


@lru_cache(maxsize=64)
def _exact_table(lam: Fraction, max_degree: int) -> tuple:
    rows = [[Fraction(1)]]
    if max_degree >= 1:
        rows.append([Fraction(0), 2 * lam])
    for s in range(2, max_degree + 1):
        a = Fraction(2) * (s + lam - 1) / s
        b = (s + 2 * lam - 2) / Fraction(s)
        prev, prev2 = rows[s - 1], rows[s - 2]
        row = [Fraction(0)] * (s + 1)
        for t, c in enumerate(prev):
            row[t + 1] += a * c
        for t, c in enumerate(prev2):
            row[t] -= b * c
        rows.append(row)
    return tuple(tuple(r) for r in rows)


def gegenbauer_table(lam: float, max_degree: int) -> GegenbauerTable:
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    if max_degree < 0:
        raise ParameterError("max_degree must be non-negative")
    exact = _exact_table(Fraction(lam), int(max_degree))
    coeffs = np.zeros((max_degree + 1, max_degree + 1))
    for s, row in enumerate(exact):
        for t, c in enumerate(row):
            if c == 0:
                continue
            try:
                v = float(c)
            except OverflowError as exc:
                raise RangeError(f"C_{s}^{lam} coefficient of x^{t} overflows a double") from exc
            if not math.isfinite(v) or abs(v) > 1e300:
                raise RangeError(f"C_{s}^{lam} coefficient of x^{t} overflows a double")
            coeffs[s, t] = v
    return GegenbauerTable(float(lam), int(max_degree), coeffs, exact)


def gegenbauer_values(lam: float, max_degree: int, x) -> np.ndarray:
    x = np.asarray(x)
    out = np.empty((max_degree + 1,) + x.shape, dtype=np.result_type(x, float))
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = 2.0 * lam * x
    for s in range(2, max_degree + 1):
        out[s] = (2.0 * (s + lam - 1) * x * out[s - 1] - (s + 2 * lam - 2) * out[s - 2]) / s
    return out


# -- spherical harmonics ------------------------------------------------------------

def _assoc_legendre_normalized(n: int, m: int, x: np.ndarray) -> np.ndarray:
    """sqrt((2n+1)/(4pi) (n-m)!/(n+m)!) P_n^m(x), Condon-Shortley phase, m >= 0."""
    somx2 = np.sqrt(np.clip((1.0 - x) * (1.0 + x), 0.0, None))
    pmm = np.full_like(x, math.sqrt((2 * m + 1) / FOUR_PI))
    fact = 1.0
    for _ in range(m):
        pmm = -pmm * math.sqrt(fact / (fact + 1.0)) * somx2
        fact += 2.0
    if n == m:
        return pmm
    pmmp1 = x * math.sqrt(2 * m + 3) * pmm
    if n == m + 1:
        return pmmp1
    for ll in range(m + 2, n + 1):
        a = math.sqrt((4 * ll * ll - 1) / (ll * ll - m * m))
        b = math.sqrt(((ll - 1) ** 2 - m * m) / (4 * (ll - 1) ** 2 - 1))
        pmm, pmmp1 = pmmp1, a * (x * pmmp1 - b * pmm)
    return pmmp1


def spherical_harmonic(n: int, m: int, theta, phi, normalization: str = "unit"):
    if n < 0 or abs(m) > n:
        raise ParameterError(f"need |m| <= n and n >= 0, got n={n}, m={m}")
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    plm = _assoc_legendre_normalized(n, abs(m), np.cos(theta))
    y = plm * np.exp(1j * abs(m) * phi)
    if m < 0:
        y = (-1) ** abs(m) * np.conj(y)
    if normalization == "unit":
        return y * math.sqrt(FOUR_PI)
    if normalization == "standard":
        return y
    raise ParameterError(f"unknown normalization {normalization!r}")


def direction_angles(v) -> tuple:
    """Polar and azimuthal angles of the (not necessarily unit) vectors v."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    theta = np.arccos(np.clip(v[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(v[..., 1], v[..., 0])
    return theta, phi


# -- 3j symbols ---------------------------------------------------------------------

def _selection_ok(j1, j2, j3, m1, m2, m3) -> bool:
    if m1 + m2 + m3 != 0:
        return False
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return False
    if not abs(j1 - j2) <= j3 <= j1 + j2:
        return False
    return min(j1, j2, j3) >= 0


@lru_cache(maxsize=65536)
def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol for integer arguments (Racah single sum).

    The alternating sum is done in exact rational arithmetic; the square-root
    prefactor is accumulated in log-gamma space so large j do not overflow.
    """
    args = (j1, j2, j3, m1, m2, m3)
    if any(int(a) != a for a in args):
        raise ParameterError("only integer arguments are supported")
    j1, j2, j3, m1, m2, m3 = (int(a) for a in args)
    if not _selection_ok(j1, j2, j3, m1, m2, m3):
        return 0.0
    kmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    kmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    f = math.factorial
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (f(k) * f(j3 - j2 + k + m1) * f(j3 - j1 + k - m2) * f(j1 + j2 - j3 - k)
               * f(j1 - k - m1) * f(j2 - k + m2))
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0.0
    lg = math.lgamma
    log_pref = 0.5 * (lg(j1 + j2 - j3 + 1) + lg(j1 - j2 + j3 + 1) + lg(-j1 + j2 + j3 + 1)
                      - lg(j1 + j2 + j3 + 2)
                      + lg(j1 + m1 + 1) + lg(j1 - m1 + 1) + lg(j2 + m2 + 1)
                      + lg(j2 - m2 + 1) + lg(j3 + m3 + 1) + lg(j3 - m3 + 1))
    log_sum = math.log(abs(total.numerator)) - math.log(total.denominator)
    sign = (-1) ** ((j1 - j2 - m3) % 2) * (1 if total > 0 else -1)
    return sign * math.exp(log_pref + log_sum)


def mu_constant(n: int, m: int, k: int, l: int, r: int, s: int) -> float:
    """Coupling constant of Y_nm Y*_kl = sum_rs mu Y_rs (standard harmonics)."""
    if m - l - s != 0 or not abs(n - k) <= r <= n + k or abs(s) > r:
        return 0.0
    pref = math.sqrt((2 * n + 1) * (2 * k + 1) * (2 * r + 1) / FOUR_PI)
    return pref * (-1) ** ((s + l) % 2) * wigner3j(n, k, r, m, -l, -s) * wigner3j(n, k, r, 0, 0, 0)


def product_expansion(n: int, m: int, k: int, l: int) -> dict:
    """Non-zero mu constants {(r, s): mu} expanding Y_nm Y*_kl."""
    s = m - l
    out = {}
    for r in range(abs(n - k), n + k + 1):
        if abs(s) > r:
            continue
        v = mu_constant(n, m, k, l, r, s)
        if v != 0.0:
            out[(r, s)] = v
    return out


def yn0_weighted_integral(f, n: int, n_theta: int | None = None, n_phi: int = 64) -> float:
    """Integral of |Y_n0|^2 f over the sphere for the normalised measure.

    ``f(theta, phi)`` must be vectorised.  Gauss-Legendre in theta, the
    periodic trapezoid rule in phi.
    """
    if n_theta is None:
        n_theta = 4 * n + 200
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    fv = np.broadcast_to(np.asarray(f(T, P), dtype=float), T.shape)
    ftheta = fv.mean(axis=1)  # (1/2pi) * integral over phi
    pn = legendre(n, np.cos(theta))
    # (2n+1)/(4pi) * 2pi * int P_n^2 f~ sin
    return float(0.5 * (2 * n + 1) * np.sum(wt * pn * pn * ftheta * np.sin(theta)))


def yn0_limit(f, n_theta: int = 2000, n_phi: int = 64) -> float:
    """The large-n limit (1 / 2 pi^2) * int int f d phi d theta."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    fv = np.broadcast_to(np.asarray(f(T, P), dtype=float), T.shape)
    return float(np.sum(wt * fv.mean(axis=1)) * 2.0 * np.pi / (2.0 * np.pi ** 2))
