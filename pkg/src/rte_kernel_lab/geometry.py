"""Domains, cell-centred grids, coefficient fields and the attenuation factor.

Points are plain numpy arrays whose last axis holds the coordinates
(d = 2 or 3).  Every field is a vectorised callable ``field(points)`` that
maps an ``(..., d)`` array to an ``(...)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, ParameterError

_INSIDE_TOL = 1e-12
# max number of (pair x node) field evaluations held in memory at once
_CHUNK = 2_000_000


def as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] not in (2, 3):
        raise ParameterError(f"points must have 2 or 3 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ParameterError("point coordinates must be finite")
    return p


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise ParameterError("box corners must both have 2 or 3 coordinates")
        if not all(np.isfinite(lo + hi)):
            raise ParameterError("box corners must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ParameterError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.lengths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def radius(self) -> float:
        """Largest distance from the centre to a point of the box."""
        return 0.5 * self.diam

    def contains(self, p, tol: float = _INSIDE_TOL) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all((p >= np.asarray(self.lo) - tol) & (p <= np.asarray(self.hi) + tol), axis=-1)

    def distance_to_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        gap = np.maximum(np.asarray(self.lo) - p, 0.0) + np.maximum(p - np.asarray(self.hi), 0.0)
        return np.linalg.norm(gap, axis=-1)

    def distance_to_box(self, other: "BoxDomain") -> float:
        gap = np.maximum(np.asarray(self.lo) - np.asarray(other.hi), 0.0)
        gap += np.maximum(np.asarray(other.lo) - np.asarray(self.hi), 0.0)
        return float(np.linalg.norm(gap))

    def shifted(self, offset) -> "BoxDomain":
        offset = np.asarray(offset, dtype=float)
        return BoxDomain(tuple(np.asarray(self.lo) + offset), tuple(np.asarray(self.hi) + offset))


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid.

    Centres are ordered lexicographically with the first coordinate varying
    fastest, so a grid function stored as a flat vector reshapes to
    ``values.reshape(cells_per_dim[::-1])``.
    """

    domain: BoxDomain
    cells_per_dim: tuple

    def __post_init__(self):
        cells = self.cells_per_dim
        if np.isscalar(cells):
            cells = (int(cells),) * self.domain.dim
        cells = tuple(int(c) for c in cells)
        if len(cells) != self.domain.dim:
            raise ParameterError(f"need {self.domain.dim} cell counts, got {len(cells)}")
        if any(c < 1 for c in cells):
            raise ParameterError(f"cell counts must be >= 1, got {cells}")
        object.__setattr__(self, "cells_per_dim", cells)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def h(self) -> np.ndarray:
        return self.domain.lengths / np.asarray(self.cells_per_dim)

    @property
    def size(self) -> int:
        return int(np.prod(self.cells_per_dim))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axes(self) -> list:
        return [lo + (np.arange(m) + 0.5) * h
                for lo, m, h in zip(self.domain.lo, self.cells_per_dim, self.h)]

    @cached_property
    def centers(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes()[::-1], indexing="ij")
        return np.stack([m.ravel() for m in mesh[::-1]], axis=-1)


def make_grid(domain: BoxDomain, cells_per_dim) -> Grid:
    return Grid(domain, cells_per_dim)


# -- coefficient fields -------------------------------------------------------

@dataclass(frozen=True)
class ConstantField:
    value: float

    @property
    def constant(self) -> Optional[float]:
        return float(self.value)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], float(self.value))


@dataclass(frozen=True)
class LinearField:
    """``value + gradient . (p - origin)``."""

    value: float
    gradient: tuple
    origin: tuple = (0.0, 0.0, 0.0)

    @property
    def constant(self) -> Optional[float]:
        return float(self.value) if not np.any(self.gradient) else None

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        d = p.shape[-1]
        g = np.asarray(self.gradient, dtype=float)[:d]
        o = np.asarray(self.origin, dtype=float)[:d]
        return self.value + (p - o) @ g


@dataclass(frozen=True)
class FunctionField:
    """Wraps an arbitrary vectorised callable."""

    fn: Callable
    constant: Optional[float] = None

    def __call__(self, p):
        return np.asarray(self.fn(np.asarray(p, dtype=float)), dtype=float)


class RasterField:
    """Multilinear interpolation of samples on the nodes of a regular raster.

    ``values[i1, i2(, i3)]`` is the sample at ``lo + i * (hi - lo) / (n - 1)``
    along each axis, so axis k of the array runs along coordinate k.
    """

    constant = None

    def __init__(self, values, domain: BoxDomain):
        values = np.asarray(values, dtype=float)
        if values.ndim != domain.dim:
            raise ParameterError("raster rank must match the domain dimension")
        if min(values.shape) < 2:
            raise ParameterError("raster needs at least two samples per axis")
        self.values = values
        self.domain = domain
        axes = [np.linspace(lo, hi, m) for lo, hi, m in zip(domain.lo, domain.hi, values.shape)]
        self._interp = RegularGridInterpolator(axes, values, method="linear",
                                               bounds_error=False, fill_value=None)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        lo, hi = np.asarray(self.domain.lo), np.asarray(self.domain.hi)
        flat = np.clip(p.reshape(-1, p.shape[-1]), lo, hi)
        return self._interp(flat).reshape(p.shape[:-1])


def _as_field(f):
    if isinstance(f, (int, float)):
        return ConstantField(float(f))
    if hasattr(f, "constant"):
        return f
    return FunctionField(f)


@dataclass(frozen=True)
class MediumField:
    """Total and scattering coefficients on a box domain.

    On construction the admissibility bounds ``sigma0 <= sigma_s < sigma_t
    <= sigma1`` and ``sup sigma_s / sigma_t <= k0 < 1`` are checked on a
    dense sample grid (skipped for fields that are exactly constant, which
    are checked directly).  ``validate=False`` turns the check off; tests use
    that for vacuum or scattering-free media.
    """

    domain: BoxDomain
    sigma_t: object
    sigma_s: object = 0.0
    bounds: Optional[tuple] = None
    validate: bool = True
    samples_per_dim: int = 256
    measured: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma_t", _as_field(self.sigma_t))
        object.__setattr__(self, "sigma_s", _as_field(self.sigma_s))
        if self.validate:
            self._check_bounds()

    @property
    def dim(self) -> int:
        return self.domain.dim

    def _sample_ranges(self):
        st, ss = self.sigma_t, self.sigma_s
        if st.constant is not None and ss.constant is not None:
            t, s = st.constant, ss.constant
            return t, t, s, s, s / t if t > 0 else np.inf
        axes = [np.linspace(lo, hi, self.samples_per_dim)
                for lo, hi in zip(self.domain.lo, self.domain.hi)]
        t_min, t_max, s_min, s_max, ratio = np.inf, -np.inf, np.inf, -np.inf, -np.inf
        # slab by slab along the first axis keeps memory bounded in 3D
        for a0 in axes[0]:
            mesh = np.meshgrid(*axes[1:], indexing="ij")
            pts = np.stack([np.full(mesh[0].shape, a0)] + list(mesh), axis=-1)
            t, s = st(pts), ss(pts)
            t_min, t_max = min(t_min, t.min()), max(t_max, t.max())
            s_min, s_max = min(s_min, s.min()), max(s_max, s.max())
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = max(ratio, np.max(np.where(t > 0, s / t, np.inf)))
        return t_min, t_max, s_min, s_max, ratio

    def _check_bounds(self):
        t_min, t_max, s_min, s_max, k = self._sample_ranges()
        self.measured.update(sigma_t=(t_min, t_max), sigma_s=(s_min, s_max), k0=k)
        if self.bounds is None:
            sigma0, sigma1, k0 = s_min, t_max, k
        else:
            sigma0, sigma1, k0 = self.bounds
        if t_min <= 0:
            raise ParameterError("sigma_t must be positive (vacuum regions are not supported)")
        if s_min < 0:
            raise ParameterError("sigma_s must be non-negative")
        if not k0 < 1:
            raise ParameterError(f"need sup sigma_s/sigma_t = k0 < 1, got {k0:.6g}")
        tol = 1e-12 * max(1.0, t_max)
        if s_min < sigma0 - tol or t_max > sigma1 + tol or k > k0 + 1e-12:
            raise ParameterError(
                f"coefficients violate bounds (sigma0, sigma1, k0)={tuple(self.bounds)}: "
                f"sigma_s min {s_min:.6g}, sigma_t max {t_max:.6g}, ratio {k:.6g}")

    @property
    def k0(self) -> float:
        if "k0" not in self.measured:
            self.measured["k0"] = self._sample_ranges()[4]
        return float(self.measured["k0"])


def constant_medium(domain: BoxDomain, sigma_t: float, sigma_s: float = 0.0, **kw) -> MediumField:
    return MediumField(domain, ConstantField(sigma_t), ConstantField(sigma_s), **kw)


@dataclass(frozen=True)
class SegmentQuadrature:
    """Gauss-Legendre rule on [0, 1]."""

    node_count: int = 16

    def __post_init__(self):
        if int(self.node_count) < 1:
            raise ParameterError("node_count must be positive")

    @cached_property
    def nodes_weights(self):
        x, w = np.polynomial.legendre.leggauss(int(self.node_count))
        return 0.5 * (x + 1.0), 0.5 * w

    @property
    def nodes(self) -> np.ndarray:
        return self.nodes_weights[0]

    @property
    def weights(self) -> np.ndarray:
        return self.nodes_weights[1]


DEFAULT_QUADRATURE = SegmentQuadrature(16)


def _check_inside(domain: BoxDomain, p: np.ndarray, name: str):
    if not np.all(domain.contains(p)):
        raise DomainError(f"{name} has points outside the domain {domain.lo}-{domain.hi}")


def optical_depth(medium: MediumField, x, y, quad: SegmentQuadrature = DEFAULT_QUADRATURE,
                  check: bool = True) -> np.ndarray:
    """Line integral of sigma_t along the segment from x to y (broadcasting)."""
    x, y = as_points(x), as_points(y)
    if check:
        _check_inside(medium.domain, x, "x")
        _check_inside(medium.domain, y, "y")
    diff = y - x
    r = np.linalg.norm(diff, axis=-1)
    c = medium.sigma_t.constant
    if c is not None:
        return c * r
    x, diff = np.broadcast_arrays(x, diff)
    shape = diff.shape[:-1]
    x2, d2 = x.reshape(-1, x.shape[-1]), diff.reshape(-1, diff.shape[-1])
    s, w = quad.nodes, quad.weights
    out = np.empty(len(x2))
    step = max(1, _CHUNK // len(s))
    for a in range(0, len(x2), step):
        b = min(a + step, len(x2))
        pts = x2[a:b, None, :] + s[None, :, None] * d2[a:b, None, :]
        out[a:b] = medium.sigma_t(pts) @ w
    return out.reshape(shape) * r


def attenuation(medium: MediumField, x, y, quad: SegmentQuadrature = DEFAULT_QUADRATURE,
                check: bool = True) -> np.ndarray:
    """E(x, y) = exp(-|x - y| * mean of sigma_t over the segment)."""
    return np.exp(-optical_depth(medium, x, y, quad, check))
