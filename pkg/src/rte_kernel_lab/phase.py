"""Scattering phase functions and their truncated Fourier/Legendre expansions.

The surface measure is normalised (``d theta / 2 pi`` in 2D,
``sin theta d theta d phi / 4 pi`` in 3D), so every phase function
integrates to one and the leading coefficient chi_0 is 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev, legendre as npleg

from .errors import ParameterError


@dataclass(frozen=True)
class PhaseExpansion:
    """Coefficients chi_0..chi_{M-1} of an M-term truncated phase function."""

    dim: int
    chi: tuple

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        chi = tuple(float(c) for c in self.chi)
        if not chi:
            raise ParameterError("need at least one coefficient")
        if abs(chi[0] - 1.0) > 1e-12:
            raise ParameterError(f"chi_0 must be 1 (normalisation), got {chi[0]}")
        object.__setattr__(self, "chi", chi)

    @property
    def M(self) -> int:
        return len(self.chi)

    def chi_abs(self, n: int) -> float:
        """chi_{|n|}, zero outside the truncation."""
        n = abs(int(n))
        return self.chi[n] if n < self.M else 0.0


def hg_phase(g: float, cos_theta, dim: int = 2):
    """Untruncated Henyey-Greenstein phase function."""
    _check_g(g)
    c = np.asarray(cos_theta, dtype=float)
    base = 1.0 + g * g - 2.0 * g * c
    if dim == 2:
        return (1.0 - g * g) / base
    if dim == 3:
        return (1.0 - g * g) / base ** 1.5
    raise ParameterError(f"dim must be 2 or 3, got {dim}")


def _check_g(g):
    if not -1.0 < g < 1.0:
        raise ParameterError(f"anisotropy factor must satisfy |g| < 1, got {g}")


def hg_coefficients(g: float, M: int, dim: int = 2) -> PhaseExpansion:
    """Henyey-Greenstein expansion: chi_n = g**n in both 2D and 3D."""
    _check_g(g)
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    return PhaseExpansion(dim, tuple(float(g) ** n for n in range(M)))


def rayleigh(dim: int = 3) -> PhaseExpansion:
    """3/4 (1 + cos^2 theta) = 1 + P_2 / 2, so chi_2 = (1/2) / 5 in the sum of (2n+1) chi_n P_n."""
    if dim != 3:
        raise ParameterError("the Rayleigh coefficients are defined for the 3D expansion")
    return PhaseExpansion(3, (1.0, 0.0, 0.1))


def _series_weights(p: PhaseExpansion) -> np.ndarray:
    n = np.arange(p.M)
    chi = np.asarray(p.chi)
    if p.dim == 2:
        return np.where(n == 0, 1.0, 2.0) * chi
    return (2 * n + 1) * chi


def evaluate_truncated(p: PhaseExpansion, cos_theta):
    """p_M(cos theta); cos(n theta) is evaluated as the Chebyshev T_n."""
    c = np.asarray(cos_theta, dtype=float)
    if np.any(np.abs(c) > 1.0 + 1e-12):
        raise ParameterError("cos_theta must lie in [-1, 1]")
    c = np.clip(c, -1.0, 1.0)
    w = _series_weights(p)
    if p.dim == 2:
        return chebyshev.chebval(c, w)
    return npleg.legval(c, w)


@dataclass(frozen=True)
class PositivityReport:
    nonneg: bool
    min_value: float
    argmin_theta: float


def positivity_check(p: PhaseExpansion, samples: int = 100_000, tol: float = 1e-12) -> PositivityReport:
    """Minimum of p_M over a uniform theta grid on [0, pi] (p_M is even in theta)."""
    if samples < 2:
        raise ParameterError("need at least 2 samples")
    theta = np.linspace(0.0, np.pi, int(samples))
    vals = evaluate_truncated(p, np.cos(theta))
    i = int(np.argmin(vals))
    return PositivityReport(bool(vals[i] >= -tol), float(vals[i]), float(theta[i]))


@dataclass(frozen=True)
class DeltaM:
    modified_expansion: PhaseExpansion
    sigma_scale: float
    forward_weight: float


def delta_m_transform(g: float, M: int, dim: int = 2) -> DeltaM:
    """delta-M split of a Henyey-Greenstein function.

    The forward peak takes weight w = chi_M = g**M; the smooth remainder has
    coefficients (chi_n - w) / (1 - w).  The caller rescales the medium as
    sigma_s <- (1 - w) sigma_s and sigma_t <- sigma_t - w sigma_s.
    """
    _check_g(g)
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    w = float(g) ** M
    if w >= 1.0:
        raise ParameterError(f"forward weight {w} must be < 1")
    chi = tuple((float(g) ** n - w) / (1.0 - w) for n in range(M))
    return DeltaM(PhaseExpansion(dim, chi), 1.0 - w, w)


def phase_from_spec(spec: dict, dim: int = 2):
    """Build an expansion from a run-file phase table.

    Returns ``(expansion, forward_weight)``; the weight is 0 unless
    ``delta_m`` is requested.
    """
    kind = spec.get("kind", "hg")
    M = int(spec.get("M", 1))
    delta = bool(spec.get("delta_m", False))
    if kind == "hg":
        g = float(spec["g"])
        if delta:
            dm = delta_m_transform(g, M, dim)
            return dm.modified_expansion, dm.forward_weight
        return hg_coefficients(g, M, dim), 0.0
    if delta:
        raise ParameterError("delta_m is only defined for kind = 'hg'")
    if kind == "rayleigh":
        return rayleigh(dim), 0.0
    if kind == "custom":
        return PhaseExpansion(dim, tuple(spec["chi"])), 0.0
    raise ParameterError(f"unknown phase kind {kind!r}")
