"""Nyström discretisation and solution of the 2D moment system (I - LD) U = LQ.

Unknowns are the angular Fourier moments u_n, |n| < M, stored as cell
values on a square-cell grid.  ``L`` is the operator Toeplitz matrix with
blocks ``L[k, n] = K_{k-n}`` and ``D`` multiplies mode n by chi_|n| sigma_s.
Only K_0..K_{2(M-1)} are ever computed; K_{-m} = conj(K_m) is applied as
``conj(K_m @ conj(v))``.

An independent discrete-ordinates solver (ray marching of the
characteristic form plus source iteration) serves as a reference.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConvergenceError, ParameterError, ResourceError
from .geometry import DEFAULT_QUADRATURE, FunctionField, Grid, MediumField, SegmentQuadrature, attenuation
from .phase import PhaseExpansion, positivity_check

TWO_PI = 2.0 * np.pi
DEFAULT_MEMORY_BUDGET = 2 * 1024 ** 3


# -- moment fields ---------------------------------------------------------------

def mode_indices(M: int) -> tuple:
    return tuple(range(-(M - 1), M))


@dataclass
class MomentField:
    """Complex grid functions (u_n) for n in ``modes`` (symmetric about 0)."""

    grid: Grid
    modes: tuple
    values: np.ndarray

    def __post_init__(self):
        self.modes = tuple(int(n) for n in self.modes)
        if self.modes != tuple(range(-max(self.modes), max(self.modes) + 1)):
            raise ParameterError(f"modes must be -K..K, got {self.modes}")
        self.values = np.asarray(self.values, dtype=complex).reshape(len(self.modes), self.grid.size)

    @property
    def M(self) -> int:
        return max(self.modes) + 1

    def index(self, n: int) -> int:
        return self.modes.index(int(n))

    def __getitem__(self, n: int) -> np.ndarray:
        return self.values[self.index(n)]

    @classmethod
    def zeros(cls, grid: Grid, M: int) -> "MomentField":
        return cls(grid, mode_indices(M), np.zeros((2 * M - 1, grid.size), complex))

    @classmethod
    def from_sources(cls, grid: Grid, M: int, sources: dict) -> "MomentField":
        """Build a field from ``{n: constant | array | callable(points)}``.

        A mode given only for one sign gets its partner by conjugation;
        modes outside |n| < M are rejected since the formulation assumes
        they vanish.
        """
        field_ = cls.zeros(grid, M)
        given = {}
        for n, src in sources.items():
            n = int(n)
            if abs(n) >= M:
                raise ParameterError(f"source mode {n} lies outside |n| < M = {M}")
            if callable(src):
                vals = np.asarray(src(grid.centers), dtype=complex)
            else:
                vals = np.broadcast_to(np.asarray(src, dtype=complex), (grid.size,))
            given[n] = vals
        for n, vals in given.items():
            if -n in given and not np.allclose(given[-n], np.conj(vals), atol=1e-14, rtol=0):
                raise ParameterError(f"source modes {n} and {-n} are not complex conjugates")
            field_.values[field_.index(n)] = vals
            field_.values[field_.index(-n)] = np.conj(vals)
        return field_

    def norm(self) -> float:
        """V-norm: sqrt(sum_n ||u_n||^2_{L2})."""
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def conjugate_symmetry_error(self) -> float:
        return float(np.max(np.abs(self.values[::-1] - np.conj(self.values)))) if self.values.size else 0.0

    def symmetrized(self) -> "MomentField":
        return MomentField(self.grid, self.modes, 0.5 * (self.values + np.conj(self.values[::-1])))


def _project_v(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + np.conj(values[::-1]))


def delta_m_medium(medium: MediumField, forward_weight: float) -> MediumField:
    """Absorb a forward peak of weight w: sigma_s <- (1 - w) sigma_s, sigma_t <- sigma_t - w sigma_s."""
    w = float(forward_weight)
    if not 0.0 <= w < 1.0:
        raise ParameterError(f"forward weight must lie in [0, 1), got {w}")
    if w == 0.0:
        return medium
    st, ss = medium.sigma_t, medium.sigma_s
    if st.constant is not None and ss.constant is not None:
        return MediumField(medium.domain, st.constant - w * ss.constant, (1 - w) * ss.constant)
    return MediumField(medium.domain, FunctionField(lambda p: st(p) - w * ss(p)),
                       FunctionField(lambda p: (1 - w) * ss(p)))


# -- self-cell rules ----------------------------------------------------------------

LATTICE_C0 = 3.900264920001956  # -4 zeta(1/2) beta(1/2)


@lru_cache(maxsize=None)
def lattice_correction(m: int, K: int = 80) -> float:
    """Limit of (integral - punctured midpoint sum) / h for exp(-i m theta) / r.

    Zero unless 4 | m (the lattice sum and the integral both cancel under a
    quarter turn).  m = 0 has the closed form -4 zeta(1/2) beta(1/2); other
    multiples of 4 are computed once by summing exact cell integrals near the
    origin plus the leading midpoint-error term further out, with a
    Richardson step in the truncation radius.
    """
    m = abs(int(m))
    if m % 4:
        return 0.0
    if m == 0:
        return LATTICE_C0

    from scipy import integrate

    def self_cell():
        f = lambda th: np.cos(m * th) * 0.5 / max(abs(np.cos(th)), abs(np.sin(th)))
        pts = [np.pi / 4 * k for k in range(1, 8)]
        return integrate.quad(f, 0, TWO_PI, limit=400, points=pts)[0]

    xg, wg = np.polynomial.legendre.leggauss(16)
    xg, wg = 0.5 * xg, 0.5 * wg
    W = np.outer(wg, wg)

    def total(K):
        s = self_cell()
        idx = np.arange(-K, K + 1)
        I, J = np.meshgrid(idx, idx, indexing="ij")
        near = (np.maximum(abs(I), abs(J)) <= 6) & ~((I == 0) & (J == 0))
        for i, j in zip(I[near], J[near]):
            X, Y = np.meshgrid(i + xg, j + xg, indexing="ij")
            cell = np.sum(W * np.cos(m * np.arctan2(Y, X)) / np.hypot(X, Y))
            s += cell - np.cos(m * math.atan2(j, i)) / math.hypot(i, j)
        far = np.maximum(abs(I), abs(J)) > 6
        r, th = np.hypot(I[far], J[far]), np.arctan2(J[far], I[far])
        # midpoint-rule error on a unit cell: Laplacian / 24
        s += np.sum((1 - m * m) / 24.0 * np.cos(m * th) / r ** 3)
        return s

    return float(2 * total(K) - total(K // 2))


# -- operator system ----------------------------------------------------------------

@dataclass
class OperatorSystem:
    grid: Grid
    medium: MediumField
    phase: PhaseExpansion
    modes: tuple
    kernel_blocks: dict          # m >= 0 -> dense K_m (includes 1/2pi and h^2)
    d_diag: np.ndarray           # (n_modes, n_cells) chi_|n| sigma_s
    self_cell: str = "disc"

    @property
    def M(self) -> int:
        return self.phase.M

    @property
    def distinct_kernels(self) -> tuple:
        top = max(self.kernel_blocks)
        return tuple(range(-top, top + 1))

    @property
    def computed_kernels(self) -> tuple:
        return tuple(sorted(self.kernel_blocks))

    def kernel(self, m: int) -> np.ndarray:
        """K_m as a dense matrix (negative m materialised by conjugation)."""
        return self.kernel_blocks[m] if m >= 0 else np.conj(self.kernel_blocks[-m])

    def _apply_k(self, m, V):
        # V: (n_cells, n_cols)
        if m >= 0:
            return self.kernel_blocks[m] @ V
        return np.conj(self.kernel_blocks[-m] @ np.conj(V))

    def apply_L(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V, dtype=complex)
        nm = len(self.modes)
        out = np.zeros_like(V)
        # group by kernel index so each K_m is applied once to a block of columns
        for m in self.distinct_kernels:
            pairs = [(k, k - m) for k in range(nm) if 0 <= k - m < nm]
            if not pairs:
                continue
            cols = np.stack([V[n] for _, n in pairs], axis=1)
            res = self._apply_k(m, cols)
            for c, (k, _) in enumerate(pairs):
                out[k] += res[:, c]
        return out

    def apply_LD(self, V: np.ndarray) -> np.ndarray:
        return self.apply_L(self.d_diag * V)

    def apply_LD_adjoint(self, V: np.ndarray) -> np.ndarray:
        # (L^H)[n, k] = K_{k-n}^H
        V = np.asarray(V, dtype=complex)
        nm = len(self.modes)
        out = np.zeros_like(V)
        for k in range(nm):
            for n in range(nm):
                Km = self.kernel(k - n)
                out[n] += Km.conj().T @ V[k]
        return self.d_diag * out

    def materialize_L(self) -> np.ndarray:
        nm, N = len(self.modes), self.grid.size
        big = np.empty((nm * N, nm * N), dtype=complex)
        for k in range(nm):
            for n in range(nm):
                big[k * N:(k + 1) * N, n * N:(n + 1) * N] = self.kernel(k - n)
        return big


def _check_square(grid: Grid):
    if grid.dim != 2:
        raise ParameterError("the moment system is implemented in 2D only")
    h = grid.h
    if not np.isclose(h[0], h[1], rtol=1e-12, atol=0):
        raise ParameterError(f"grid cells must be square, got h = {tuple(h)}")
    return float(h[0])


def assemble_system(grid: Grid, medium: MediumField, phase: PhaseExpansion,
                    self_cell: str = "disc", quad: SegmentQuadrature = DEFAULT_QUADRATURE,
                    memory_budget: float = DEFAULT_MEMORY_BUDGET) -> OperatorSystem:
    """Nyström/midpoint discretisation of the coupled moment equations.

    Off-diagonal entries are (1/2pi) G_m(x_i, x_j) h^2.  The self cell uses
    ``self_cell``:

    ``"disc"``      equal-area disc of radius R = h / sqrt(pi):
                    (1 - exp(-sigma_t R)) / sigma_t for m = 0, zero otherwise.
    ``"corrected"`` punctured-lattice correction of the midpoint rule:
                    (c_m h - [m = 0] sigma_t h^2) / 2pi, which removes the
                    O(h) error of the disc rule.
    """
    if phase.dim != 2:
        raise ParameterError("phase expansion must be two-dimensional")
    h = _check_square(grid)
    M = phase.M
    top = 2 * (M - 1)
    N = grid.size
    need = (top + 2) * N * N * 16
    if need > memory_budget:
        raise ResourceError(f"assembly needs ~{need / 2**30:.2f} GiB, budget {memory_budget / 2**30:.2f} GiB")

    x = grid.centers
    d = x[:, None, :] - x[None, :, :]
    r = np.hypot(d[..., 0], d[..., 1])
    theta = np.arctan2(d[..., 1], d[..., 0])
    del d
    np.fill_diagonal(r, 1.0)
    E = attenuation(medium, x[:, None, :], x[None, :, :], quad, check=False)
    base = E / r * (h * h / TWO_PI)
    del E, r
    sig_t = medium.sigma_t(x)

    blocks = {}
    for m in range(top + 1):
        K = base * np.exp(-1j * m * theta) if m else base.astype(complex)
        if self_cell == "disc":
            if m == 0:
                R = h / math.sqrt(math.pi)
                diag = -np.expm1(-sig_t * R) / sig_t
            else:
                diag = np.zeros(N)
        elif self_cell == "corrected":
            diag = np.full(N, lattice_correction(m) * h / TWO_PI)
            if m == 0:
                diag = diag - sig_t * h * h / TWO_PI
        else:
            raise ParameterError(f"unknown self_cell rule {self_cell!r}")
        np.fill_diagonal(K, diag)
        blocks[m] = K
    del base, theta

    modes = mode_indices(M)
    sig_s = medium.sigma_s(x)
    d_diag = np.stack([phase.chi_abs(n) * sig_s for n in modes]).astype(complex)
    return OperatorSystem(grid, medium, phase, modes, blocks, d_diag, self_cell)


# -- solvers --------------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    contraction_estimate: float | None
    wall_time: float
    method: str
    phase_nonneg: bool = True
    notes: list = field(default_factory=list)

    @property
    def residual_ratios(self) -> list:
        h = self.residual_history
        return [h[i + 1] / h[i] for i in range(len(h) - 1) if h[i] > 0]


def _vnorm(V, cell_volume):
    return float(np.sqrt(cell_volume * np.sum(np.abs(V) ** 2)))


def solve(system: OperatorSystem, Q: MomentField, method: str = "fixed_point",
          tol: float = 1e-8, max_iter: int = 500, estimate_contraction: bool = False):
    """Solve (I - LD) U = LQ; returns ``(U, SolveReport)``.

    ``method`` is ``"fixed_point"`` (U <- LDU + LQ), ``"krylov"`` (GMRES) or
    ``"direct"`` (dense LU of the materialised system, small grids only).
    The relative residual ||(I - LD) U - LQ||_V <= tol ||LQ||_V is the
    stopping test for the iterative methods.
    """
    if Q.modes != system.modes or Q.grid.size != system.grid.size:
        raise ParameterError("source field does not match the system's grid/modes")
    t0 = time.perf_counter()
    pos = positivity_check(system.phase)
    notes = []
    if not pos.nonneg:
        msg = f"truncated phase function is negative (min {pos.min_value:.3g}); contraction not guaranteed"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    cv = system.grid.cell_volume
    LQ = system.apply_L(Q.values)
    rhs_norm = _vnorm(LQ, cv)
    history = []

    if rhs_norm == 0.0:
        U = np.zeros_like(LQ)
        history.append(0.0)
        iters = 0
    elif method == "fixed_point":
        U = LQ.copy()
        iters = 0
        while True:
            new = system.apply_LD(U) + LQ
            res = _vnorm(new - U, cv)  # = ||(I - LD)U - LQ||
            history.append(res)
            if res <= tol * rhs_norm:
                break
            if iters >= max_iter:
                raise ConvergenceError(f"fixed-point iteration stalled at residual {res / rhs_norm:.3e}",
                                       history)
            U = new
            iters += 1
    elif method == "krylov":
        shape = LQ.shape

        def matvec(v):
            V = v.reshape(shape)
            return (V - system.apply_LD(V)).ravel()

        A = LinearOperator((LQ.size, LQ.size), matvec=matvec, dtype=complex)
        count = [0]

        def cb(rk):
            count[0] += 1
            history.append(float(rk) * rhs_norm)

        sol, info = gmres(A, LQ.ravel(), rtol=tol, atol=0.0, restart=50, maxiter=max_iter,
                          callback=cb, callback_type="pr_norm")
        U = _project_v(sol.reshape(shape))
        res = _vnorm(U - system.apply_LD(U) - LQ, cv)
        history.append(res)
        iters = count[0]
        if info != 0 or res > 10 * tol * rhs_norm:
            raise ConvergenceError(f"GMRES did not converge (info={info}, residual {res / rhs_norm:.3e})",
                                   history)
    elif method == "direct":
        L = system.materialize_L()
        A = np.eye(L.shape[0]) - L * system.d_diag.ravel()[None, :]
        U = _project_v(np.linalg.solve(A, LQ.ravel()).reshape(LQ.shape))
        history.append(_vnorm(U - system.apply_LD(U) - LQ, cv))
        iters = 1
    else:
        raise ParameterError(f"unknown method {method!r}")

    est = contraction_estimate(system) if estimate_contraction else None
    report = SolveReport(iters, history, est, time.perf_counter() - t0, method, pos.nonneg, notes)
    return MomentField(system.grid, system.modes, U), report


def contraction_estimate(system: OperatorSystem, max_iter: int = 200, tol: float = 1e-9,
                         seed: int = 0) -> float:
    """Power-iteration estimate of ||LD||_op on V.

    Iterates with (LD)^H (LD); both factors map V into V, and every iterate
    is projected back onto V to keep rounding from leaving the subspace.
    """
    if not np.any(system.d_diag):
        return 0.0
    rng = np.random.default_rng(seed)
    shape = system.d_diag.shape
    V = _project_v(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    V /= np.linalg.norm(V)
    lam = 0.0
    for _ in range(max_iter):
        W = _project_v(system.apply_LD_adjoint(system.apply_LD(V)))
        new = float(np.real(np.vdot(V, W)))
        nrm = np.linalg.norm(W)
        if nrm == 0.0:
            return 0.0
        V = W / nrm
        if abs(new - lam) <= tol * max(new, 1e-300):
            lam = new
            break
        lam = new
    return math.sqrt(max(lam, 0.0))


def solve_isotropic(grid: Grid, medium: MediumField, q, self_cell: str = "disc",
                    quad: SegmentQuadrature = DEFAULT_QUADRATURE) -> np.ndarray:
    """Direct dense solve of the scalar isotropic equation

        U(x) = (1/2pi) int E(x, y) / |x - y| (sigma_s(y) U(y) + q(y)) dy

    with the same midpoint/self-cell quadrature as :func:`assemble_system`,
    built row by row.  Returns the cell values of U.
    """
    h = _check_square(grid)
    x = grid.centers
    N = grid.size
    sig_t, sig_s = medium.sigma_t(x), medium.sigma_s(x)
    qv = np.broadcast_to(q(x) if callable(q) else np.asarray(q, float), (N,)).astype(float)
    A = np.empty((N, N))
    for i in range(N):
        r = np.hypot(x[:, 0] - x[i, 0], x[:, 1] - x[i, 1])
        r[i] = 1.0
        row = attenuation(medium, x[i], x, quad, check=False) / r * h * h / TWO_PI
        if self_cell == "disc":
            row[i] = -math.expm1(-sig_t[i] * h / math.sqrt(math.pi)) / sig_t[i]
        else:
            row[i] = (LATTICE_C0 * h - sig_t[i] * h * h) / TWO_PI
        A[i] = row
    return np.linalg.solve(np.eye(N) - A * sig_s[None, :], A @ qv)


# -- discrete-ordinates reference ---------------------------------------------------

def _backward_distance(grid: Grid, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """tau_-(x, v): distance from x along -v to the box boundary."""
    lo, hi = np.asarray(grid.domain.lo), np.asarray(grid.domain.hi)
    tau = np.full(len(x), np.inf)
    for k in range(2):
        if v[k] > 1e-15:
            tau = np.minimum(tau, (x[:, k] - lo[k]) / v[k])
        elif v[k] < -1e-15:
            tau = np.minimum(tau, (hi[k] - x[:, k]) / (-v[k]))
    return np.maximum(tau, 0.0)


def _bilinear(grid: Grid, pts: np.ndarray):
    """Cell indices and weights interpolating cell-centre values at pts.

    Linear extrapolation is used in the half-cell strip along the boundary.
    """
    nx, ny = grid.cells_per_dim
    hx, hy = grid.h
    fx = (pts[:, 0] - grid.domain.lo[0]) / hx - 0.5
    fy = (pts[:, 1] - grid.domain.lo[1]) / hy - 0.5
    ix = np.clip(np.floor(fx).astype(int), 0, max(nx - 2, 0))
    iy = np.clip(np.floor(fy).astype(int), 0, max(ny - 2, 0))
    tx, ty = fx - ix, fy - iy
    if nx == 1:
        tx = np.zeros_like(tx)
    if ny == 1:
        ty = np.zeros_like(ty)
    ix1, iy1 = np.minimum(ix + 1, nx - 1), np.minimum(iy + 1, ny - 1)
    idx = np.stack([ix + nx * iy, ix1 + nx * iy, ix + nx * iy1, ix1 + nx * iy1], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return idx, w


def sweep_operator(grid: Grid, medium: MediumField, n_dirs: int, step_factor: float = 0.5,
                   quad: SegmentQuadrature = DEFAULT_QUADRATURE):
    """Sparse transport sweep for every discrete direction.

    Row ``j * N + i`` integrates exp(-int sigma_t) phi along the backward ray
    from cell centre i in direction theta_j by the composite trapezoid rule
    (step <= step_factor * h), with phi interpolated bilinearly.
    Returns ``(W, thetas)``.
    """
    h = _check_square(grid)
    N = grid.size
    x = grid.centers
    thetas = TWO_PI * np.arange(n_dirs) / n_dirs
    rows, cols, vals = [], [], []
    for j, th in enumerate(thetas):
        v = np.array([math.cos(th), math.sin(th)])
        tau = _backward_distance(grid, x, v)
        nsteps = np.maximum(np.ceil(tau / (step_factor * h)).astype(int), 1)
        counts = nsteps + 1
        owner = np.repeat(np.arange(N), counts)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        q = np.arange(counts.sum()) - np.repeat(start, counts)
        dl = (tau / nsteps)[owner]
        ell = q * dl
        w = dl * np.where((q == 0) | (q == nsteps[owner]), 0.5, 1.0)
        pts = x[owner] - ell[:, None] * v[None, :]
        E = attenuation(medium, x[owner], pts, quad, check=False)
        idx, bw = _bilinear(grid, pts)
        rows.append(np.repeat(j * N + owner, 4))
        cols.append(idx.ravel())
        vals.append((bw * (w * E)[:, None]).ravel())
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_dirs * N, N))
    W.sum_duplicates()
    return W, thetas


def discrete_ordinates_reference(grid: Grid, medium: MediumField, phase: PhaseExpansion,
                                 q_modes: MomentField, n_dirs: int = 64, tol: float = 1e-8,
                                 max_iter: int = 500, step_factor: float = 0.5,
                                 quad: SegmentQuadrature = DEFAULT_QUADRATURE,
                                 max_sweeps: int | None = None) -> MomentField:
    """Source iteration on the characteristic form of the truncated RTE.

    Each sweep evaluates phi(x, theta_j) = sum_n e^{i n theta_j}
    (chi_|n| sigma_s u_n + q_n), integrates it along every backward ray, and
    projects u(x_i, theta_j) back onto the Fourier moments with the
    trapezoid rule in theta.  ``max_sweeps`` caps the number of sweeps
    without raising (``max_sweeps=1`` gives a single transport sweep).
    """
    if n_dirs < 8:
        raise ParameterError("need at least 8 directions")
    _check_square(grid)
    W, thetas = sweep_operator(grid, medium, n_dirs, step_factor, quad)
    N = grid.size
    modes = q_modes.modes
    nm = len(modes)
    sig_s = medium.sigma_s(grid.centers)
    chi = np.array([phase.chi_abs(n) for n in modes])
    mode_arr = np.asarray(modes)
    fwd = np.exp(1j * np.outer(thetas, mode_arr))      # e^{i n theta_j}
    back = np.exp(-1j * np.outer(mode_arr, thetas)) / n_dirs

    U = np.zeros((nm, N), complex)
    history = []
    for it in range(max_iter):
        G = chi[:, None] * sig_s[None, :] * U + q_modes.values      # (nm, N)
        swept = (W @ G.T).reshape(n_dirs, N, nm)                    # W_j g_n
        u_dir = np.einsum("jn,jin->ji", fwd, swept)                 # u(x_i, theta_j)
        new = back @ u_dir
        diff = np.linalg.norm(new - U)
        scale = np.linalg.norm(new)
        history.append(diff / scale if scale else 0.0)
        U = new
        if max_sweeps is not None and it + 1 >= max_sweeps:
            break
        if scale == 0.0 or diff <= tol * scale:
            break
    else:
        raise ConvergenceError("discrete-ordinates source iteration did not converge", history)
    return MomentField(grid, modes, _project_v(U))
