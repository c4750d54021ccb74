"""Command-line front end.

Every command writes ``<out>/<table>.csv``, ``<out>/summary.json`` (versioned
schema, no timing) and ``<out>/manifest.json`` (config hash, versions, wall
time).  Exit codes::

    0  success
    1  verification failed (verify-special)
    2  bad configuration or usage
    3  numerical range exceeded (RangeError)
    4  iteration did not converge
    5  resolution, geometry, parameter or fit error
    6  memory budget exceeded
    7  other numerical failure
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as rio
from .errors import (ConfigError, ConvergenceError, DomainError, FitError, GeometryError,
                     NumericalError, ParameterError, RangeError, ResolutionError, ResourceError,
                     SingularityError)
from .geometry import BoxDomain, constant_medium
from .phase import phase_from_spec
from .presets import CORRELATION_PRESETS, RANK_PRESETS, correlation_preset, rank_preset
from .separability import (CorrelationStudyConfig, RankStudyConfig, bounding_box,
                           correlation_decay_study, pca_lower_bound, rank_growth_study)
from .separable import (measure_sup_error, phase_target_2d, harmonic_target_3d, sample_grid,
                        separable_harmonic_3d, separable_kernel_taylor, separable_phase_2d)
from .solver import (MomentField, assemble_system, delta_m_medium, discrete_ordinates_reference,
                     solve)
from .special import (legendre, spherical_harmonic, wigner3j, yn0_limit, yn0_weighted_integral)

COMMANDS = ("correlation", "rank-growth", "pca-bound", "solve2d", "separable-approx", "verify-special")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RANGE, EXIT_CONVERGENCE, EXIT_INPUT, EXIT_RESOURCE, \
    EXIT_NUMERICAL = range(8)


@dataclass
class RunConfig:
    command: str
    config_path: Path | None = None
    preset: str | None = None
    out: Path = Path("out")
    threads: int = 1
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.config_path is not None and not Path(self.config_path).exists():
            raise ConfigError(f"config file {self.config_path} does not exist")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from exc


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("RTE_KERNEL_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"RTE_KERNEL_LAB_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def _box(spec, where) -> BoxDomain:
    if isinstance(spec, dict):
        return rio.box_from_spec(spec, where)
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        return rio.box_from_spec({"lo": spec[0], "hi": spec[1]}, where)
    raise ConfigError(f"{where} must be a table {{lo, hi}} or a pair [lo, hi]")


def _section(cfg: RunConfig, name: str) -> dict:
    if cfg.config_path is None:
        return {}
    doc = rio.load_toml(cfg.config_path)
    return doc.get(name, {})


def _box_dict(b: BoxDomain) -> dict:
    return {"lo": list(b.lo), "hi": list(b.hi)}


# -- commands ---------------------------------------------------------------------------

def _correlation(cfg: RunConfig):
    ov = cfg.overrides
    if cfg.preset:
        study = correlation_preset(cfg.preset)
    else:
        sec = _section(cfg, "correlation")
        if not sec:
            raise ConfigError("correlation needs --preset or a [correlation] table")
        try:
            study = CorrelationStudyConfig(
                _box(sec["X"], "correlation.X"), tuple(sec["y1"]), tuple(sec["y2"]),
                sigma_t=float(sec.get("sigma_t", 1.0)),
                ntilde_min=float(sec.get("ntilde_min", 1.0)),
                ntilde_max=float(sec.get("ntilde_max", 150.0)),
                n_count=int(sec.get("n_count", 40)), fit=sec.get("fit", "ols"),
                quadrature=sec.get("quadrature", "midpoint"))
        except KeyError as exc:
            raise ConfigError(f"missing key {exc.args[0]!r} in [correlation]") from exc
    if ov.get("n_sweep"):
        study = replace(study, n_values=ov["n_sweep"])
    prof = correlation_decay_study(study)
    lo, hi = prof.fit_window
    rows = [(n, t, c, int(lo <= t <= hi)) for n, t, c in prof.samples]
    tables = {"correlation.csv": (("n", "n_tilde", "abs_C", "in_fit_window"), rows)}
    results = dict(geometry=prof.geometry, fitted_slope=prof.fitted_slope,
                   fit_window=list(prof.fit_window), fit=study.fit, quadrature=prof.quadrature,
                   resolution=prof.resolution, samples=len(rows))
    config = dict(study=asdict(replace(study, X=_box_dict(study.X))))
    return tables, results, config, EXIT_OK


def _rank_config(cfg: RunConfig) -> RankStudyConfig:
    ov = cfg.overrides
    if cfg.preset:
        study = rank_preset(cfg.preset)
    else:
        sec = _section(cfg, "rank")
        if not sec:
            raise ConfigError("this command needs --preset or a [rank] table")
        try:
            study = RankStudyConfig(_box(sec["X"], "rank.X"), _box(sec["Y"], "rank.Y"),
                                    sigma_t=float(sec.get("sigma_t", 1.0)),
                                    points_per_unit=float(sec.get("points_per_unit", 2.0)),
                                    criterion=sec.get("criterion", "frobenius"))
        except KeyError as exc:
            raise ConfigError(f"missing key {exc.args[0]!r} in [rank]") from exc
        if "n_values" in sec:
            study = replace(study, n_values=tuple(int(n) for n in sec["n_values"]))
        if "epsilons" in sec:
            study = replace(study, epsilons=tuple(float(e) for e in sec["epsilons"]))
    if ov.get("n_sweep"):
        study = replace(study, n_values=ov["n_sweep"])
    if ov.get("eps"):
        study = replace(study, epsilons=ov["eps"])
    return replace(study, threads=cfg.threads)


def _rank_growth(cfg: RunConfig):
    study = _rank_config(cfg)
    prof = rank_growth_study(study)
    rows = []
    for e in prof.epsilons:
        for n, r, (m, k) in zip(prof.n_values, prof.ranks[e], prof.shapes):
            rows.append((e, n, r, m, k))
    tables = {"ranks.csv": (("eps", "n", "rank", "rows", "cols"), rows)}
    results = dict(n_values=prof.n_values, epsilons=prof.epsilons, criterion=prof.criterion,
                   fitted_exponents={repr(e): v for e, v in prof.fitted_exponents.items()},
                   quadratic_fit={repr(e): list(v) for e, v in prof.quadratic_fit.items()})
    config = dict(study=asdict(replace(study, X=_box_dict(study.X), Y=_box_dict(study.Y))))
    return tables, results, config, EXIT_OK


def _pca_bound(cfg: RunConfig):
    study = _rank_config(cfg)
    sec = _section(cfg, "pca")
    delta = float(cfg.overrides.get("delta") or sec.get("delta", 0.5))
    medium = constant_medium(bounding_box(study.X, study.Y), study.sigma_t)
    rows, per_n = [], {}
    for n in study.n_values:
        b = pca_lower_bound(medium, int(n), study.X, study.Y, delta, study.epsilons)
        per_n[int(n)] = dict(M_delta=b.M_delta, spacing=b.spacing,
                             ranks={repr(e): r for e, r in b.ranks.items()})
        for e in study.epsilons:
            rows.append((e, int(n), b.M_delta, b.ranks[e]))
    tables = {"pca.csv": (("eps", "n", "M_delta", "rank"), rows)}
    results = dict(delta=delta, epsilons=list(study.epsilons), per_n=per_n)
    config = dict(delta=delta, study=asdict(replace(study, X=_box_dict(study.X), Y=_box_dict(study.Y))))
    return tables, results, config, EXIT_OK


# the cross-solver configuration: sigma_t = 2, sigma_s = 1, HG g = 0.5, M = 3, q_0 = 1
SOLVE_PRESETS = {
    "cross-solver": {
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "grid": {"cells": 32},
        "medium": {"sigma_t": 2.0, "sigma_s": 1.0},
        "phase": {"kind": "hg", "g": 0.5, "M": 3},
        "source": [{"n": 0, "value": 1.0}],
        "solver": {"method": "fixed_point", "tol": 1e-10},
    },
}


def _solve2d(cfg: RunConfig):
    if cfg.preset:
        if cfg.preset not in SOLVE_PRESETS:
            raise ConfigError(f"unknown solve2d preset {cfg.preset!r}; choose from {sorted(SOLVE_PRESETS)}")
        doc, base = SOLVE_PRESETS[cfg.preset], Path(".")
    elif cfg.config_path is not None:
        doc, base = rio.load_toml(cfg.config_path), Path(cfg.config_path).parent
    else:
        raise ConfigError("solve2d needs --preset or --config")
    dom = rio.box_from_spec(doc.get("domain"), "domain")
    if dom.dim != 2:
        raise ConfigError("solve2d needs a 2D [domain]")
    grid = rio.grid_from_spec(doc.get("grid", {}), dom)
    medium = rio.medium_from_spec(doc.get("medium", {}), dom, base)
    phase, w = phase_from_spec(doc.get("phase", {"kind": "hg", "g": 0.0, "M": 1}), 2)
    if w > 0:
        medium = delta_m_medium(medium, w)
    sources = rio.sources_from_spec(doc.get("source", []), grid, base)
    sol = doc.get("solver", {})
    method = sol.get("method", "fixed_point")
    Q = MomentField.from_sources(grid, phase.M, sources)
    system = assemble_system(grid, medium, phase, self_cell=sol.get("self_cell", "disc"))
    U, report = solve(system, Q, method=method, tol=float(sol.get("tol", 1e-8)),
                      max_iter=int(sol.get("max_iter", 500)))
    tables = {}
    centers = grid.centers
    h = grid.cell_volume
    norms = {}
    for n in range(phase.M):
        u = U[n]
        tables[f"u_{n}.csv"] = (("x", "y", "re", "im"),
                                [(float(c[0]), float(c[1]), float(v.real), float(v.imag))
                                 for c, v in zip(centers, u)])
        rio.write_raster(cfg.out / f"u_{n}_re.raster", rio.grid_raster(grid, u.real))
        rio.write_raster(cfg.out / f"u_{n}_im.raster", rio.grid_raster(grid, u.imag))
        norms[str(n)] = float(np.sqrt(np.sum(np.abs(u) ** 2) * h))
    results = dict(method=report.method, iterations=report.iterations,
                   residual_history=list(report.residual_history), phase_nonneg=report.phase_nonneg,
                   cells=list(grid.cells_per_dim), M=phase.M, forward_weight=w, l2_norms=norms,
                   notes=list(report.notes))
    if sol.get("reference") == "discrete-ordinates":
        ref = discrete_ordinates_reference(grid, medium, phase, Q, n_dirs=int(sol.get("n_dirs", 64)))
        rel = {}
        for n in range(phase.M):
            den = np.linalg.norm(ref[n])
            rel[str(n)] = float(np.linalg.norm(U[n] - ref[n]) / den) if den > 0 else float(np.linalg.norm(U[n]))
        results["reference_rel_l2"] = rel
    extra = [f"u_{n}_{p}.raster" for n in range(phase.M) for p in ("re", "im")]
    return tables, results, dict(doc=doc), EXIT_OK, extra


SEPARABLE_PRESETS = {
    "phase-2d": dict(kind="phase2d", n=4, X=[[0.0, 0.0], [1.0, 1.0]], Y=[[3.0, 0.0], [4.0, 1.0]],
                     check_points=64),
    "harmonic-3d": dict(kind="harmonic3d", n=2, X=[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]],
                        Y=[[4.0, 0.0, 0.0], [5.0, 1.0, 1.0]], check_points=10),
    "taylor-2d": dict(kind="taylor", k=3, sigma_t=1.0, X=[[0.0, 0.0], [1.0, 1.0]],
                      Y=[[3.0, 0.0], [4.0, 1.0]], check_points=24),
}


def _separable(cfg: RunConfig):
    if cfg.preset:
        if cfg.preset not in SEPARABLE_PRESETS:
            raise ConfigError(f"unknown separable preset {cfg.preset!r}; "
                              f"choose from {sorted(SEPARABLE_PRESETS)}")
        sec = dict(SEPARABLE_PRESETS[cfg.preset])
    else:
        sec = _section(cfg, "separable")
        if not sec:
            raise ConfigError("separable-approx needs --preset or a [separable] table")
    kind = sec.get("kind", "phase2d")
    try:
        X, Y = _box(sec["X"], "separable.X"), _box(sec["Y"], "separable.Y")
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r} in [separable]") from exc
    epsilons = cfg.overrides.get("eps") or tuple(float(e) for e in sec.get("eps", [1e-6]))
    ns = cfg.overrides.get("n_sweep") or (int(sec.get("n", 0)),)
    pts = int(sec.get("check_points", 32))
    xs, ys = sample_grid(X, pts), sample_grid(Y, pts)
    rows = []
    for n in ns:
        for e in epsilons:
            if kind == "phase2d":
                approx = separable_phase_2d(int(n), e, X, Y)
                target = phase_target_2d(int(n))
            elif kind == "harmonic3d":
                approx = separable_harmonic_3d(int(n), e, X, Y)
                target = harmonic_target_3d(int(n))
            elif kind == "taylor":
                medium = constant_medium(bounding_box(X, Y), float(sec.get("sigma_t", 1.0)))
                approx = separable_kernel_taylor(medium, int(sec.get("k", 3)), e, X, Y,
                                                 check_points=pts)
                target = None
            else:
                raise ConfigError(f"unknown separable kind {kind!r}")
            if target is not None:
                measured = measure_sup_error(approx, target, xs, ys)
            else:
                measured = approx.measured_sup_error
            N = approx.params.get("N", approx.params.get("k", 0))
            rows.append((kind, int(n), e, approx.term_count, N, approx.guaranteed_sup_error,
                         measured, int(measured <= e)))
    tables = {"separable.csv": (("kind", "n", "eps", "terms", "N", "guaranteed_error",
                                 "measured_error", "within_eps"), rows)}
    results = dict(kind=kind, rows=[dict(zip(tables["separable.csv"][0], r)) for r in rows])
    return tables, results, dict(section=sec, epsilons=list(epsilons), n=list(ns)), EXIT_OK


# -- verify-special ----------------------------------------------------------------------

def special_checks(n_max: int = 10, leg_max: int = 20, limit_n: int = 200) -> list:
    """Self-consistency checks of the special-function layer.

    Returns rows ``(check, parameter, value, tolerance, passed)``.
    """
    rows = []
    # 3j orthogonality: sum_{m1,m2} (2 j3 + 1) (j1 j2 j3; m1 m2 m3)^2 = 1
    worst = 0.0
    for j1 in range(0, 5):
        for j2 in range(0, 5):
            for j3 in range(abs(j1 - j2), j1 + j2 + 1):
                for m3 in range(-j3, j3 + 1):
                    s = sum((2 * j3 + 1) * wigner3j(j1, j2, j3, m1, m2, -m3) ** 2
                            for m1 in range(-j1, j1 + 1) for m2 in range(-j2, j2 + 1))
                    worst = max(worst, abs(s - 1.0))
    rows.append(("3j_orthogonality", "j<=4", worst, 1e-12, worst <= 1e-12))
    # addition theorem, standard normalisation: P_n(u.v) = 4pi/(2n+1) sum_m Y_nm(u) conj(Y_nm(v))
    rng = np.random.default_rng(0)
    t1, p1, t2, p2 = (rng.uniform(0, np.pi, 8), rng.uniform(0, 2 * np.pi, 8),
                      rng.uniform(0, np.pi, 8), rng.uniform(0, 2 * np.pi, 8))
    cosg = np.cos(t1) * np.cos(t2) + np.sin(t1) * np.sin(t2) * np.cos(p1 - p2)
    for n in range(n_max + 1):
        acc = sum(spherical_harmonic(n, m, t1, p1, "standard")
                  * np.conj(spherical_harmonic(n, m, t2, p2, "standard")) for m in range(-n, n + 1))
        err = float(np.max(np.abs(4 * np.pi / (2 * n + 1) * acc - legendre(n, cosg))))
        rows.append(("addition_theorem", f"n={n}", err, 1e-9, err <= 1e-9))
    # |P_n| on the unit circle peaks at z = +-i and stays below 3^n
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 2001))
    for n in range(leg_max + 1):
        vals = np.abs(legendre(n, z))
        at_i = abs(complex(legendre(n, 1j)))
        ok = at_i <= 3.0 ** n and vals.max() <= at_i * (1 + 1e-12)
        rows.append(("legendre_circle_bound", f"n={n}", at_i / 3.0 ** n, 1.0, bool(ok)))
    f = lambda theta, phi: theta
    lim = yn0_limit(f)
    rel = abs(yn0_weighted_integral(f, limit_n) - lim) / abs(lim)
    rows.append(("yn0_limit", f"n={limit_n}", rel, 0.05, rel <= 0.05))
    return rows


def _verify_special(cfg: RunConfig):
    rows = [(c, p, float(v), t, int(bool(ok))) for c, p, v, t, ok in special_checks()]
    failed = [r for r in rows if not r[4]]
    tables = {"special.csv": (("check", "parameter", "value", "tolerance", "passed"), rows)}
    results = dict(checks=len(rows), failed=[f"{r[0]}:{r[1]}" for r in failed])
    return tables, results, {}, EXIT_VERIFY if failed else EXIT_OK


HANDLERS = {
    "correlation": _correlation,
    "rank-growth": _rank_growth,
    "pca-bound": _pca_bound,
    "solve2d": _solve2d,
    "separable-approx": _separable,
    "verify-special": _verify_special,
}


def run(cfg: RunConfig) -> int:
    """Execute one command and write its artifacts; returns the exit code."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    os.environ["RTE_KERNEL_LAB_THREADS"] = str(cfg.threads)
    with threadpool_limits(limits=cfg.threads):
        out = HANDLERS[cfg.command](cfg)
    tables, results, config, code = out[:4]
    extra = list(out[4]) if len(out) > 4 else []
    for name, (header, rows) in tables.items():
        rio.write_csv(cfg.out / name, header, rows)
    rio.write_summary(cfg.out / "summary.json", cfg.command, results)
    config = dict(config, command=cfg.command, preset=cfg.preset,
                  config_path=str(cfg.config_path) if cfg.config_path else None,
                  overrides={k: list(v) if isinstance(v, tuple) else v for k, v in cfg.overrides.items()})
    rio.write_manifest(cfg.out / "manifest.json", cfg.command, config, time.perf_counter() - t0,
                       cfg.threads, list(tables) + extra + ["summary.json"])
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rte-kernel-lab", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    presets = {"correlation": sorted(CORRELATION_PRESETS), "rank-growth": sorted(RANK_PRESETS),
               "pca-bound": sorted(RANK_PRESETS), "solve2d": sorted(SOLVE_PRESETS),
               "separable-approx": sorted(SEPARABLE_PRESETS), "verify-special": []}
    for name in COMMANDS:
        s = sub.add_parser(name, help=f"presets: {', '.join(presets[name]) or 'none'}")
        s.add_argument("--config", type=Path, help="TOML run file")
        s.add_argument("--preset", help="named configuration")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--threads", type=int, help="worker threads (default: env or all cores)")
        s.add_argument("--eps", type=_float_list, help="comma-separated tolerances")
        s.add_argument("--n-sweep", type=_int_list, help="comma-separated mode indices")
        if name == "pca-bound":
            s.add_argument("--delta", type=float, help="grid exponent in [0, 1]")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {"eps": args.eps, "n_sweep": args.n_sweep}
    if getattr(args, "delta", None) is not None:
        overrides["delta"] = args.delta
    try:
        cfg = RunConfig(args.command, args.config, args.preset, args.out,
                        _resolve_threads(args.threads), {k: v for k, v in overrides.items() if v})
        return run(cfg)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except RangeError as exc:
        code, msg = EXIT_RANGE, f"range error: {exc}"
    except ConvergenceError as exc:
        code, msg = EXIT_CONVERGENCE, f"no convergence: {exc}"
    except ResourceError as exc:
        code, msg = EXIT_RESOURCE, f"resource limit: {exc}"
    except (ResolutionError, GeometryError, ParameterError, FitError, DomainError,
            SingularityError) as exc:
        code, msg = EXIT_INPUT, f"{type(exc).__name__}: {exc}"
    except NumericalError as exc:
        code, msg = EXIT_NUMERICAL, f"numerical error: {exc}"
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
