"""Run files, raster/matrix binaries, CSV tables and JSON summaries.

Binary raster: little-endian uint32 ndim, ndim uint32 extents, then float64
samples in row-major order.  Array axis k runs along coordinate k.

Binary matrix: little-endian uint64 rows, uint64 cols, then complex128
entries in row-major order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .geometry import BoxDomain, Grid, LinearField, MediumField, RasterField

SCHEMA_VERSION = "1.0"


# -- TOML ------------------------------------------------------------------------------

def load_toml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        msg = str(exc)
        if line is not None:
            msg = msg.split(" (at line")[0]
        raise ConfigError(f"{path}: {msg}", line, col) from exc


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key {key!r} in [{where}]")
    return table[key]


def box_from_spec(spec, where: str = "domain") -> BoxDomain:
    if not isinstance(spec, dict):
        raise ConfigError(f"[{where}] must be a table with lo and hi")
    try:
        return BoxDomain(tuple(_require(spec, "lo", where)), tuple(_require(spec, "hi", where)))
    except ValueError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def field_from_spec(spec, domain: BoxDomain, base: Path, where: str):
    """A number, {raster = "file"} or {value, gradient, origin}."""
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, dict):
        if "raster" in spec:
            return RasterField(read_raster(base / spec["raster"]), domain)
        if "gradient" in spec:
            return LinearField(float(spec.get("value", 0.0)), tuple(spec["gradient"]),
                               tuple(spec.get("origin", domain.lo)))
    raise ConfigError(f"cannot interpret {where} = {spec!r}")


def medium_from_spec(spec: dict, domain: BoxDomain, base: Path = Path(".")) -> MediumField:
    st = field_from_spec(_require(spec, "sigma_t", "medium"), domain, base, "sigma_t")
    ss = field_from_spec(spec.get("sigma_s", 0.0), domain, base, "sigma_s")
    bounds = tuple(spec["bounds"]) if "bounds" in spec else None
    return MediumField(domain, st, ss, bounds=bounds)


def grid_from_spec(spec: dict, domain: BoxDomain) -> Grid:
    cells = _require(spec, "cells", "grid")
    if isinstance(cells, int):
        cells = (cells,) * domain.dim
    if len(cells) != domain.dim:
        raise ConfigError(f"[grid] cells has {len(cells)} entries for a {domain.dim}D domain")
    return Grid(domain, tuple(int(c) for c in cells))


def sources_from_spec(entries, grid: Grid, base: Path = Path(".")) -> dict:
    """[[source]] tables -> {n: constant or cell values}."""
    out = {}
    for i, e in enumerate(entries or []):
        n = int(_require(e, "n", f"source {i}"))
        if "raster" in e:
            vals = RasterField(read_raster(base / e["raster"]), grid.domain)(grid.centers).astype(complex)
            if "raster_im" in e:
                vals = vals + 1j * RasterField(read_raster(base / e["raster_im"]), grid.domain)(grid.centers)
        else:
            vals = complex(float(e.get("re", e.get("value", 0.0))), float(e.get("im", 0.0)))
        if n in out:
            raise ConfigError(f"source mode {n} given twice")
        out[n] = vals
    return out


# -- binaries ---------------------------------------------------------------------------

def write_raster(path, values) -> None:
    a = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(np.array([a.ndim, *a.shape], dtype="<u4").tobytes())
        fh.write(a.tobytes(order="C"))


def read_raster(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ConfigError(f"{path}: truncated raster header")
    ndim = int(np.frombuffer(raw[:4], dtype="<u4")[0])
    head = 4 * (1 + ndim)
    if ndim < 1 or len(raw) < head:
        raise ConfigError(f"{path}: bad raster header")
    dims = tuple(int(d) for d in np.frombuffer(raw[4:head], dtype="<u4"))
    count = int(np.prod(dims))
    if len(raw) != head + 8 * count:
        raise ConfigError(f"{path}: expected {count} samples, file holds {(len(raw) - head) // 8}")
    return np.frombuffer(raw[head:], dtype="<f8").reshape(dims).astype(float)


def write_matrix(path, A) -> None:
    A = np.ascontiguousarray(np.asarray(A, dtype="<c16"))
    if A.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    with open(path, "wb") as fh:
        fh.write(np.array(A.shape, dtype="<u8").tobytes())
        fh.write(A.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = (int(v) for v in np.frombuffer(raw[:16], dtype="<u8"))
    if len(raw) != 16 + 16 * rows * cols:
        raise ConfigError(f"{path}: size does not match a {rows} x {cols} complex matrix")
    return np.frombuffer(raw[16:], dtype="<c16").reshape(rows, cols).copy()


def grid_raster(grid: Grid, values) -> np.ndarray:
    """Flat cell values (x fastest) -> array with axis k along coordinate k."""
    return np.asarray(values).reshape(grid.cells_per_dim[::-1]).T


# -- tables and summaries ----------------------------------------------------------

def fmt(v) -> str:
    """Shortest round-trip repr; keeps CSV output byte-stable."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, BoxDomain):
        return {"lo": list(obj.lo), "hi": list(obj.hi)}
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_summary(path, command: str, results: dict) -> None:
    write_json(path, {"schema_version": SCHEMA_VERSION, "command": command, "results": results})


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "rte_kernel_lab": __version__, "platform": sys.platform}


def write_manifest(path, command: str, config: dict, wall_time: float, threads: int,
                   outputs: list) -> None:
    """Provenance record; the only output that carries timing."""
    write_json(path, {"schema_version": SCHEMA_VERSION, "command": command,
                      "config_hash": config_hash(config), "config": config,
                      "versions": versions(), "wall_time_s": wall_time, "threads": threads,
                      "outputs": sorted(outputs)})
