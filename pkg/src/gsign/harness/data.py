"""Station datasets: CSV ingestion with gap filling, and a synthetic stand-in."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..graph import GraphError, build_laplacian, knn_geographic_graph, load_coords, save_coords
from ..spectral import eigendecompose

__all__ = [
    "DatasetError",
    "ingest_station_dataset",
    "fill_gaps",
    "synthetic_station_dataset",
    "write_station_dataset",
]

# bounding box of the contiguous U.S., degrees
_LON = (-124.0, -67.0)
_LAT = (25.0, 49.0)
_DAY = 24.0


class DatasetError(ValueError):
    pass


def fill_gaps(column: np.ndarray) -> np.ndarray:
    """Linear interpolation over interior NaNs, nearest value at the ends."""
    col = np.asarray(column, dtype=float)
    ok = np.isfinite(col)
    if not ok.any():
        raise DatasetError("column has no values")
    t = np.arange(len(col))
    # np.interp holds the end values constant outside the known range
    return np.interp(t, t[ok], col[ok])


def ingest_station_dataset(readings_csv, coords_csv):
    """Read hourly station readings and station coordinates.

    Parameters
    ----------
    readings_csv : path
        Header ``timestamp,station_0,...,station_{N-1}``, one row per hour.
        Empty cells or ``nan`` mark missing readings.
    coords_csv : path
        Header ``node,x,y`` or ``node,lat,lon``.

    Returns
    -------
    signal : ndarray, shape (T, N)
    coords : ndarray, shape (N, 2)
    timestamps : list of str
    """
    readings_csv = Path(readings_csv)
    try:
        with readings_csv.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(f"{readings_csv}: {exc}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{readings_csv}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "timestamp":
        raise DatasetError(f"{readings_csv}:1: header must start with 'timestamp'")
    n = len(header) - 1
    expected = [f"station_{i}" for i in range(n)]
    if header[1:] != expected:
        raise DatasetError(f"{readings_csv}:1: station columns must be station_0..station_{n - 1}")
    timestamps, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + 1:
            raise DatasetError(f"{readings_csv}:{lineno}: expected {n + 1} fields, got {len(row)}")
        timestamps.append(row[0].strip())
        try:
            values.append([float(c) if c.strip() else np.nan for c in row[1:]])
        except ValueError as exc:
            raise DatasetError(f"{readings_csv}:{lineno}: {exc}") from None
    if not values:
        raise DatasetError(f"{readings_csv}: no readings")
    raw = np.array(values, dtype=float)

    try:
        coords = load_coords(coords_csv)
    except GraphError as exc:
        raise DatasetError(str(exc)) from None
    if coords.shape[0] != n:
        raise DatasetError(
            f"station count mismatch: {n} stations in {readings_csv}, "
            f"{coords.shape[0]} in {coords_csv}"
        )
    missing = [i for i in range(n) if not np.isfinite(raw[:, i]).any()]
    if missing:
        raise DatasetError(f"{readings_csv}: stations with no readings: {missing}")
    signal = np.column_stack([fill_gaps(raw[:, i]) for i in range(n)])
    return signal, coords, timestamps


def synthetic_station_dataset(n: int = 205, t: int = 95, seed: int = 0, k: int = 8,
                              band: int = 20):
    """Smooth temperature-like field on ``n`` stations over ``t`` hours.

    Stations are scattered over a longitude/latitude box. The field is a
    spatial pattern spanned by the ``band`` lowest-frequency eigenvectors of
    the ``k``-nearest-neighbor graph, a mean level, and a diurnal sinusoid
    common to all stations. It is therefore bandlimited on that graph.

    Returns
    -------
    signal : ndarray, shape (t, n)
    coords : ndarray, shape (n, 2), columns (lat, lon)
    """
    if n < 2 or t < 1:
        raise DatasetError("need n >= 2 stations and t >= 1 hours")
    rng = np.random.default_rng(seed)
    lon = rng.uniform(*_LON, n)
    coords = np.column_stack([rng.uniform(*_LAT, n), lon])
    g = knn_geographic_graph(coords, min(k, n - 1))
    U = eigendecompose(build_laplacian(g)).U
    band = min(band, n)
    # decaying spectrum keeps the pattern smooth
    coef = rng.standard_normal(band) / (1.0 + np.arange(band))
    coef[0] = 0.0
    pattern = U[:, :band] @ coef
    pattern *= 6.0 / max(np.abs(pattern).max(), 1e-12)
    mean = 12.0 + 4.0 * rng.standard_normal()
    phase = rng.uniform(0.0, 2.0 * np.pi)
    hours = np.arange(t)
    diurnal = 5.0 * np.sin(2.0 * np.pi * hours / _DAY + phase)
    # slow drift of the pattern strength keeps the field varying spatially too
    strength = 1.0 + 0.3 * np.sin(2.0 * np.pi * hours / (3.0 * _DAY))
    signal = mean + diurnal[:, None] + strength[:, None] * pattern[None, :]
    return signal, coords


def write_station_dataset(signal, coords, out_dir) -> tuple[Path, Path]:
    """Write ``readings.csv`` and ``coords.csv`` in the ingestion format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    signal = np.asarray(signal, dtype=float)
    readings = out / "readings.csv"
    with readings.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + [f"station_{i}" for i in range(signal.shape[1])])
        for h, row in enumerate(signal):
            w.writerow([f"h{h:05d}"] + ["%.17g" % v for v in row])
    coords_path = out / "coords.csv"
    save_coords(coords, coords_path, names=("lat", "lon"))
    return readings, coords_path
