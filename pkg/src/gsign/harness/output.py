"""Result files: CSV traces, timing table and JSON summary."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import yaml

__all__ = ["emit_results", "OutputError", "fmt"]


class OutputError(OSError):
    pass


def fmt(v) -> str:
    """Full-precision text for a CSV cell."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None


def _table(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) if not isinstance(v, str) else v for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _columns(cols: dict) -> str:
    names = list(cols)
    data = [np.asarray(cols[k]) for k in names]
    n = len(data[0])
    rows = ([i, *(d[i] for d in data)] for i in range(n))
    return _table(["iteration", *names], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_results(result, outdir) -> list[Path]:
    """Write every output of an experiment into ``outdir``.

    ``msd.csv``/``mad.csv`` carry one column per estimator (plus ``theory``
    when available), ``timing.csv`` the per-estimator step timing,
    ``summary.json`` the resolved configuration and result summaries, and
    ``config.resolved.yaml`` the configuration echo. Timing is kept out of
    every other file so those are reproducible byte for byte.
    """
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    written = []

    def put(name, text):
        p = out / name
        _write(p, text)
        written.append(p)

    cfg = result.config
    put("config.resolved.yaml", yaml.safe_dump(_jsonable(cfg.to_dict()), sort_keys=False))
    if result.msd:
        put("msd.csv", _columns(result.msd))
        put("mad.csv", _columns(result.mad))
    if result.timing:
        rows = [[t["estimator"], t["total_s"], t["per_iter_us"], t["n_iters"]] for t in result.timing]
        put("timing.csv", _table(["estimator", "total_s", "per_iter_us", "n_iters"], rows))
    if result.tracked is not None:
        names = list(result.tracked)
        rows = zip(*(result.tracked[k] for k in names))
        put("tracked.csv", _table(names, rows))
    if result.noise is not None:
        put("noise.csv", _table(["sample"], ([v] for v in result.noise)))
    put("summary.json", json.dumps(_jsonable(result.summary), indent=2) + "\n")
    return written
