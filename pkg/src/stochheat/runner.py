"""Run registered experiments and write reproducible outputs.

Every run writes one CSV per result table and a ``manifest.json`` into
``<out>/<experiment>/``.  CSV files use a header row, LF line endings and
17 significant digits for floats, so identical results give identical bytes.
"""

import csv
import hashlib
import io
import json
import logging
import math
import numbers
from pathlib import Path
import time

import numpy as np

from . import __version__
from .experiments import REGISTRY

log = logging.getLogger(__name__)


def format_value(value):
    """Round-trippable text for one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return format(float(value), ".17g")
    return str(value)


def table_bytes(table):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        if len(row) != len(table.columns):
            raise ValueError(f"row {row!r} does not match columns {table.columns!r}")
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    return value


def write_outputs(result, manifest, out_dir):
    """Write the result tables and the manifest; return the manifest with ``outputs`` filled.

    Files written before a failure are removed again.
    """
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        for name in sorted(result.tables):
            data = table_bytes(result.tables[name])
            path = out_dir / f"{name}.csv"
            path.write_bytes(data)
            written.append(path)
            outputs.append({"file": path.name, "sha256": hashlib.sha256(data).hexdigest(),
                            "rows": len(result.tables[name].rows)})
        manifest = dict(manifest, outputs=outputs)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        written.append(path)
    except OSError as exc:
        for path in written:
            path.unlink(missing_ok=True)
        raise OSError(exc.errno, f"cannot write outputs: {exc.strerror}",
                      exc.filename or str(out_dir)) from None
    return manifest


def run_experiment(cfg, out_dir=None):
    """Run ``cfg`` and write its outputs.

    Returns
    -------
    manifest : dict
    result : ExperimentResult
    """
    out_dir = Path(cfg.out if out_dir is None else out_dir) / cfg.name
    log.info("running %s with %d paths (seed %d, %d workers)", cfg.name, cfg.paths, cfg.seed,
             cfg.workers)
    start = time.perf_counter()
    result = REGISTRY[cfg.name].run(cfg)
    duration = time.perf_counter() - start
    manifest = {
        "version": __version__,
        "experiment": cfg.name,
        "seed": cfg.seed,
        "config_checksum": cfg.checksum(),
        "config": cfg.as_dict(),
        "duration_s": duration,
        "passed": bool(result.passed),
        "metrics": result.metrics,
        "notes": result.notes,
    }
    manifest = write_outputs(result, manifest, out_dir)
    log.info("%s %s in %.1f s -> %s", cfg.name, "PASS" if result.passed else "FAIL",
             duration, out_dir)
    return manifest, result
