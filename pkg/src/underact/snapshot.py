"""Serialized matched systems and report files.

A snapshot directory holds one CSV matrix per base grid (mu, sigma, y,
ghat11, Vhat; rows follow x1, columns x2) and ``manifest.json`` with the
chart, the valid-node mask and the config text that produced it.  Values
are written with 17 significant digits, so reloading reproduces the node
arrays bit for bit.
"""
from __future__ import annotations

import json
import math
import os

import numpy as np

from .errors import ConfigError
from .fields import Chart

SCHEMA_VERSION = 1
GRID_NAMES = ("mu", "sigma", "y", "ghat11", "Vhat")


def write_matrix(path, arr):
    np.savetxt(path, np.asarray(arr, dtype=float), fmt="%.17g", delimiter=",", newline="\n")


def read_matrix(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in np.atleast_2d(rows):
            fh.write(",".join("%.17g" % v for v in r) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _mask_rows(mask):
    return ["".join("1" if v else "0" for v in row) for row in mask]


def save_snapshot(directory, ms, route, config_text, fingerprint):
    os.makedirs(directory, exist_ok=True)
    chart = ms.chart
    arrays = snapshot_arrays(ms)
    for name, arr in arrays.items():
        write_matrix(os.path.join(directory, f"{name}.csv"), arr)
    finite = np.all([np.isfinite(a) for a in arrays.values()], axis=0)
    write_json(os.path.join(directory, "manifest.json"), {
        "route": route,
        "chart": {"x1_min": chart.x1_min, "x1_max": chart.x1_max,
                  "x2_min": chart.x2_min, "x2_max": chart.x2_max,
                  "n1": chart.n1, "n2": chart.n2},
        "grids": {n: f"{n}.csv" for n in arrays},
        "mask": _mask_rows(finite),
        "fingerprint": fingerprint,
        "config": config_text,
    })


def snapshot_arrays(ms):
    """Node arrays of the base fields (gridded fields are stored as they are)."""
    X1, X2 = ms.chart.mesh()
    src = {"mu": ms.lam.mu, "sigma": ms.lam.sigma, "y": ms.lam.y,
           "ghat11": ms.ghat11, "Vhat": ms.Vhat}
    out = {}
    for name in GRID_NAMES:
        if name in ms.grids:
            out[name] = ms.grids[name].values
        else:
            out[name] = np.broadcast_to(src[name]._vp(X1, X2)[0], X1.shape).astype(float)
    return out


def load_snapshot(directory):
    """(manifest, chart, arrays) of a snapshot directory."""
    path = os.path.join(directory, "manifest.json")
    try:
        man = read_json(path)
    except OSError as exc:
        raise ConfigError(f"no snapshot at {directory}: {exc}") from None
    if man.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"snapshot schema {man.get('schema_version')} not supported")
    chart = Chart(**man["chart"])
    arrays = {n: read_matrix(os.path.join(directory, f)) for n, f in man["grids"].items()}
    for n, a in arrays.items():
        if a.shape != (chart.n1, chart.n2):
            raise ConfigError(f"snapshot grid {n} has shape {a.shape}")
    return man, chart, arrays
