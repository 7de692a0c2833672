"""CSV/JSON formats.

A signal is ``<name>.csv`` with columns ``index,real,imag`` plus a sidecar
``<name>.json`` holding ``{"sample_rate", "N", "start_time", "labels"}``.
Floats are written with ``repr`` so files round-trip exactly and identical
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .frames import Signal


def sidecar_path(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".json"


def write_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def write_signal(path: str, sig: Signal) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "real", "imag"])
        for i, v in enumerate(sig.samples):
            w.writerow([i, repr(float(v.real)), repr(float(v.imag))])
    write_json(sidecar_path(path), {
        "sample_rate": sig.sample_rate,
        "N": sig.N,
        "start_time": sig.start_time,
        "labels": sig.labels,
    })


def read_samples(path: str) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if [h.strip().lower() for h in header[:3]] != ["index", "real", "imag"]:
            raise ValueError(f"{path}: expected header index,real,imag, got {header}")
        for row in reader:
            if row:
                rows.append((int(row[0]), float(row[1]), float(row[2])))
    if not rows:
        raise ValueError(f"{path}: no samples")
    rows.sort()
    idx = [r[0] for r in rows]
    if idx != list(range(len(rows))):
        raise ValueError(f"{path}: indices must run 0..N-1 without gaps")
    arr = np.array([(r[1], r[2]) for r in rows])
    return arr[:, 0] + 1j * arr[:, 1]


def read_signal(path: str, sample_rate: float | None = None) -> Signal:
    """Read a signal CSV; the sidecar JSON supplies the sample rate if present."""
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as f:
            meta = json.load(f)
    fs = sample_rate if sample_rate is not None else meta.get("sample_rate")
    if fs is None:
        raise ValueError(f"{path}: no sample rate (missing {side}; pass one explicitly)")
    samples = read_samples(path)
    if "N" in meta and int(meta["N"]) != samples.size:
        raise ValueError(f"{path}: header says N={meta['N']} but file has {samples.size} samples")
    return Signal(samples, fs, meta.get("start_time", 0.0), meta.get("labels", {}))


def write_grid(path: str, grid: np.ndarray) -> None:
    """2-D real array as CSV (one row per line)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for row in np.asarray(grid):
            w.writerow([repr(float(v)) for v in row])


def write_complex_grid(path: str, grid: np.ndarray) -> None:
    """Complex 2-D array in long format: ``row,col,real,imag``."""
    g = np.asarray(grid)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "real", "imag"])
        for (i, j), v in np.ndenumerate(g):
            w.writerow([i, j, repr(float(v.real)), repr(float(v.imag))])
