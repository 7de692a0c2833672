"""Circular-aperture scans: separation per angle, backprojection imaging,
normalized target strength and k-space.

Geometry: the target sits at the origin on a turntable; at aspect angle
``theta`` the transducer is at ``R (cos theta, sin theta)`` in target
coordinates, ``R`` the standoff distance.  Time series are matched-filtered
and cover the retained window ``[t_start, t_end)``.

Images are formed by time-domain delay-and-sum backprojection, which is
linear in the data, so images of separated components add up to the image
of their sum.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .frames import FrameOperator, InvalidParameterError, Signal
from .io import read_samples, sidecar_path, write_complex_grid, write_grid, write_json, write_signal
from .signals import (IMAGING_INTERVALS, IntervalMetrics, UndefinedMetricError, interval_errors, lfm_chirp,
                      matched_filter)
from .solver import SolverConfig, solve_mca

log = logging.getLogger(__name__)


class ScanFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    standoff_distance: float = 0.75
    sound_speed: float = 343.0


@dataclass
class CircularScan:
    angles: np.ndarray
    data: np.ndarray  # (n_angles, N) complex
    sample_rate: float
    window: tuple
    geometry: Geometry = field(default_factory=Geometry)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float).ravel()
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.complex128))
        if self.data.shape[0] != self.angles.size:
            raise ScanFormatError(f"{self.angles.size} angles but {self.data.shape[0]} time series")
        if self.angles.size > 1 and np.any(np.diff(self.angles) <= 0):
            raise ScanFormatError("angles must be unique and strictly increasing")
        if not self.sample_rate > 0:
            raise ScanFormatError("sample_rate must be positive")
        self.window = (float(self.window[0]), float(self.window[1]))

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def start_time(self) -> float:
        return self.window[0]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.N) / self.sample_rate

    def signal(self, i: int) -> Signal:
        return Signal(self.data[i], self.sample_rate, self.start_time)

    def signals(self) -> list:
        return [self.signal(i) for i in range(self.angles.size)]

    def with_data(self, data) -> "CircularScan":
        return CircularScan(self.angles.copy(), data, self.sample_rate, self.window, self.geometry)

    def __add__(self, other: "CircularScan") -> "CircularScan":
        return self.with_data(self.data + other.data)


# scan files ---------------------------------------------------------------------


def _angle_file(angle: float) -> str:
    return f"angle_{angle:g}.csv"


def export_scan(scan: CircularScan, directory: str) -> None:
    """Write ``manifest.json`` plus one ``angle_<deg>.csv`` per angle."""
    os.makedirs(directory, exist_ok=True)
    files = [_angle_file(a) for a in scan.angles]
    write_json(os.path.join(directory, "manifest.json"), {
        "sound_speed": scan.geometry.sound_speed,
        "standoff_distance": scan.geometry.standoff_distance,
        "sample_rate": scan.sample_rate,
        "window": list(scan.window),
        "time_offset": scan.start_time,
        "angles": [float(a) for a in scan.angles],
        "files": files,
    })
    for i, name in enumerate(files):
        write_signal(os.path.join(directory, name), scan.signal(i))


def ingest_scan(path: str) -> CircularScan:
    """Load a scan directory (or its manifest path) and crop to the window.

    Sample ``n`` of each CSV is at time ``time_offset + n / sample_rate``
    (``time_offset`` defaults to 0); samples in ``[t0, t1)`` are kept.
    """
    manifest_path = os.path.join(path, "manifest.json") if os.path.isdir(path) else path
    directory = os.path.dirname(manifest_path)
    with open(manifest_path) as f:
        m = json.load(f)
    for key in ("sound_speed", "standoff_distance", "sample_rate", "window", "angles"):
        if key not in m:
            raise ScanFormatError(f"manifest missing {key!r}")
    angles = [float(a) for a in m["angles"]]
    files = m.get("files") or [_angle_file(a) for a in angles]
    if len(files) != len(angles):
        raise ScanFormatError("manifest 'files' and 'angles' differ in length")
    fs = float(m["sample_rate"])
    missing = [a for a, name in zip(angles, files) if not os.path.exists(os.path.join(directory, name))]
    if missing:
        raise ScanFormatError(f"missing time series for angles {missing}")
    series, lengths, bad_rate = [], {}, []
    for a, name in zip(angles, files):
        p = os.path.join(directory, name)
        x = read_samples(p)
        side = sidecar_path(p)
        if os.path.exists(side):
            with open(side) as f:
                rate = json.load(f).get("sample_rate", fs)
            if not math.isclose(rate, fs, rel_tol=1e-12):
                bad_rate.append(a)
        lengths[a] = x.size
        series.append(x)
    if bad_rate:
        raise ScanFormatError(f"sample rate differs from manifest at angles {bad_rate}")
    counts = {}
    for n in lengths.values():
        counts[n] = counts.get(n, 0) + 1
    if len(counts) > 1:
        common = max(counts, key=counts.get)
        odd = [a for a, n in lengths.items() if n != common]
        raise ScanFormatError(f"time series length differs from {common} samples at angles {odd}")
    t0, t1 = (float(v) for v in m["window"])
    offset = float(m.get("time_offset", 0.0))
    n_all = series[0].size
    t = offset + np.arange(n_all) / fs
    eps = 1e-9 / fs
    keep = (t >= t0 - eps) & (t < t1 - eps)
    if not np.any(keep):
        raise ScanFormatError(f"window {m['window']} contains no samples")
    first = int(np.argmax(keep))
    data = np.array(series)[:, keep]
    geometry = Geometry(float(m["standoff_distance"]), float(m["sound_speed"]))
    return CircularScan(angles, data, fs, (offset + first / fs, t1), geometry)


# separation ---------------------------------------------------------------------------


@dataclass
class ScanSeparation:
    short: CircularScan
    long: CircularScan
    metrics: list  # IntervalMetrics or the exception raised for that angle
    errors: dict  # angle -> solver exception
    residuals: np.ndarray

    def summary(self) -> dict:
        good = [m for m in self.metrics if isinstance(m, IntervalMetrics)]
        m1 = np.array([m.m1 for m in good])
        m2 = np.array([m.m2 for m in good])
        return {
            "angles_with_metrics": len(good),
            "angles_failed": len(self.errors),
            "m1_mean": float(m1.mean()) if good else None,
            "m1_std": float(m1.std()) if good else None,
            "m2_mean": float(m2.mean()) if good else None,
            "m2_std": float(m2.std()) if good else None,
            "max_relative_residual": float(np.max(self.residuals)) if self.residuals.size else None,
        }


def separate_scan(scan: CircularScan, A1: FrameOperator, A2: FrameOperator, cfg: SolverConfig,
                  intervals=IMAGING_INTERVALS, references: CircularScan | None = None,
                  lambda_fraction: float | None = None) -> ScanSeparation:
    """Separate every time series; a failing angle is recorded, not fatal.

    With ``lambda_fraction`` set, each angle uses the common weight
    ``lambda_fraction * lambda_max`` of its own series.
    """
    from .solver import lambda_max

    real = not np.any(scan.data.imag)
    short = np.zeros_like(scan.data)
    long = np.zeros_like(scan.data)
    metrics, errors = [], {}
    residuals = np.zeros(scan.angles.size)
    for i, angle in enumerate(scan.angles):
        y = scan.signal(i)
        try:
            c = cfg
            if lambda_fraction is not None:
                lm = lambda_max(y, A1, A2)
                if lm == 0:
                    raise UndefinedMetricError("zero time series")
                c = cfg.with_lambda(lambda_fraction * lm)
            if not np.any(y.samples):
                y1 = y2 = np.zeros(scan.N, dtype=np.complex128)
            else:
                res = solve_mca(y, A1, A2, c)
                y1, y2 = res.y1.samples, res.y2.samples
        except Exception as exc:
            log.warning("angle %g: separation failed: %s", angle, exc)
            errors[float(angle)] = exc
            metrics.append(exc)
            continue
        if real:
            y1, y2 = y1.real, y2.real
        short[i], long[i] = y1, y2
        norm = np.linalg.norm(y.samples)
        residuals[i] = np.linalg.norm(y.samples - short[i] - long[i]) / norm if norm > 0 else 0.0
        ref = references.signal(i) if references is not None else None
        try:
            metrics.append(interval_errors(y, y.replace(short[i]), y.replace(long[i]), *intervals, reference=ref))
        except ValueError as exc:
            metrics.append(exc)
    return ScanSeparation(scan.with_data(short), scan.with_data(long), metrics, errors, residuals)


# image formation ------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid centred on the turntable axis.

    The default covers a square twice the size of ``target_extent``.
    """

    size: int = 128
    half_width: float = 0.2

    @classmethod
    def for_target(cls, target_extent: float, size: int = 128) -> "GridSpec":
        return cls(size, target_extent)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.size)

    @property
    def pixel_spacing(self) -> float:
        return 2 * self.half_width / (self.size - 1)


@dataclass
class SasImage:
    pixels: np.ndarray  # (ny, nx) complex, row index = y
    x: np.ndarray
    y: np.ndarray

    @property
    def pixel_spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def extent(self) -> tuple:
        return (float(self.x[0]), float(self.x[-1]), float(self.y[0]), float(self.y[-1]))

    def peak(self) -> tuple:
        """``(x, y)`` of the brightest pixel."""
        iy, ix = np.unravel_index(np.argmax(np.abs(self.pixels)), self.pixels.shape)
        return float(self.x[ix]), float(self.y[iy])

    def export(self, directory: str, stem: str = "image") -> None:
        os.makedirs(directory, exist_ok=True)
        write_grid(os.path.join(directory, f"{stem}.csv"), np.abs(self.pixels))
        write_complex_grid(os.path.join(directory, f"{stem}_complex.csv"), self.pixels)
        write_json(os.path.join(directory, f"{stem}.json"), {
            "extent": list(self.extent),
            "pixel_spacing": self.pixel_spacing,
            "shape": list(self.pixels.shape),
            "rows": "y ascending",
            "cols": "x ascending",
        })


def sensor_position(angle_deg: float, geometry: Geometry) -> tuple:
    th = math.radians(angle_deg)
    R = geometry.standoff_distance
    return R * math.cos(th), R * math.sin(th)


def backproject(scan: CircularScan, grid: GridSpec = GridSpec(), analytic: bool = True) -> SasImage:
    """Delay-and-sum image.

    Each pixel accumulates, over angles in order, the linearly interpolated
    sample at the two-way travel time from the transducer.  Times outside
    the window contribute zero.  With ``analytic`` the real part of every
    series is replaced by its analytic signal first (still linear).
    """
    axis = grid.axis
    X, Y = np.meshgrid(axis, axis)
    data = scipy.signal.hilbert(scan.data.real, axis=1) if analytic else scan.data
    img = np.zeros(X.shape, dtype=np.complex128)
    c = scan.geometry.sound_speed
    n = np.arange(scan.N)
    for i, angle in enumerate(scan.angles):
        sx, sy = sensor_position(angle, scan.geometry)
        delay = 2.0 * np.hypot(X - sx, Y - sy) / c
        idx = (delay - scan.start_time) * scan.sample_rate
        row = data[i]
        img += np.interp(idx, n, row.real, left=0.0, right=0.0)
        img += 1j * np.interp(idx, n, row.imag, left=0.0, right=0.0)
    return SasImage(img, axis.copy(), axis.copy())


def normalized_target_strength(scan: CircularScan, mode: str = "global", onesided: bool = True):
    """Per-angle magnitude spectra in dB, normalized across all angles.

    ``mode="global"`` divides by the maximum over every (frequency, angle)
    bin; ``mode="per_frequency"`` divides each frequency row by its maximum
    over angle.  Returns ``(freqs, nts)`` with ``nts`` shaped
    ``(n_freqs, n_angles)``.
    """
    spec = np.abs(np.fft.fft(scan.data, axis=1)).T
    freqs = np.fft.fftfreq(scan.N, 1.0 / scan.sample_rate)
    if onesided:
        keep = freqs >= 0
        if scan.N % 2 == 0:
            keep[scan.N // 2] = True
        freqs = np.abs(freqs[keep])
        spec = spec[keep]
        order = np.argsort(freqs, kind="stable")
        freqs, spec = freqs[order], spec[order]
    if mode == "global":
        peak = spec.max()
        if peak == 0:
            raise UndefinedMetricError("normalized target strength of an all-zero scan")
        ratio = spec / peak
    elif mode == "per_frequency":
        peak = spec.max(axis=1, keepdims=True)
        if np.all(peak == 0):
            raise UndefinedMetricError("normalized target strength of an all-zero scan")
        ratio = np.divide(spec, peak, out=np.zeros_like(spec), where=peak > 0)
    else:
        raise InvalidParameterError(f"unknown normalization mode {mode!r}")
    tiny = np.finfo(float).tiny
    return freqs, 20 * np.log10(np.maximum(ratio, tiny))


def k_space(image: SasImage) -> np.ndarray:
    """Centred magnitude of the 2-D DFT of the complex image."""
    return np.abs(np.fft.fftshift(np.fft.fft2(image.pixels)))


# synthetic scans ---------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRecipe:
    """Desk-scale stand-in for a turntable measurement.

    Point scatterers give the short-duration (geometric) returns; angles
    inside ``ring_band`` (degrees, inclusive) also carry a decaying
    resonance starting at the first geometric arrival.
    """

    n_angles: int = 8
    sample_rate: float = 100e3
    window: tuple = (3e-3, 8e-3)
    geometry: Geometry = Geometry()
    chirp: tuple = (30e3, 10e3, 1e-3)
    scatterers: tuple = ((0.05, 0.0, 1.0), (-0.03, 0.02, 0.6))
    ring_frequency: float = 20e3
    ring_tau: float = 3.16e-3
    ring_amplitude: float = 0.15
    ring_band: tuple = (-10.0, 90.0)


def _chirp_at(t, f0, f1, T):
    inside = (t >= 0) & (t < T)
    rate = (f1 - f0) / T
    return np.where(inside, np.cos(2 * np.pi * (f0 * t + 0.5 * rate * t**2)), 0.0)


def _in_band(angle, band) -> bool:
    lo, hi = band
    a = (angle - lo) % 360.0
    return a <= (hi - lo) % 360.0 or math.isclose(a, 0.0)


def synthesize_scan(recipe: ScanRecipe = ScanRecipe()):
    """Matched-filtered scan with exact per-angle short/long ground truth.

    Returns ``(scan, short_truth, long_truth)``.
    """
    f0, f1, T = recipe.chirp
    fs = recipe.sample_rate
    t0, t1 = recipe.window
    n = int(round((t1 - t0) * fs))
    # raw returns start one pulse length early so the filter sees the whole echo
    pad = int(round(T * fs))
    t_raw = t0 + (np.arange(n + pad) - pad) / fs
    replica = lfm_chirp(f0, f1, T, fs)
    angles = np.arange(recipe.n_angles) * 360.0 / recipe.n_angles
    c = recipe.geometry.sound_speed
    short = np.zeros((angles.size, n))
    long = np.zeros((angles.size, n))
    for i, a in enumerate(angles):
        sx, sy = sensor_position(a, recipe.geometry)
        raw_s = np.zeros(t_raw.size)
        delays = []
        for (px, py, amp) in recipe.scatterers:
            d = 2 * math.hypot(px - sx, py - sy) / c
            delays.append(d)
            raw_s += amp * _chirp_at(t_raw - d, f0, f1, T)
        raw_l = np.zeros(t_raw.size)
        if _in_band(a, recipe.ring_band):
            start = min(delays)
            s = t_raw - start
            ring = np.where(s >= 0, recipe.ring_amplitude * np.exp(-np.clip(s, 0, None) / recipe.ring_tau)
                            * np.sin(2 * np.pi * recipe.ring_frequency * s), 0.0)
            raw_l = np.convolve(ring, replica.real)[:t_raw.size]
        short[i] = matched_filter(Signal(raw_s, fs), replica).samples.real[pad:]
        long[i] = matched_filter(Signal(raw_l, fs), replica).samples.real[pad:]
    window = (t0, t1)
    mk = lambda d: CircularScan(angles, d, fs, window, recipe.geometry)
    return mk(short + long), mk(short), mk(long)
