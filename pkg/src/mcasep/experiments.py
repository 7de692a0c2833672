"""Noise sweeps and the canned experiments behind the command line.

Every random draw is seeded from ``SeedSequence([base_seed, snr_index,
realization_index])``, so a sweep cell does not depend on which other
cells ran or in which order.  Outputs are tidy CSV records plus JSON
aggregates; floats are written with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .esp import (EnvelopeSet, build_esp_frame, constant_envelope, make_exponential_envelopes,
                  make_rectangular_envelopes, normalize_parseval, one_hot_envelope)
from .frames import InvalidParameterError, Signal, dft_frame, identity_frame
from .io import write_grid, write_json, write_signal
from .signals import (ANALYTIC_INTERVALS, OscillatorSpec, SyntheticTargetSpec, add_awgn, driven_oscillator,
                      interval_errors, relative_error, spike_plus_sine, synthetic_elastic_target)
from .solver import NumericalDivergenceError, SolverConfig, lambda_max, solve_mca

log = logging.getLogger(__name__)

LAMBDA_GRID = tuple(10.0 ** (-3 + 0.25 * j) for j in range(12))
RECT_DURATIONS = (0.27e-3, 0.54e-3, 0.1e-3)
EXP_TIME_CONSTANTS = (1.78e-3, 3.16e-3, 5.62e-3, 10e-3, 17.78e-3, 31.62e-3)
METHODS = ("fft", "esp")
LARGE_RUN_REALIZATIONS = 50


class UnknownExperimentError(KeyError):
    pass


def cell_seed(base: int, snr_index: int, realization: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), int(snr_index), int(realization)])


# frames ----------------------------------------------------------------------------


def default_envelopes(N: int, sample_rate: float, normalize: bool = True) -> tuple:
    """Rectangular windows for the short part, decaying exponentials for the long part."""
    e1 = make_rectangular_envelopes(RECT_DURATIONS, sample_rate, N)
    e2 = make_exponential_envelopes(EXP_TIME_CONSTANTS, sample_rate, N)
    if normalize:
        e1, e2 = normalize_parseval(e1), normalize_parseval(e2)
    return e1, e2


def build_frames(method: str, N: int, sample_rate: float, envelopes: dict | None = None,
                 normalize: bool = True):
    """``(A1, A2)`` for ``method``.

    ``fft`` pairs the identity with the unitary DFT.  ``esp`` uses
    ``envelopes = {"frame1": ..., "frame2": ...}`` (envelope-set dicts) when
    given and the default rectangular/exponential sets otherwise.
    """
    if method == "fft":
        return identity_frame(N), dft_frame(N)
    if method != "esp":
        raise InvalidParameterError(f"method must be one of {METHODS}, got {method!r}")
    if envelopes is None:
        e1, e2 = default_envelopes(N, sample_rate, normalize)
    else:
        e1 = EnvelopeSet.from_dict(envelopes["frame1"])
        e2 = EnvelopeSet.from_dict(envelopes["frame2"])
        if e1.N != N or e2.N != N:
            raise InvalidParameterError(f"envelope length ({e1.N}, {e2.N}) does not match signal length {N}")
        if normalize:
            e1, e2 = normalize_parseval(e1), normalize_parseval(e2)
    return build_esp_frame(e1), build_esp_frame(e2)


# noise sweep ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    snr_grid: tuple = (10.0, 20.0, 30.0, 40.0)
    lambda_grid: tuple = LAMBDA_GRID
    realizations: int = 20
    seed: int = 0
    method: str = "fft"
    iterations: int = 1000
    mu: float = 1.0
    envelopes: dict | None = None
    target: SyntheticTargetSpec = field(default_factory=SyntheticTargetSpec)
    intervals: tuple = ANALYTIC_INTERVALS
    reference_power: float | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.snr_grid or not self.lambda_grid:
            raise InvalidParameterError("snr_grid and lambda_grid must be nonempty")
        if int(self.realizations) < 1:
            raise InvalidParameterError("realizations must be >= 1")
        if any(not f > 0 for f in self.lambda_grid):
            raise InvalidParameterError("lambda fractions must be positive")
        if self.method not in METHODS:
            raise InvalidParameterError(f"method must be one of {METHODS}")
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(f) for f in self.lambda_grid))
        object.__setattr__(self, "intervals", tuple(tuple(float(v) for v in i) for i in self.intervals))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target"] = self.target.to_dict()
        d["snr_grid"] = list(self.snr_grid)
        d["lambda_grid"] = list(self.lambda_grid)
        d["intervals"] = [list(i) for i in self.intervals]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        if "target" in d and isinstance(d["target"], dict):
            d["target"] = SyntheticTargetSpec.from_dict(d["target"])
        for key in ("snr_grid", "lambda_grid", "intervals"):
            if key in d:
                d[key] = tuple(tuple(v) if isinstance(v, list) else v for v in d[key])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidParameterError(f"unknown sweep fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SweepSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SweepRecord:
    snr_index: int
    snr_db: float
    lambda_index: int
    lambda_fraction: float
    realization: int
    m1: float
    m2: float
    status: str = "ok"


def _aggregate(records, spec: SweepSpec) -> list:
    out = []
    for si, snr in enumerate(spec.snr_grid):
        for li, frac in enumerate(spec.lambda_grid):
            cell = [r for r in records if r.snr_index == si and r.lambda_index == li]
            ok = [r for r in cell if r.status == "ok"]
            m1 = np.array([r.m1 for r in ok])
            m2 = np.array([r.m2 for r in ok])
            out.append({
                "snr_index": si, "snr_db": snr, "lambda_index": li, "lambda_fraction": frac,
                "count": len(ok), "failures": len(cell) - len(ok),
                "mean_m1": float(m1.mean()) if ok else None, "std_m1": float(m1.std()) if ok else None,
                "mean_m2": float(m2.mean()) if ok else None, "std_m2": float(m2.std()) if ok else None,
            })
    return out


def _best(aggregates, spec: SweepSpec) -> list:
    best = []
    for si, snr in enumerate(spec.snr_grid):
        rows = [a for a in aggregates if a["snr_index"] == si and a["count"] > 0]
        entry = {"snr_index": si, "snr_db": snr}
        for m in ("m1", "m2"):
            if not rows:
                entry[f"best_{m}"] = None
                continue
            # first minimum in grid order breaks ties deterministically
            row = min(rows, key=lambda a: (a[f"mean_{m}"], a["lambda_index"]))
            entry[f"best_{m}"] = {"lambda_index": row["lambda_index"], "lambda_fraction": row["lambda_fraction"],
                                  "mean": row[f"mean_{m}"], "std": row[f"std_{m}"]}
        best.append(entry)
    return best


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list
    aggregates: list
    best: list

    def best_means(self, metric: str) -> list:
        return [b[f"best_{metric}"]["mean"] if b[f"best_{metric}"] else None for b in self.best]

    def recompute_aggregates(self) -> list:
        return _aggregate(self.records, self.spec)

    def write(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "records.csv"), "w", newline="") as f:
            w = csv.writer(f)
            names = list(SweepRecord.__dataclass_fields__)
            w.writerow(names)
            for r in self.records:
                w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, n) for n in names)])
        write_json(os.path.join(directory, "aggregates.json"), {"aggregates": self.aggregates, "best": self.best})
        write_json(os.path.join(directory, "spec.json"), self.spec.to_dict())


def run_noise_sweep(spec: SweepSpec, frames=None) -> SweepResult:
    """Monte Carlo over (SNR, lambda, realization) with BPD.

    Noise for a given (SNR, realization) is shared by every lambda so the
    lambda comparison is paired.  Metrics use the clean mixture as the
    reference.  A diverged solve is recorded and left out of the aggregates.
    """
    if spec.realizations > LARGE_RUN_REALIZATIONS:
        log.warning("%d realizations per cell: expect a long run", spec.realizations)
    y, _, _ = synthetic_elastic_target(spec.target)
    A1, A2 = frames if frames is not None else build_frames(spec.method, y.N, y.sample_rate, spec.envelopes)
    base_cfg = SolverConfig("bpd", mu=spec.mu, max_iters=spec.iterations, track_objective=False,
                            report_sparse_iterate=False)
    I1, I2 = spec.intervals

    def cell(task):
        si, r = task
        noisy = add_awgn(y, spec.snr_grid[si], cell_seed(spec.seed, si, r), spec.reference_power)
        lm = lambda_max(noisy, A1, A2)
        out = []
        for li, frac in enumerate(spec.lambda_grid):
            try:
                res = solve_mca(noisy, A1, A2, base_cfg.with_lambda(frac * lm))
                m = interval_errors(noisy, res.y1, res.y2, I1, I2, reference=y)
                out.append(SweepRecord(si, spec.snr_grid[si], li, frac, r, m.m1, m.m2))
            except NumericalDivergenceError as exc:
                log.warning("snr %g lambda %g realization %d: %s", spec.snr_grid[si], frac, r, exc)
                out.append(SweepRecord(si, spec.snr_grid[si], li, frac, r, math.nan, math.nan, "diverged"))
        return out

    tasks = [(si, r) for si in range(len(spec.snr_grid)) for r in range(spec.realizations)]
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(cell, tasks))
    else:
        chunks = [cell(t) for t in tasks]
    records = sorted((r for c in chunks for r in c),
                     key=lambda r: (r.snr_index, r.lambda_index, r.realization))
    aggregates = _aggregate(records, spec)
    return SweepResult(spec, records, aggregates, _best(aggregates, spec))


def non_increasing(values, slack: float = 0.0) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


# canned experiments ---------------------------------------------------------------------


@dataclass
class ExperimentReport:
    name: str
    metrics: dict
    thresholds: dict
    passed: bool
    runtime_s: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "metrics": self.metrics, "thresholds": self.thresholds, "passed": self.passed}

    def write(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        write_json(os.path.join(directory, "metrics.json"), self.to_dict())


def _check(metrics: dict, thresholds: dict) -> bool:
    """Every ``thresholds[k]`` is an upper bound on ``metrics[k]``."""
    return all(metrics[k] is not None and metrics[k] < v for k, v in thresholds.items())


def spike_sine_fft(out: str | None = None, lambda_fraction: float = 1e-4, iterations: int = 1000,
                   **_) -> ExperimentReport:
    y, (spike, tone) = spike_plus_sine()
    A1, A2 = identity_frame(y.N), dft_frame(y.N)
    cfg = SolverConfig("bpd", max_iters=iterations).with_lambda(lambda_fraction * lambda_max(y, A1, A2))
    res = solve_mca(y, A1, A2, cfg)
    metrics = {"spike_error": relative_error(res.y1, spike), "sine_error": relative_error(res.y2, tone),
               "lambda_fraction": lambda_fraction, "iterations": iterations}
    thresholds = {"spike_error": 0.01, "sine_error": 0.01}
    if out:
        res.export(out)
        write_signal(os.path.join(out, "y.csv"), y)
    return ExperimentReport("spike-sine-fft", metrics, thresholds, _check(metrics, thresholds))


def ode_esp(out: str | None = None, iterations: int = 1000, **_) -> ExperimentReport:
    spec = OscillatorSpec()
    y, hom, par = driven_oscillator(spec)
    e1 = normalize_parseval(make_exponential_envelopes([spec.tau], spec.sample_rate, spec.N))
    e2 = normalize_parseval(constant_envelope(spec.N))
    A1, A2 = build_esp_frame(e1), build_esp_frame(e2)
    res = solve_mca(y, A1, A2, SolverConfig("bp", max_iters=iterations, track_objective=False))
    metrics = {"homogeneous_error": relative_error(res.y1, hom), "particular_error": relative_error(res.y2, par),
               "iterations": iterations}
    thresholds = {"homogeneous_error": 0.005, "particular_error": 0.0025}
    if out:
        res.export(out)
        write_signal(os.path.join(out, "y.csv"), y)
    return ExperimentReport("ode-esp", metrics, thresholds, _check(metrics, thresholds))


def degenerate_esp(out: str | None = None, iterations: int = 1000, **_) -> ExperimentReport:
    y, _ = spike_plus_sine()
    cfg = SolverConfig("bp", max_iters=iterations, track_objective=False)
    ref = solve_mca(y, identity_frame(y.N), dft_frame(y.N), cfg)
    A1 = build_esp_frame(normalize_parseval(one_hot_envelope(y.N)))
    A2 = build_esp_frame(normalize_parseval(constant_envelope(y.N)))
    res = solve_mca(y, A1, A2, cfg)
    metrics = {"y1_difference": relative_error(res.y1, ref.y1), "y2_difference": relative_error(res.y2, ref.y2),
               "iterations": iterations}
    thresholds = {"y1_difference": 0.01, "y2_difference": 0.02}
    if out:
        res.export(out)
    return ExperimentReport("degenerate-esp", metrics, thresholds, _check(metrics, thresholds))


def lambda_max_zero(out: str | None = None, seed: int = 0, trials: int = 10, N: int = 64,
                    **_) -> ExperimentReport:
    rng = np.random.default_rng(seed)
    A1, A2 = identity_frame(N), dft_frame(N)
    largest = 0.0
    for _ in range(trials):
        y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        cfg = SolverConfig("bpd", max_iters=1000).with_lambda(lambda_max(y, A1, A2))
        res = solve_mca(y, A1, A2, cfg)
        largest = max(largest, float(np.max(np.abs(res.u1))), float(np.max(np.abs(res.u2))))
    metrics = {"max_abs_coefficient": largest, "trials": trials, "N": N}
    passed = largest == 0.0
    if out:
        os.makedirs(out, exist_ok=True)
    return ExperimentReport("lambda-max-zero", metrics, {"max_abs_coefficient": "== 0"}, passed)


# synthetic elastic target -------------------------------------------------------------

TARGET_SNR_DB = 10.0
TARGET_REALIZATIONS = 20
TARGET_LAMBDA_CANDIDATES = (10 ** -2.5, 10 ** -2.0, 10 ** -1.5)
TARGET_TUNING_REALIZATIONS = 2
TARGET_NOISY_ITERATIONS = 100


def tune_lambda(y: Signal, A1, A2, snr_db: float, candidates, seed: int, realizations: int,
                iterations: int, intervals=ANALYTIC_INTERVALS, mu: float = 1.0) -> tuple:
    """Pick the lambda fraction with the smallest mean ``m1 + m2``.

    Tuning noise comes from a seed stream disjoint from evaluation
    (``snr_index = -1`` is never used by sweeps).  Returns
    ``(best_fraction, table)`` with one ``(fraction, mean_m1, mean_m2)`` row
    per candidate.
    """
    table = []
    noisy = [add_awgn(y, snr_db, np.random.SeedSequence([int(seed), 2**31, r])) for r in range(realizations)]
    for frac in candidates:
        ms = []
        for yn in noisy:
            cfg = SolverConfig("bpd", mu=mu, max_iters=iterations, track_objective=False,
                               report_sparse_iterate=False).with_lambda(frac * lambda_max(yn, A1, A2))
            res = solve_mca(yn, A1, A2, cfg)
            m = interval_errors(yn, res.y1, res.y2, *intervals, reference=y)
            ms.append((m.m1, m.m2))
        mean = np.mean(ms, axis=0)
        table.append((float(frac), float(mean[0]), float(mean[1])))
    best = min(table, key=lambda row: row[1] + row[2])[0]
    return best, table


def synthetic_target(out: str | None = None, seed: int = 0, iterations: int = 1000,
                     realizations: int = TARGET_REALIZATIONS, noisy_iterations: int = TARGET_NOISY_ITERATIONS,
                     method: str = "esp", **_) -> ExperimentReport:
    """Clean BP against truth, then noisy BPD with a tuned lambda."""
    y, short, long = synthetic_elastic_target()
    A1, A2 = build_frames(method, y.N, y.sample_rate)
    clean = solve_mca(y, A1, A2, SolverConfig("bp", max_iters=iterations, track_objective=False))
    frac, table = tune_lambda(y, A1, A2, TARGET_SNR_DB, TARGET_LAMBDA_CANDIDATES, seed,
                              TARGET_TUNING_REALIZATIONS, noisy_iterations)
    ms = []
    for r in range(realizations):
        yn = add_awgn(y, TARGET_SNR_DB, cell_seed(seed, 0, r))
        cfg = SolverConfig("bpd", max_iters=noisy_iterations, track_objective=False,
                           report_sparse_iterate=False).with_lambda(frac * lambda_max(yn, A1, A2))
        res = solve_mca(yn, A1, A2, cfg)
        m = interval_errors(yn, res.y1, res.y2, reference=y)
        ms.append((m.m1, m.m2))
    ms = np.array(ms)
    metrics = {
        "clean_short_error": relative_error(clean.y1, short),
        "clean_long_error": relative_error(clean.y2, long),
        "noisy_mean_m1": float(ms[:, 0].mean()),
        "noisy_std_m1": float(ms[:, 0].std()),
        "noisy_mean_m2": float(ms[:, 1].mean()),
        "noisy_std_m2": float(ms[:, 1].std()),
        "lambda_fraction": frac,
        "tuning": [list(row) for row in table],
        "method": method,
        "snr_db": TARGET_SNR_DB,
        "realizations": realizations,
    }
    thresholds = {"clean_short_error": 0.10, "clean_long_error": 0.10, "noisy_mean_m1": 0.25, "noisy_mean_m2": 1.0}
    if out:
        clean.export(os.path.join(out, "clean"))
        write_signal(os.path.join(out, "y.csv"), y)
        write_signal(os.path.join(out, "short_truth.csv"), short)
        write_signal(os.path.join(out, "long_truth.csv"), long)
    return ExperimentReport("synthetic-target", metrics, thresholds, _check(metrics, thresholds))


def noise_sweep(out: str | None = None, seed: int = 0, realizations: int = 20, **_) -> ExperimentReport:
    spec = SweepSpec(seed=seed, realizations=realizations)
    result = run_noise_sweep(spec)
    best1, best2 = result.best_means("m1"), result.best_means("m2")
    metrics = {"snr_db": list(spec.snr_grid), "best_mean_m1": best1, "best_mean_m2": best2}
    passed = None not in best1 and None not in best2 and non_increasing(best1) and non_increasing(best2)
    if out:
        result.write(out)
    return ExperimentReport("noise-sweep", metrics, {"best_mean_m1": "non-increasing in SNR",
                                                     "best_mean_m2": "non-increasing in SNR"}, passed)


def imaging(out: str | None = None, iterations: int = 5000, **_) -> ExperimentReport:
    from .imaging import backproject, export_scan, k_space, normalized_target_strength, separate_scan, synthesize_scan

    scan, short_truth, long_truth = synthesize_scan()
    A1, A2 = identity_frame(scan.N), dft_frame(scan.N)
    sep = separate_scan(scan, A1, A2, SolverConfig("bp", max_iters=iterations, track_objective=False))
    full = backproject(scan)
    img_s, img_l = backproject(sep.short), backproject(sep.long)
    full_norm = np.linalg.norm(full.pixels)
    metrics = {
        "image_sum_error": float(np.linalg.norm(img_s.pixels + img_l.pixels - full.pixels) / full_norm),
        "short_truth_error": relative_error(sep.short.data, short_truth.data),
        "long_truth_error": relative_error(sep.long.data, long_truth.data),
        **sep.summary(),
    }
    thresholds = {"image_sum_error": 1e-4}
    if out:
        export_scan(scan, os.path.join(out, "scan"))
        for stem, img in (("full", full), ("short", img_s), ("long", img_l)):
            img.export(out, stem)
            write_grid(os.path.join(out, f"{stem}_kspace.csv"), k_space(img))
        freqs, nts = normalized_target_strength(scan)
        write_grid(os.path.join(out, "nts.csv"), nts)
        write_json(os.path.join(out, "nts_axes.json"), {"freqs": freqs.tolist(), "angles": scan.angles.tolist()})
    return ExperimentReport("imaging", metrics, thresholds, _check(metrics, thresholds))


EXPERIMENTS = {
    "spike-sine-fft": spike_sine_fft,
    "ode-esp": ode_esp,
    "degenerate-esp": degenerate_esp,
    "lambda-max-zero": lambda_max_zero,
    "synthetic-target": synthetic_target,
    "noise-sweep": noise_sweep,
    "imaging": imaging,
}


def run_canned_experiment(name: str, out: str | None = None, **kwargs) -> ExperimentReport:
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    t0 = time.perf_counter()
    report = EXPERIMENTS[name](out=out, **kwargs)
    report.runtime_s = time.perf_counter() - t0
    if out:
        report.write(out)
    return report
