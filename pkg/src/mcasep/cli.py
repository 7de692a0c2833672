"""Command-line interface.

Exit codes: 0 on success, 1 on a runtime failure or a failed experiment
threshold, 2 on a usage error.  Output goes to ``--out``, falling back to
``$MCASEP_OUT`` and then ``./mcasep-out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .esp import EnvelopeSet
from .experiments import EXPERIMENTS, SweepSpec, build_frames, run_canned_experiment, run_noise_sweep
from .io import read_signal, write_grid, write_json, write_signal
from .signals import (OscillatorSpec, SyntheticTargetSpec, add_awgn, driven_oscillator, interval_errors,
                      relative_error, spike_plus_sine, synthetic_elastic_target)
from .solver import SolverConfig, lambda_max, solve_mca

OUT_ENV = "MCASEP_OUT"
DEFAULT_OUT = "mcasep-out"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _out_dir(args) -> str:
    return args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT


def _load_envelopes(path: str | None):
    if path is None:
        return None
    with open(path) as f:
        d = json.load(f)
    if "frame1" not in d or "frame2" not in d:
        raise ValueError(f"{path}: expected an object with 'frame1' and 'frame2' envelope sets")
    for key in ("frame1", "frame2"):
        EnvelopeSet.from_dict(d[key])  # validate early
    return d


def _solver_config(args, y=None, A1=None, A2=None) -> SolverConfig:
    cfg = SolverConfig(args.mode, mu=args.mu, max_iters=args.iters, track_objective=False)
    if args.lambda_frac is not None and y is not None:
        cfg = cfg.with_lambda(args.lambda_frac * lambda_max(y, A1, A2))
    return cfg


# subcommands -------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    if args.kind == "scan":
        from .imaging import ScanRecipe, export_scan, synthesize_scan

        recipe = ScanRecipe(n_angles=args.angles) if args.angles else ScanRecipe()
        scan, short, long = synthesize_scan(recipe)
        if args.snr is not None:
            rng_seeds = np.random.SeedSequence(args.seed).spawn(scan.angles.size)
            power = float(np.mean(np.abs(scan.data) ** 2))
            data = np.array([add_awgn(scan.signal(i), args.snr, s, power).samples for i, s in enumerate(rng_seeds)])
            scan = scan.with_data(data.real)
        export_scan(scan, os.path.join(out, "scan"))
        export_scan(short, os.path.join(out, "short_truth"))
        export_scan(long, os.path.join(out, "long_truth"))
        return 0
    if args.kind == "spike-sine":
        y, (a, b) = spike_plus_sine()
        parts = {"y1_truth": a, "y2_truth": b}
    elif args.kind == "oscillator":
        spec = OscillatorSpec()
        y, hom, par = driven_oscillator(spec)
        parts = {"y1_truth": hom, "y2_truth": par}
    else:
        spec = SyntheticTargetSpec()
        if args.spec:
            with open(args.spec) as f:
                spec = SyntheticTargetSpec.from_dict(json.load(f))
        y, short, long = synthetic_elastic_target(spec)
        parts = {"y1_truth": short, "y2_truth": long}
        write_json(os.path.join(out, "target_spec.json"), spec.to_dict())
    if args.snr is not None:
        write_signal(os.path.join(out, "clean.csv"), y)
        y = add_awgn(y, args.snr, args.seed)
    write_signal(os.path.join(out, "y.csv"), y)
    for name, sig in parts.items():
        write_signal(os.path.join(out, f"{name}.csv"), sig)
    return 0


def _separate_scan(args, out: str) -> int:
    from .imaging import export_scan, ingest_scan, separate_scan

    scan = ingest_scan(args.input)
    A1, A2 = build_frames(args.method, scan.N, scan.sample_rate, _load_envelopes(args.envelopes))
    cfg = SolverConfig(args.mode, mu=args.mu, max_iters=args.iters, track_objective=False)
    sep = separate_scan(scan, A1, A2, cfg, lambda_fraction=args.lambda_frac)
    export_scan(sep.short, os.path.join(out, "short"))
    export_scan(sep.long, os.path.join(out, "long"))
    metrics = {"summary": sep.summary(),
               "per_angle": [{"angle": float(a), "m1": getattr(m, "m1", None), "m2": getattr(m, "m2", None),
                              "error": None if hasattr(m, "m1") else str(m)}
                             for a, m in zip(scan.angles, sep.metrics)]}
    write_json(os.path.join(out, "metrics.json"), metrics)
    return 1 if sep.errors else 0


def cmd_separate(args) -> int:
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    if os.path.isdir(args.input) or args.input.endswith("manifest.json"):
        return _separate_scan(args, out)
    y = read_signal(args.input, args.sample_rate)
    A1, A2 = build_frames(args.method, y.N, y.sample_rate, _load_envelopes(args.envelopes))
    cfg = _solver_config(args, y, A1, A2)
    res = solve_mca(y, A1, A2, cfg)
    write_signal(os.path.join(out, "y1.csv"), res.y1)
    write_signal(os.path.join(out, "y2.csv"), res.y2)
    metrics = {
        "method": args.method,
        "solver": json.loads(cfg.to_json()),
        "iterations_run": res.iterations_run,
        "reconstruction_residual": res.final_residual / max(float(np.linalg.norm(y.samples)), 1e-300),
        "nnz_x1": int(np.count_nonzero(res.u1)),
        "nnz_x2": int(np.count_nonzero(res.u2)),
    }
    for key, path in (("y1", args.truth1), ("y2", args.truth2)):
        if path:
            est = res.y1 if key == "y1" else res.y2
            metrics[f"{key}_error"] = relative_error(est, read_signal(path, y.sample_rate))
    if args.interval_metrics:
        m = interval_errors(y, res.y1, res.y2)
        metrics["m1"], metrics["m2"] = m.m1, m.m2
    write_json(os.path.join(out, "metrics.json"), metrics)
    return 0


def cmd_sweep(args) -> int:
    with open(args.spec) as f:
        d = json.load(f)
    if args.seed is not None:
        d["seed"] = args.seed
    spec = SweepSpec.from_dict(d)
    result = run_noise_sweep(spec)
    result.write(_out_dir(args))
    for b in result.best:
        print(f"snr {b['snr_db']:g} dB: best m1 {b['best_m1']['mean']:.4f}  best m2 {b['best_m2']['mean']:.4f}")
    return 0


def cmd_image(args) -> int:
    from .imaging import GridSpec, backproject, ingest_scan, k_space, normalized_target_strength, separate_scan

    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    scan = ingest_scan(args.scan)
    grid = GridSpec(args.grid_size, args.half_width)
    scans = {"full": scan}
    if args.separate:
        A1, A2 = build_frames(args.method, scan.N, scan.sample_rate, _load_envelopes(args.envelopes))
        cfg = SolverConfig(args.mode, mu=args.mu, max_iters=args.iters, track_objective=False)
        sep = separate_scan(scan, A1, A2, cfg, lambda_fraction=args.lambda_frac)
        scans["short"], scans["long"] = sep.short, sep.long
    for name, s in scans.items():
        img = backproject(s, grid, analytic=not args.no_analytic)
        img.export(out, name)
        write_grid(os.path.join(out, f"{name}_kspace.csv"), k_space(img))
        if np.any(s.data):
            freqs, nts = normalized_target_strength(s, args.nts_mode)
            write_grid(os.path.join(out, f"{name}_nts.csv"), nts)
            write_json(os.path.join(out, f"{name}_nts_axes.json"),
                       {"freqs": freqs.tolist(), "angles": s.angles.tolist(), "mode": args.nts_mode})
    return 0


def cmd_experiment(args) -> int:
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    report = run_canned_experiment(args.name, out=_out_dir(args), **kwargs)
    for k, v in report.metrics.items():
        if isinstance(v, float):
            print(f"{k}: {v:.6g}")
        elif not isinstance(v, list):
            print(f"{k}: {v}")
    print(f"{args.name}: {'PASS' if report.passed else 'FAIL'} ({report.runtime_s:.1f} s)")
    return 0 if report.passed else 1


# parser ---------------------------------------------------------------------------------


def _add_solver_flags(p):
    p.add_argument("--method", choices=("fft", "esp"), default="fft")
    p.add_argument("--mode", choices=("bp", "bpd"), default="bp")
    p.add_argument("--lambda-frac", type=float, default=None,
                   help="common weight as a fraction of lambda_max (default: unit weights)")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--envelopes", default=None, help="JSON file with 'frame1'/'frame2' envelope sets (esp only)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcasep", description="Morphological component separation of transient signals.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic signal or scan with ground truth")
    g.add_argument("kind", choices=("spike-sine", "oscillator", "target", "scan"))
    g.add_argument("--spec", help="SyntheticTargetSpec JSON (target only)")
    g.add_argument("--snr", type=float, default=None, help="add white noise at this SNR (dB)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--angles", type=int, default=None, help="number of aspect angles (scan only)")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("separate", help="separate one signal CSV or a scan directory")
    s.add_argument("input")
    _add_solver_flags(s)
    s.add_argument("--sample-rate", type=float, default=None, help="needed when the CSV has no sidecar JSON")
    s.add_argument("--truth1", help="ground truth for y1, adds y1_error to metrics")
    s.add_argument("--truth2", help="ground truth for y2, adds y2_error to metrics")
    s.add_argument("--interval-metrics", action="store_true", help="report m1/m2 on the default intervals")
    s.add_argument("--seed", type=int, default=None, help="accepted for uniformity; separation is deterministic")
    s.add_argument("--out")
    s.set_defaults(func=cmd_separate)

    w = sub.add_parser("sweep", help="lambda/SNR Monte Carlo from a SweepSpec JSON")
    w.add_argument("spec")
    w.add_argument("--seed", type=int, default=None, help="overrides the seed in the sweep file")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    im = sub.add_parser("image", help="backprojection images, k-space and normalized target strength")
    im.add_argument("scan")
    im.add_argument("--separate", action="store_true", help="also image the separated components")
    _add_solver_flags(im)
    im.add_argument("--grid-size", type=int, default=128)
    im.add_argument("--half-width", type=float, default=0.2)
    im.add_argument("--nts-mode", choices=("global", "per_frequency"), default="global")
    im.add_argument("--no-analytic", action="store_true", help="backproject the raw series")
    im.add_argument("--seed", type=int, default=None, help="accepted for uniformity; imaging is deterministic")
    im.add_argument("--out")
    im.set_defaults(func=cmd_image)

    e = sub.add_parser("experiment", help="run a canned experiment: " + ", ".join(EXPERIMENTS))
    e.add_argument("name", choices=tuple(EXPERIMENTS))
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"mcasep: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(f"mcasep: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
