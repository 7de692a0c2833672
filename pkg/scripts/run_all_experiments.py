"""Run every canned experiment and print a one-line verdict for each.

Usage: python3 scripts/run_all_experiments.py [OUT_DIR] [NAME ...]
Each experiment writes into OUT_DIR/<name>/ (default ./results).
"""

import os
import sys

from mcasep.experiments import EXPERIMENTS, run_canned_experiment


def main(argv):
    out = argv[0] if argv else "results"
    names = argv[1:] or list(EXPERIMENTS)
    failed = 0
    for name in names:
        report = run_canned_experiment(name, out=os.path.join(out, name))
        failed += not report.passed
        print(f"{name:18s} {'PASS' if report.passed else 'FAIL'}  {report.runtime_s:7.1f} s", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
