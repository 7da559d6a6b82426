"""Run the S1/S2/S3 desk-scale suite and write the consolidated report.

Usage: python3 benchmarks/run_suite.py [--out bench_out] [--n-tx 10000] [--seeds 1 2 3]
Equivalent to ``anfbsim suite``; exit status 0 when every threshold passes.
"""
import sys

from anfbsim.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--out" not in argv:
        argv += ["--out", "bench_out"]
    sys.exit(main(["suite", *argv]))
