"""Bayesian membership attack on Gaussian least squares, with both bounds, across n."""

from _common import parse_args, run_and_report

from leakage_lab.config import RunConfig

if __name__ == "__main__":
    a = parse_args(__doc__, "results/gauss_sweep.csv")
    run_and_report(RunConfig("gauss-sweep", seed=a.seed, trials=a.trials, threads=a.threads, output_path=a.out))
