"""Writer inference on the synthetic 44-writer digit trajectories."""

from _common import parse_args, run_and_report

from leakage_lab.config import RunConfig

if __name__ == "__main__":
    a = parse_args(__doc__, "results/attr_infer.csv")
    run_and_report(RunConfig("attr-infer", seed=a.seed, trials=a.trials, threads=a.threads, output_path=a.out))
