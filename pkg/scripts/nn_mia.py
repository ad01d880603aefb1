"""Black-box membership attacks on small networks trained on two-class blobs."""

from _common import parse_args, run_and_report

from leakage_lab.config import RunConfig

if __name__ == "__main__":
    a = parse_args(__doc__, "results/nn_mia.csv")
    run_and_report(RunConfig("nn-mia", seed=a.seed, trials=a.trials, threads=a.threads, output_path=a.out))
