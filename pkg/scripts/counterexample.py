"""A memorizing predictor: perfect membership detection at any generalization gap D."""

from _common import parse_args, run_and_report

from leakage_lab.config import CounterexampleSection, RunConfig

if __name__ == "__main__":
    a = parse_args(__doc__, "results/counterexample.csv")
    for d in (0.5, 0.1, 0.01):
        out = a.out.replace(".csv", f"_D{d}.csv")
        cfg = RunConfig("counterexample", seed=a.seed, trials=a.trials, output_path=out,
                        counterexample=CounterexampleSection(D=d, eps=min(0.1, d / 2)))
        run_and_report(cfg)
