"""Command-line entry point: ``leakage-lab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import subprocess
import sys
from pathlib import Path

from . import __version__
from .bounds import (
    BoundInputs,
    BoundReport,
    optimize_r_max,
    thm2_lower_bound,
    thm3_lower_bound,
    thm4_lower_bound,
    thm5_success_upper_bound,
)
from .config import (
    EXPERIMENTS,
    SECTIONS,
    SEED_ENV,
    ConfigError,
    RunConfig,
    load_config,
    parse_config,
    serialize_config,
)
from .experiments import rows_to_csv, run_pipeline


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def manifest_path(csv_path) -> Path:
    return Path(str(csv_path) + ".manifest")


def write_outputs(cfg: RunConfig, rows) -> Path:
    out = Path(cfg.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rows_to_csv(rows), encoding="utf-8", newline="")
    header = {"leakage_lab_version": __version__, "git_describe": git_describe()}
    manifest_path(out).write_text(serialize_config(cfg, extra=header), encoding="utf-8")
    return out


def _config_defaults_help() -> str:
    lines = ["config keys and defaults (top level, then [section]):"]
    probe = RunConfig("gauss-sweep")
    for f in dataclasses.fields(probe):
        if f.name not in SECTIONS:
            lines.append(f"  {f.name} = {getattr(probe, f.name)!r}")
    for name in SECTIONS:
        lines.append(f"  [{name}]")
        section = getattr(probe, name)
        for f in dataclasses.fields(section):
            lines.append(f"    {f.name} = {getattr(section, f.name)!r}")
    lines.append("unset trials/n_grid and train.max_epochs/early_stop_delta take per-experiment defaults.")
    lines.append(f"seed falls back to ${SEED_ENV}, then 0.")
    return "\n".join(lines)


def _add_run_flags(p: argparse.ArgumentParser, need_config: bool) -> None:
    p.add_argument("--config", required=need_config, help="key = value config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--trials", type=int, help="overrides the config trial count")
    p.add_argument("--out", help="CSV output path (manifest goes to <out>.manifest)")
    p.add_argument("--threads", type=int, help="worker threads; 0 uses every core")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakage-lab",
        description="Membership and attribute inference experiments with success-rate bounds.",
        epilog=_config_defaults_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run the experiment named in the config"), need_config=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} pipeline"), need_config=False)

    b = sub.add_parser("bounds", help="evaluate the success-rate bounds for given inputs")
    b.add_argument("--p-m", type=float, default=0.5, help="largest membership prior (default 0.5)")
    b.add_argument("--gap", type=float, help="absolute generalization gap")
    b.add_argument("--loss-max", type=float, help="loss bound for the bounded-loss lower bound")
    b.add_argument("--sigma2", type=float, help="variance proxy for the tail-family lower bounds")
    b.add_argument("--r-max", type=float, help="truncation level; optimized when omitted")
    b.add_argument("--mi", type=float, help="mutual information in nats for the upper bound")
    return parser


def _resolve_config(args) -> RunConfig:
    overrides = {"seed": args.seed, "trials": args.trials, "output_path": args.out, "threads": args.threads}
    if args.config:
        cfg = load_config(args.config, overrides)
        if args.command != "run" and cfg.experiment != args.command:
            raise ConfigError(f"config names experiment {cfg.experiment!r}, not {args.command!r}")
        return cfg
    return parse_config("", "<flags>", {**overrides, "experiment": args.command})


def bounds_report(args) -> BoundReport:
    rep = BoundReport()
    if args.gap is not None:
        if args.loss_max is not None:
            rep.lb_thm2 = thm2_lower_bound(BoundInputs(args.p_m, args.gap, loss_max=args.loss_max))
            rep.provenance["lb_thm2"] = "gap, loss_max"
        if args.sigma2 is not None:
            for fam in ("thm3", "thm4"):
                if args.r_max is None:
                    r_star, lb = optimize_r_max(fam, args.p_m, args.gap, args.sigma2)
                    rep.r_max_star = r_star
                else:
                    fn = thm3_lower_bound if fam == "thm3" else thm4_lower_bound
                    lb = fn(BoundInputs(args.p_m, args.gap, sigma2_proxy=args.sigma2, r_max=args.r_max))
                setattr(rep, f"lb_{fam}", lb)
                rep.provenance[f"lb_{fam}"] = "gap, sigma2" + (", r_max" if args.r_max is not None else ", optimized r_max")
    if args.mi is not None:
        rep.mi_nats = args.mi
        rep.ub_thm5 = thm5_success_upper_bound(args.mi, args.p_m)
        rep.provenance["ub_thm5"] = "mi"
    return rep


def _print_report(rep: BoundReport) -> None:
    for f in dataclasses.fields(rep):
        val = getattr(rep, f.name)
        if f.name == "provenance" or val is None:
            continue
        print(f"{f.name} = {val:.9g}" if isinstance(val, float) else f"{f.name} = {val}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            if args.gap is None and args.mi is None:
                raise ValueError("give --gap (with --loss-max and/or --sigma2) or --mi")
            _print_report(bounds_report(args))
            return 0
        cfg = _resolve_config(args)
        out = write_outputs(cfg, run_pipeline(cfg))
        print(f"wrote {out} and {manifest_path(out)}")
        return 0
    except ConfigError as exc:
        print(f"leakage-lab: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"leakage-lab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
