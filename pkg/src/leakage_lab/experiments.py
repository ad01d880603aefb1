"""End-to-end experiment pipelines producing one row per grid point and strategy."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .attacks import (
    ATTR_STRATEGIES,
    MIA_STRATEGIES,
    CounterexampleConfig,
    MiaGame,
    attr_infer,
    attribute_instances,
    calibrate_threshold,
    counterexample_game,
    mia_outcomes,
    thm2_lb_from_game,
)
from .config import RunConfig, resolved_grid, resolved_trials
from .core import RngStream, estimate_risk_pair, parallel_map, rate_and_stderr
from .datasets import Dataset, WriterDigits, WriterDigitsConfig, load_csv_dataset, make_blobs
from .nn import Mlp, TrainConfig, accuracy, mse_loss, one_hot, train
from .regress import estimate_success_rate, gap_closed_form, make_design, success_bounds

# protocol defaults for the two neural experiments
MIA_TRAIN = {"max_epochs": 150, "early_stop_delta": 1e-3}
ATTR_TRAIN = {"max_epochs": 2500, "early_stop_delta": 1e-4}


@dataclass
class SweepRow:
    experiment: str
    n: int | None
    strategy: str
    success_rate: float
    stderr: float
    lb: float | None = None
    ub: float | None = None
    mi_nats: float | None = None
    gap: float | None = None
    accuracy: float | None = None


CSV_COLUMNS = tuple(f.name for f in fields(SweepRow))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def train_config(cfg: RunConfig, protocol: dict, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        lr=t.lr,
        max_epochs=t.max_epochs if t.max_epochs is not None else protocol["max_epochs"],
        batch_size=t.batch_size,
        early_stop_delta=t.early_stop_delta if t.early_stop_delta is not None else protocol["early_stop_delta"],
        adam_beta1=t.adam_beta1,
        adam_beta2=t.adam_beta2,
        adam_eps=t.adam_eps,
        seed=seed,
    )


def _model_seed(seed: int, n: int, m: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(n, m)).generate_state(1, np.uint64)[0])


def gauss_sweep(cfg: RunConfig) -> list[SweepRow]:
    trials = resolved_trials(cfg)
    rows = []
    for n in resolved_grid(cfg):
        design = make_design(cfg.gauss.d, n, cfg.gauss.sigma2, seed=cfg.seed)
        rate, se = estimate_success_rate(design, trials, cfg.seed, cfg.threads)
        rep = success_bounds(design)
        rows.append(SweepRow("gauss-sweep", n, "bayes", rate, se, rep.lb_thm4, rep.ub_thm5,
                             rep.mi_nats, gap_closed_form(design)))
    return rows


@dataclass
class MiaModelResult:
    outcomes: dict
    lb: float
    gap: float
    accuracy: float


def mia_model(cfg: RunConfig, n: int, m: int, test_pool: Dataset, trials: int) -> MiaModelResult:
    """Train one target on ``n`` fresh blob samples and play every membership game."""
    mc = cfg.mia
    seed = _model_seed(cfg.seed, n, m)
    data = make_blobs(n, mc.dim, mc.separation, seed=seed, stream=0)
    n_calib = max(1, int(round(mc.calibration_fraction * n)))
    if n_calib >= n:
        raise ValueError(f"n={n} is too small to hold out a calibration split")
    members = data.subset(np.arange(n_calib, n))
    calib_in = data.subset(np.arange(n_calib))
    calib_out = make_blobs(n_calib, mc.dim, mc.separation, seed=seed, stream=1)

    dims = [mc.dim, *mc.hidden, 2]
    tcfg = train_config(cfg, MIA_TRAIN, seed)
    model, _ = train(Mlp.init(dims, seed=seed), data.x, data.y, tcfg)
    game = MiaGame(model, members, test_pool, threshold=mc.threshold)
    outcomes = {}
    for k, strategy in enumerate(mc.strategies):
        h = None if strategy == "likelihood" else calibrate_threshold(model, calib_in, calib_out, strategy)
        outcomes[strategy] = mia_outcomes(game, strategy, trials, seed + k, h)
    lb = thm2_lb_from_game(game, test_pool)
    gap = estimate_risk_pair(lambda d: mse_loss(model, d.x, one_hot(d.y, 2)), members, test_pool).gap
    return MiaModelResult(outcomes, lb, gap, accuracy(model, test_pool.x, test_pool.y))


def nn_mia_sweep(cfg: RunConfig) -> list[SweepRow]:
    mc = cfg.mia
    for s in mc.strategies:
        if s not in MIA_STRATEGIES:
            raise ValueError(f"unknown membership strategy {s!r}")
    trials = resolved_trials(cfg)
    test_pool = make_blobs(mc.test_pool, mc.dim, mc.separation, seed=cfg.seed, stream=1)
    rows = []
    for n in resolved_grid(cfg):
        results = parallel_map(lambda m: mia_model(cfg, n, m, test_pool, trials), range(mc.models_per_n), cfg.threads)
        lb = float(np.mean([r.lb for r in results]))
        gap = float(np.mean([r.gap for r in results]))
        acc = float(np.mean([r.accuracy for r in results]))
        for s in mc.strategies:
            rate, se = rate_and_stderr(np.concatenate([r.outcomes[s] for r in results]))
            rows.append(SweepRow("nn-mia", n, s, rate, se, lb=lb, gap=gap, accuracy=acc))
    return rows


def attr_pools(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Training pool and held-out test pool for attribute inference."""
    ac = cfg.attr
    if ac.csv_path:
        data = load_csv_dataset(ac.csv_path, ac.feature_count, ac.label_column, ac.sensitive_column)
        order = RngStream(cfg.seed, 2).generator(0).permutation(len(data))
        n_test = min(ac.test_pool, len(data) // 5)
        return data.subset(order[n_test:]), data.subset(order[:n_test])
    gen = WriterDigits(WriterDigitsConfig(n_writers=ac.n_writers, blend=ac.blend, writer_warp=ac.writer_warp,
                                          sample_noise=ac.sample_noise, seed=ac.generator_seed))
    return gen.sample(ac.pool_size, cfg.seed, stream=0), gen.sample(ac.test_pool, cfg.seed, stream=1)


@dataclass
class AttrModelResult:
    hits: dict
    mia: np.ndarray
    lb: float
    gap: float
    accuracy: float


def attr_model(cfg: RunConfig, pool: Dataset, test: Dataset, n: int, m: int) -> AttrModelResult:
    """Train one model on a random ``n``-subset of ``pool`` and attack its records."""
    ac = cfg.attr
    seed = _model_seed(cfg.seed, n, m)
    rng = RngStream(seed, 0).generator(5)
    data = pool.subset(rng.choice(len(pool), size=n, replace=False))
    dims = [data.x.shape[1], *ac.hidden, data.n_classes]
    model, _ = train(Mlp.init(dims, seed=seed), data.x, data.y, train_config(cfg, ATTR_TRAIN, seed))
    picks = rng.choice(n, size=min(ac.instances_per_model, n), replace=False)
    insts = attribute_instances(data.subset(picks))
    hits = {s: np.array([attr_infer(model, i, s).t == i.t_true for i in insts], dtype=float)
            for s in ac.strategies}
    game = MiaGame(model, data, test)
    mia = mia_outcomes(game, "likelihood", ac.mia_trials, seed) if ac.mia_trials else np.empty(0)
    loss = lambda d: mse_loss(model, d.x, one_hot(d.y, model.n_classes))  # noqa: E731
    return AttrModelResult(hits, mia, thm2_lb_from_game(game, test),
                           estimate_risk_pair(loss, data, test).gap, accuracy(model, test.x, test.y))


def attr_sweep_results(cfg: RunConfig) -> dict[int, list[AttrModelResult]]:
    for s in cfg.attr.strategies:
        if s not in ATTR_STRATEGIES:
            raise ValueError(f"unknown attribute strategy {s!r}")
    pool, test = attr_pools(cfg)
    out = {}
    for n in resolved_grid(cfg):
        if n > len(pool):
            raise ValueError(f"n={n} exceeds the pool size {len(pool)}")
        out[n] = parallel_map(lambda m: attr_model(cfg, pool, test, n, m), range(cfg.attr.models_per_n), cfg.threads)
    return out


def attr_rows(cfg: RunConfig, results: dict[int, list[AttrModelResult]]) -> list[SweepRow]:
    rows = []
    for n, res in results.items():
        lb = float(np.mean([r.lb for r in res]))
        gap = float(np.mean([r.gap for r in res]))
        acc = float(np.mean([r.accuracy for r in res]))
        for s in cfg.attr.strategies:
            rate, se = rate_and_stderr(np.concatenate([r.hits[s] for r in res]))
            rows.append(SweepRow("attr-infer", n, s, rate, se, gap=gap, accuracy=acc))
        if cfg.attr.mia_trials:
            rate, se = rate_and_stderr(np.concatenate([r.mia for r in res]))
            rows.append(SweepRow("attr-infer", n, "mia-likelihood", rate, se, lb=lb, gap=gap, accuracy=acc))
    return rows


def attr_infer_sweep(cfg: RunConfig) -> list[SweepRow]:
    return attr_rows(cfg, attr_sweep_results(cfg))


def counterexample(cfg: RunConfig) -> list[SweepRow]:
    c = cfg.counterexample
    res = counterexample_game(CounterexampleConfig(c.D, c.eps, c.sigma_x), resolved_trials(cfg), cfg.seed)
    se = math.sqrt(res.attack_success * (1 - res.attack_success) / resolved_trials(cfg))
    return [SweepRow("counterexample", None, "zero-loss", res.attack_success, se,
                     gap=res.empirical_gap)]


PIPELINES = {
    "gauss-sweep": gauss_sweep,
    "nn-mia": nn_mia_sweep,
    "attr-infer": attr_infer_sweep,
    "counterexample": counterexample,
}


def run_pipeline(cfg: RunConfig) -> list[SweepRow]:
    return PIPELINES[cfg.experiment](cfg)
