"""Membership and attribute inference games against trained classifiers.

Black-box membership scores (likelihood, loss, modified entropy) are
thresholded inside a two-hypothesis game; attribute inference enumerates
every candidate value of the sensitive attribute and keeps the one a
strategy likes best.  The counterexample game shows a model whose
generalization gap can be made arbitrarily small while membership stays
perfectly detectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .bounds import BoundInputs, thm2_lower_bound
from .core import RngStream, estimate_risk_pair, parallel_map, rate_and_stderr
from .datasets import Dataset, append_one_hot
from .nn import (
    LOG_FLOOR,
    Mlp,
    TrainConfig,
    accuracy,
    forward,
    grad_sqnorm_per_sample,
    mse_loss,
    one_hot,
    train,
)

MSE_LOSS_MAX = 2.0
MIA_STRATEGIES = ("likelihood", "loss", "mentr")
ATTR_STRATEGIES = ("likelihood", "accuracy", "loss", "gradient")
# likelihood: high score means member; loss and mentr: low score means member
_MEMBER_IF_ABOVE = {"likelihood": True, "loss": False, "mentr": False}


def likelihood_score(model: Mlp, x) -> np.ndarray | float:
    """Largest soft probability."""
    p = forward(model, x)
    out = p.max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def loss_score(model: Mlp, x, y) -> np.ndarray | float:
    return mse_loss(model, x, one_hot(y, model.n_classes))


def mentr_score(model: Mlp, x, y) -> np.ndarray | float:
    """Modified prediction entropy; zero for a confident correct prediction."""
    p = np.atleast_2d(forward(model, x))
    y = np.atleast_1d(np.asarray(y, dtype=int))
    rows = np.arange(p.shape[0])
    p_true = p[rows, y]
    own = -(1.0 - p_true) * np.log(np.maximum(p_true, LOG_FLOOR))
    rest = -p * np.log(np.maximum(1.0 - p, LOG_FLOOR))
    rest[rows, y] = 0.0
    out = own + rest.sum(axis=1)
    return float(out[0]) if np.ndim(x) == 1 else out


def membership_scores(model: Mlp, data: Dataset, strategy: str) -> np.ndarray:
    if strategy == "likelihood":
        return np.atleast_1d(likelihood_score(model, data.x))
    if strategy == "loss":
        return np.atleast_1d(loss_score(model, data.x, data.y))
    if strategy == "mentr":
        return np.atleast_1d(mentr_score(model, data.x, data.y))
    raise ValueError(f"unknown membership strategy {strategy!r}")


def predict_member(scores, threshold: float, strategy: str) -> np.ndarray:
    scores = np.asarray(scores)
    return scores > threshold if _MEMBER_IF_ABOVE[strategy] else scores < threshold


@dataclass(eq=False)
class MiaGame:
    """A trained target and the pools the challenger draws queries from."""

    target: Mlp
    train_pool: Dataset
    test_pool: Dataset
    prior_t1: float = 0.5
    threshold: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.prior_t1 < 1.0:
            raise ValueError("prior_t1 must lie in (0, 1)")
        if len(self.train_pool) == 0 or len(self.test_pool) == 0:
            raise ValueError("both pools must be non-empty")
        members = {row.tobytes() for row in self.train_pool.x}
        if any(row.tobytes() in members for row in self.test_pool.x):
            raise ValueError("train and test pools overlap")


def calibrate_threshold(model: Mlp, calib_members: Dataset, calib_outsiders: Dataset, strategy: str) -> float:
    """Median score over a pooled calibration split."""
    pooled = np.concatenate(
        [membership_scores(model, calib_members, strategy), membership_scores(model, calib_outsiders, strategy)]
    )
    return float(np.median(pooled))


def mia_outcomes(game: MiaGame, strategy: str, trials: int, seed: int, threshold: float | None = None) -> np.ndarray:
    """0/1 success indicator for every trial of the membership game."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    h = game.threshold if threshold is None else threshold
    member_scores = membership_scores(game.target, game.train_pool, strategy)
    outsider_scores = membership_scores(game.target, game.test_pool, strategy)
    rng = RngStream(seed, 0).generator(3)
    t = rng.random(trials) < game.prior_t1
    idx_in = rng.integers(len(game.train_pool), size=trials)
    idx_out = rng.integers(len(game.test_pool), size=trials)
    scores = np.where(t, member_scores[idx_in], outsider_scores[idx_out])
    guess = predict_member(scores, h, strategy)
    return (guess == t).astype(float)


def run_mia(game: MiaGame, strategy: str, trials: int, seed: int, threshold: float | None = None):
    """Success rate and standard error of a thresholded membership attack."""
    return rate_and_stderr(mia_outcomes(game, strategy, trials, seed, threshold))


def thm2_lb_from_game(game: MiaGame, eval_set: Dataset) -> float:
    """Bounded-loss lower bound from the measured MSE generalization gap."""
    pair = estimate_risk_pair(
        lambda d: mse_loss(game.target, d.x, one_hot(d.y, game.target.n_classes)),
        game.train_pool,
        eval_set,
    )
    p_m = max(game.prior_t1, 1.0 - game.prior_t1)
    return thm2_lower_bound(BoundInputs(p_m=p_m, gap_abs=abs(pair.gap), loss_max=MSE_LOSS_MAX))


@dataclass(frozen=True)
class AttributeInstance:
    v: np.ndarray
    t_true: int
    y: int
    candidate_count: int

    def __post_init__(self):
        if not 0 <= self.t_true < self.candidate_count:
            raise ValueError("t_true must index one of the candidates")


class AttrGuess(NamedTuple):
    t: int
    fallback: bool = False


def _candidate_inputs(inst: AttributeInstance) -> np.ndarray:
    k = inst.candidate_count
    return append_one_hot(np.repeat(np.atleast_2d(inst.v), k, axis=0), np.arange(k), k)


def attr_infer(model: Mlp, inst: AttributeInstance, strategy: str) -> AttrGuess:
    """Guess the sensitive attribute of one record by trying every candidate.

    Ties go to the lowest candidate index.  The accuracy strategy falls back
    to the likelihood ranking when no candidate yields the right label, and
    says so in ``AttrGuess.fallback``.
    """
    if model.layer_dims[0] != np.size(inst.v) + inst.candidate_count:
        raise ValueError("model input width must equal len(v) + candidate_count")
    xs = _candidate_inputs(inst)
    if strategy == "likelihood":
        return AttrGuess(int(np.argmax(forward(model, xs).max(axis=1))))
    if strategy == "accuracy":
        p = forward(model, xs)
        conf = p.max(axis=1)
        right = np.argmax(p, axis=1) == inst.y
        if not right.any():
            return AttrGuess(int(np.argmax(conf)), fallback=True)
        return AttrGuess(int(np.argmax(np.where(right, conf, -np.inf))))
    ys = one_hot(np.full(len(xs), inst.y), model.n_classes)
    if strategy == "loss":
        return AttrGuess(int(np.argmin(mse_loss(model, xs, ys))))
    if strategy == "gradient":
        return AttrGuess(int(np.argmin(grad_sqnorm_per_sample(model, xs, ys))))
    raise ValueError(f"unknown attribute strategy {strategy!r}")


def attribute_instances(data: Dataset) -> list[AttributeInstance]:
    if data.sensitive is None:
        raise ValueError("dataset has no sensitive attribute")
    v = data.v
    return [
        AttributeInstance(v[i], int(data.sensitive[i]), int(data.y[i]), data.n_sensitive)
        for i in range(len(data))
    ]


@dataclass
class SweepPoint:
    """Aggregated result for one grid point and one strategy."""

    n: int
    strategy: str
    success_rate: float
    stderr: float
    lb: float | None = None
    gap: float | None = None
    accuracy: float | None = None


def run_attr_sweep(
    pool: Dataset,
    n_grid: Sequence[int],
    models_per_n: int,
    instances_per_model: int,
    strategies: Sequence[str],
    seed: int,
    layer_dims: Sequence[int],
    train_cfg: TrainConfig,
    threads: int = 1,
) -> list[SweepPoint]:
    """Train fresh models on random subsets of ``pool`` and attack their training records."""
    for s in strategies:
        if s not in ATTR_STRATEGIES:
            raise ValueError(f"unknown attribute strategy {s!r}")
    rows = []
    for n in n_grid:
        if n > len(pool):
            raise ValueError(f"n={n} exceeds the pool size {len(pool)}")

        def one_model(m, n=n):
            rng = RngStream(seed, n).generator(m)
            idx = rng.choice(len(pool), size=n, replace=False)
            data = pool.subset(idx)
            cfg = TrainConfig(**{**train_cfg.__dict__, "seed": seed * 1_000_003 + n * 1009 + m})
            model, _ = train(Mlp.init(layer_dims, seed=cfg.seed), data.x, data.y, cfg)
            picks = rng.choice(n, size=min(instances_per_model, n), replace=False)
            insts = attribute_instances(data.subset(picks))
            return {s: [attr_infer(model, inst, s).t == inst.t_true for inst in insts] for s in strategies}

        results = parallel_map(lambda m: one_model(m), range(models_per_n), threads)
        for s in strategies:
            hits = np.concatenate([r[s] for r in results])
            rate, se = rate_and_stderr(hits)
            rows.append(SweepPoint(n, s, rate, se))
    return rows


@dataclass(frozen=True)
class CounterexampleConfig:
    D: float
    eps: float
    sigma_x: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eps < self.D:
            raise ValueError("need 0 < eps < D")
        if self.sigma_x <= 0:
            raise ValueError("sigma_x must be positive")


class CounterexampleResult(NamedTuple):
    attack_success: float
    empirical_gap: float
    gap_stderr: float


def counterexample_losses(cfg: CounterexampleConfig, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Absolute-error losses of the memorizing predictor for membership flags ``t``.

    Members are answered with their own label; everything else gets
    ``x + D + U'`` while the label is ``x + U``.
    """
    t = np.asarray(t, dtype=bool)
    m = t.size
    half = cfg.eps / 2.0
    x = rng.normal(0.0, cfg.sigma_x, size=m)
    y = x + rng.uniform(-half, half, size=m)
    guess = x + cfg.D + rng.uniform(-half, half, size=m)
    return np.where(t, 0.0, np.abs(y - guess))


def counterexample_game(cfg: CounterexampleConfig, trials: int, seed: int) -> CounterexampleResult:
    """Attack success of the rule ``member iff loss == 0`` and the measured gap."""
    rng = RngStream(seed, 0).generator(4)
    t = rng.random(trials) < 0.5
    losses = counterexample_losses(cfg, t, rng)
    guess = losses == 0.0
    success = float(np.mean(guess == t))
    outsiders = losses[~t]
    pair = estimate_risk_pair(lambda r: r, losses[t], outsiders)
    se = float(outsiders.std(ddof=1) / math.sqrt(outsiders.size)) if outsiders.size > 1 else math.nan
    return CounterexampleResult(success, pair.gap, se)
