"""Numerical and probabilistic primitives shared by the rest of the package.

Everything here is unit-free except the information quantities, which are
always in nats.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi ~ 0.618

GOLDEN_TOL = 1e-9
GOLDEN_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class MultivariateGaussian:
    """A Gaussian N(mean, covariance) with its Cholesky factor cached.

    Construction fails with ``np.linalg.LinAlgError`` if the covariance is
    not symmetric or not positive definite.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {d}")
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise np.linalg.LinAlgError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("covariance is not positive definite") from exc
        diag = np.diag(chol)
        if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
            raise np.linalg.LinAlgError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "logdet", float(2.0 * np.sum(np.log(diag))))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def mvn_logpdf(dist: MultivariateGaussian, point) -> float:
    """Log-density of ``dist`` at ``point`` in nats.

    ``point`` may also be a ``(m, d)`` array, in which case an array of ``m``
    log-densities is returned.
    """
    point = np.asarray(point, dtype=float)
    if point.shape[-1:] != (dist.dim,) or point.ndim > 2:
        raise ValueError(f"point of shape {point.shape} does not match dimension {dist.dim}")
    diff = (point - dist.mean).T
    z = linalg.solve_triangular(dist.chol, diff, lower=True, check_finite=False)
    quad = np.sum(z * z, axis=0)
    out = -0.5 * (dist.dim * LOG_2PI + dist.logdet + quad)
    return float(out) if point.ndim == 1 else out


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible random stream.

    Streams are derived with ``numpy.random.SeedSequence`` spawn keys, so the
    draws of stream ``i`` do not depend on which other streams were used or
    in what order.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *subkeys: int) -> np.random.Generator:
        """A fresh generator; ``subkeys`` select independent sub-streams."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *subkeys))
        return np.random.Generator(np.random.PCG64(ss))


def golden_section(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = GOLDEN_TOL,
    mode: str = "min",
    max_iter: int = GOLDEN_MAX_ITER,
) -> tuple[float, float]:
    """Golden-section search for the extremum of a unimodal ``f`` on [lo, hi].

    Returns ``(x_star, f(x_star))`` where ``x_star`` is the midpoint of the
    final bracket, whose width is at most ``2 * tol``.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    sign = 1.0 if mode == "min" else -1.0

    def g(x):
        v = f(x)
        if math.isnan(v):
            raise ValueError(f"objective returned NaN at x={x!r}")
        return sign * v

    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    it = 0
    while b - a > 2 * tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
        it += 1
    x = 0.5 * (a + b)
    return x, sign * g(x)


def binary_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q) in nats."""
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"probabilities must lie in [0, 1], got p={p}, q={q}")

    def term(a, b):
        if a == 0.0:
            return 0.0
        if b == 0.0:
            return math.inf
        return a * math.log(a / b)

    return term(p, q) + term(1.0 - p, 1.0 - q)


@dataclass(frozen=True)
class RiskPair:
    empirical: float
    expected: float
    gap: float
    n_train: int
    n_eval: int


def estimate_risk_pair(evaluator: Callable[[Sequence], np.ndarray], train, eval) -> RiskPair:
    """Empirical risk on ``train``, held-out risk on ``eval`` and their gap.

    ``evaluator`` maps a sample set to the per-sample losses; the held-out
    mean stands in for the expected risk.
    """
    if len(train) == 0 or len(eval) == 0:
        raise ValueError("both sample sets must be non-empty")
    train_loss = np.asarray(evaluator(train), dtype=float)
    eval_loss = np.asarray(evaluator(eval), dtype=float)
    if np.isnan(train_loss).any() or np.isnan(eval_loss).any():
        raise ValueError("evaluator produced NaN losses")
    emp = float(np.mean(train_loss))
    exp = float(np.mean(eval_loss))
    return RiskPair(emp, exp, exp - emp, len(train), len(eval))


def rate_and_stderr(successes) -> tuple[float, float]:
    """Mean of 0/1 indicators with its binomial standard error."""
    successes = np.asarray(successes, dtype=float)
    if successes.size == 0:
        raise ValueError("no trials")
    rate = float(successes.mean())
    return rate, math.sqrt(rate * (1.0 - rate) / successes.size)


def parallel_map(fn: Callable, items: Iterable, threads: int = 1) -> list:
    """Order-preserving map; ``threads=0`` uses every core."""
    items = list(items)
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
