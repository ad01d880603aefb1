"""Gaussian linear-regression laboratory with an exact Bayesian attacker.

Responses are ``y_i = beta @ x_i + W_i`` with ``W_i ~ N(0, sigma2)`` and the
features ``x`` held fixed.  Least squares gives ``theta ~ N(beta, sigma2 xbar^-1)``
for an outsider, while conditioning on one training response ``s = y_j``
gives the narrower Gaussian returned by :func:`posterior_qj`.  Comparing the
two densities at the released ``theta`` is the optimal membership test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .bounds import BoundReport, optimize_r_max, tail_bound_raw, thm5_success_upper_bound
from .core import (
    MultivariateGaussian,
    RngStream,
    estimate_risk_pair,
    mvn_logpdf,
    parallel_map,
    rate_and_stderr,
)

DEFAULT_D = 20
DEFAULT_N_GRID = (50, 100, 200, 500, 1000, 2000, 5000, 10_000)
DEFAULT_TRIALS = 10_000


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    """Fixed ``d x n`` feature matrix, true coefficients and noise variance."""

    x: np.ndarray
    beta: np.ndarray
    sigma2: float
    xbar: np.ndarray = field(init=False, repr=False)
    xbar_inv: np.ndarray = field(init=False, repr=False)
    leverage: np.ndarray = field(init=False, repr=False)
    _cho: tuple = field(init=False, repr=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        d, n = x.shape
        if beta.shape != (d,):
            raise ValueError(f"beta has shape {beta.shape}, expected ({d},)")
        if n <= d:
            raise ValueError(f"need n > d for a non-degenerate design, got d={d}, n={n}")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        xbar = x @ x.T
        try:
            cho = linalg.cho_factor(xbar, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("x x^T is singular") from exc
        xbar_inv = linalg.cho_solve(cho, np.eye(d))
        xbar_inv = 0.5 * (xbar_inv + xbar_inv.T)
        lev = np.einsum("in,ij,jn->n", x, xbar_inv, x)
        if np.any(lev >= 1.0):
            raise ValueError("some x_j^T xbar^-1 x_j >= 1; posterior Q_j is degenerate")
        for name, val in (("x", x), ("beta", beta), ("xbar", xbar), ("xbar_inv", xbar_inv),
                          ("leverage", lev), ("_cho", cho)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def mean_response(self) -> np.ndarray:
        return self.beta @ self.x


def default_beta(d: int) -> np.ndarray:
    return np.ones(d) / math.sqrt(d)


def make_design(d: int, n: int, sigma2: float = 1.0, seed: int = 0, beta=None) -> RegressionDesign:
    """Design with i.i.d. standard-normal features drawn once from ``seed``.

    The feature stream is keyed by ``n`` so every grid point of a sweep gets
    its own fixed matrix.
    """
    rng = RngStream(seed, n).generator(0)
    x = rng.standard_normal((d, n))
    return RegressionDesign(x, default_beta(d) if beta is None else beta, sigma2)


def ols_fit(design: RegressionDesign, y) -> np.ndarray:
    """Least-squares coefficients; ``y`` may be ``(n,)`` or a batch ``(m, n)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != design.n:
        raise ValueError(f"y has length {y.shape[-1]}, expected {design.n}")
    rhs = design.x @ y.T
    return linalg.cho_solve(design._cho, rhs).T


def posterior_q(design: RegressionDesign) -> MultivariateGaussian:
    """Distribution of the fitted coefficients when the query is not a member."""
    return MultivariateGaussian(design.beta, design.sigma2 * design.xbar_inv)


def posterior_qj(design: RegressionDesign, j: int, s: float) -> MultivariateGaussian:
    """Distribution of the fitted coefficients given that ``y_j == s``."""
    if not 0 <= j < design.n:
        raise IndexError(f"j={j} out of range for n={design.n}")
    xj = design.x[:, j]
    if design.leverage[j] >= 1.0:
        raise np.linalg.LinAlgError("Q_j covariance is not positive definite")
    u = design.xbar_inv @ xj
    mean = design.beta + u * (s - xj @ design.beta)
    cov = design.sigma2 * (design.xbar_inv - np.outer(u, u))
    return MultivariateGaussian(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class TrialRecord:
    t: int
    j: int
    s: float
    theta: np.ndarray
    decision: int
    loss_r: float

    @property
    def success(self) -> bool:
        return self.decision == self.t


def _draw(design: RegressionDesign, rng: np.random.Generator):
    t = int(rng.integers(2))
    j = int(rng.integers(design.n))
    noise = rng.normal(0.0, math.sqrt(design.sigma2), size=design.n)
    y = design.mean_response + noise
    if t:
        s = float(y[j])
    else:
        s = float(design.mean_response[j] + rng.normal(0.0, math.sqrt(design.sigma2)))
    theta = ols_fit(design, y)
    return t, j, s, theta


def bayes_decision(design: RegressionDesign, j: int, s: float, theta) -> int:
    """1 iff log Q_j(theta | s) > log Q(theta); exact ties (and sigma2 == 0) give 0."""
    if design.sigma2 == 0.0:
        return 0
    member = mvn_logpdf(posterior_qj(design, j, s), theta)
    outsider = mvn_logpdf(posterior_q(design), theta)
    return int(member > outsider)


def run_trial(design: RegressionDesign, rng: RngStream | np.random.Generator) -> TrialRecord:
    """One round of the membership game against the exact Bayesian attacker."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    t, j, s, theta = _draw(design, gen)
    decision = bayes_decision(design, j, s, theta)
    loss_r = float(design.x[:, j] @ theta - s)
    return TrialRecord(t, j, s, theta, decision, loss_r)


def estimate_success_rate(
    design: RegressionDesign, trials: int, seed: int, threads: int = 1
) -> tuple[float, float]:
    """Monte-Carlo success rate of the Bayesian attacker and its standard error.

    Trial ``i`` uses ``RngStream(seed, i)``, so the result does not depend on
    execution order or thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    wins = parallel_map(
        lambda i: run_trial(design, RngStream(seed, i)).success, range(trials), threads
    )
    return rate_and_stderr(wins)


def sample_residuals(design: RegressionDesign, trials: int, seed: int):
    """Draw ``(t, R)`` pairs from the game without running the attacker."""
    ts = np.empty(trials, dtype=int)
    rs = np.empty(trials)
    for i in range(trials):
        t, j, s, theta = _draw(design, RngStream(seed, i).generator())
        ts[i] = t
        rs[i] = design.x[:, j] @ theta - s
    return ts, rs


def gap_closed_form(design: RegressionDesign) -> float:
    return 2.0 * design.d * design.sigma2 / design.n


def empirical_gap(design: RegressionDesign, n_sets: int, seed: int) -> tuple[float, float]:
    """Mean and standard error of the generalization gap over resampled training sets.

    Each training set is scored on a fresh copy of the responses at the same
    features, which is the held-out risk for a fixed design.
    """
    sd = math.sqrt(design.sigma2)
    gaps = np.empty(n_sets)
    for k in range(n_sets):
        rng = RngStream(seed, k).generator()
        y = design.mean_response + rng.normal(0.0, sd, size=design.n)
        y_fresh = design.mean_response + rng.normal(0.0, sd, size=design.n)
        fitted = ols_fit(design, y) @ design.x
        pair = estimate_risk_pair(lambda ys: (fitted - ys) ** 2, y, y_fresh)
        gaps[k] = pair.gap
    return float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(n_sets))


def residual_variances(design: RegressionDesign) -> tuple[float, float]:
    """Var[R | T=0] and Var[R | T=1] for the residual R = x_J^T theta - S."""
    ratio = design.d / design.n
    return design.sigma2 * (1.0 + ratio), design.sigma2 * (1.0 - ratio)


def mi_conditional(design: RegressionDesign, p_t1: float) -> float:
    """I(S_J; theta | T) in nats, from the log-determinants of Q and each Q_j."""
    if not 0.0 <= p_t1 <= 1.0:
        raise ValueError("p_t1 must be a probability")
    if p_t1 == 0.0:
        return 0.0
    logdet_q = posterior_q(design).logdet
    # s only shifts the mean of Q_j, so any value gives the right determinant
    total = sum(logdet_q - posterior_qj(design, j, 0.0).logdet for j in range(design.n))
    return p_t1 * total / (2.0 * design.n)


def success_bounds(design: RegressionDesign, p_m: float = 0.5) -> BoundReport:
    """Gap-based lower bound and information-based upper bound on the attacker."""
    if p_m != 0.5:
        raise ValueError("the regression lab uses a uniform membership prior")
    gap = gap_closed_form(design)
    r_star, lb = optimize_r_max("thm4", p_m, gap, design.sigma2)
    raw = tail_bound_raw("thm4", p_m, gap, r_star, design.sigma2)
    mi = mi_conditional(design, 0.5)
    ub = thm5_success_upper_bound(mi, 0.5)
    return BoundReport(
        lb_thm4=lb,
        ub_thm5=ub,
        r_max_star=r_star,
        mi_nats=mi,
        provenance={"gap": "closed-form", "mi": "closed-form", "sigma2_proxy": "sigma2"},
        clamp_binds=raw < p_m,
    )
