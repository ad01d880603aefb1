"""Closed-form bounds on attacker success and exact finite-case oracles.

Lower bounds turn a generalization gap into a guaranteed membership-attack
success probability; the upper bound turns a mutual-information budget into
a cap on any attacker's success.  ``bayes_success_finite`` and
``tv_tradeoff_finite`` evaluate the optimal attacker exactly on small
discrete problems so the general statements can be checked by enumeration.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import binary_kl, golden_section

LOG2 = math.log(2.0)
MAX_STRATEGIES = 20_000


class BoundClampWarning(UserWarning):
    """An input or output was clamped to keep a bound well defined."""


@dataclass(frozen=True)
class BoundInputs:
    """Inputs shared by the gap-based lower bounds.

    Only the fields needed by a given bound have to be set.
    """

    p_m: float
    gap_abs: float
    loss_max: float | None = None
    sigma2_proxy: float | None = None
    r_max: float | None = None

    def __post_init__(self):
        if not 0.0 < self.p_m <= 1.0:
            raise ValueError(f"p_m must lie in (0, 1], got {self.p_m}")
        if self.gap_abs < 0:
            raise ValueError("gap_abs must be nonnegative")


def thm2_lower_bound(inp: BoundInputs) -> float:
    """Success lower bound for a loss bounded by ``loss_max``."""
    if inp.loss_max is None or inp.loss_max <= 0:
        raise ValueError("loss_max must be positive")
    gap = inp.gap_abs
    if gap > 2 * inp.loss_max:
        warnings.warn(
            f"gap {gap} exceeds 2*loss_max; clamped", BoundClampWarning, stacklevel=2
        )
        gap = 2 * inp.loss_max
    return max(inp.p_m, inp.p_m * (gap / (2 * inp.loss_max) - 1.0) + 1.0)


def r0_subgaussian(sigma2: float) -> float:
    return math.sqrt(2.0 * sigma2 * LOG2)


def r0_tail(sigma2: float) -> float:
    return 2.0 * sigma2 * LOG2


def c_subgaussian(r_max: float, sigma2: float) -> float:
    return math.exp(-(r_max**2) / (2.0 * sigma2)) * (1.0 + sigma2 / r_max**2)


def c_tail(r_max: float, sigma2: float) -> float:
    return math.exp(-r_max / (2.0 * sigma2)) * (1.0 + 2.0 * sigma2 / r_max)


_FAMILIES = {
    "thm3": (r0_subgaussian, c_subgaussian),
    "thm4": (r0_tail, c_tail),
}


def tail_bound_raw(family: str, p_m: float, gap: float, r_max: float, sigma2: float) -> float:
    """The tail-family bound expression before the max with ``p_m`` and clamping."""
    _, c_fn = _FAMILIES[family]
    c = c_fn(r_max, sigma2)
    return p_m * (gap / (2.0 * r_max) - c / (1.0 - p_m) - 1.0) + 1.0


def _check_tail_inputs(family: str, inp: BoundInputs) -> None:
    if inp.sigma2_proxy is None or inp.sigma2_proxy <= 0:
        raise ValueError("sigma2_proxy must be positive")
    if inp.p_m >= 1.0:
        raise ValueError("p_m == 1 leaves nothing to bound")
    r0 = _FAMILIES[family][0](inp.sigma2_proxy)
    if inp.r_max is None or inp.r_max < r0:
        raise ValueError(f"r_max must be at least r0={r0:.6g} for {family}")


def _tail_lower_bound(family: str, inp: BoundInputs) -> float:
    _check_tail_inputs(family, inp)
    val = tail_bound_raw(family, inp.p_m, inp.gap_abs, inp.r_max, inp.sigma2_proxy)
    return min(1.0, max(inp.p_m, val))


def thm3_lower_bound(inp: BoundInputs) -> float:
    """Lower bound when the loss is sub-Gaussian with variance proxy ``sigma2_proxy``."""
    return _tail_lower_bound("thm3", inp)


def thm4_lower_bound(inp: BoundInputs) -> float:
    """Lower bound when the loss has an exponential tail with proxy ``sigma2_proxy``."""
    return _tail_lower_bound("thm4", inp)


def optimize_r_max(
    family: str, p_m: float, gap_abs: float, sigma2_proxy: float, tol: float = 1e-9
) -> tuple[float, float]:
    """Pick the truncation level that maximizes a tail-family lower bound.

    The unclamped expression is maximized by golden-section search over
    ``[r0, 1e6 * r0]``; the returned bound is clamped into ``[p_m, 1]``.
    """
    if family not in _FAMILIES:
        raise ValueError(f"unknown bound family {family!r}")
    if sigma2_proxy <= 0:
        raise ValueError("sigma2_proxy must be positive")
    if not 0.0 < p_m < 1.0:
        raise ValueError("p_m must lie in (0, 1)")
    r0 = _FAMILIES[family][0](sigma2_proxy)
    r_star, val = golden_section(
        lambda r: tail_bound_raw(family, p_m, gap_abs, r, sigma2_proxy),
        r0,
        r0 * 1e6,
        tol=tol,
        mode="max",
    )
    return r_star, min(1.0, max(p_m, val))


def thm5_success_upper_bound(mi_nats: float, max_prior: float, tol: float = 1e-12) -> float:
    """Largest success probability compatible with ``mi_nats`` of information.

    Solves ``binary_kl(p, max_prior) = mi_nats`` for ``p`` on the
    informative branch ``[max_prior, 1]`` by golden-section minimization of
    the squared mismatch.
    """
    if mi_nats < 0:
        raise ValueError("mutual information must be nonnegative")
    if not 0.0 < max_prior < 1.0:
        raise ValueError("max_prior must lie in (0, 1)")
    if mi_nats == 0.0:
        return max_prior
    if binary_kl(1.0, max_prior) <= mi_nats:
        return 1.0
    p, _ = golden_section(
        lambda p: (binary_kl(p, max_prior) - mi_nats) ** 2, max_prior, 1.0, tol=tol
    )
    return min(1.0, max(max_prior, p))


def psi_star_subgaussian(eps: float, sigma2: float) -> float:
    """Convex conjugate of the sub-Gaussian log-MGF envelope lambda^2 sigma2 / 2."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return eps * eps / (2.0 * sigma2)


def thm5_gap_tail_bound(mi_z_theta_nats: float, n: int, k_eps: float) -> float:
    """Probability bound on the generalization gap exceeding a level eps.

    ``k_eps`` is the rate K(eps) evaluated by the caller.
    """
    if n <= 0:
        raise ValueError("n must be a positive integer")
    if k_eps <= 0:
        raise ValueError("k_eps must be positive")
    if mi_z_theta_nats < 0:
        raise ValueError("mutual information must be nonnegative")
    return min(1.0, (mi_z_theta_nats + 1.0) / (n * k_eps))


@dataclass(frozen=True, eq=False)
class FiniteJoint:
    """Joint pmf over (theta, side information, target), axes in that order."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 3:
            raise ValueError("pmf must be a 3-d array over (theta, s, t)")
        if (pmf < 0).any():
            raise ValueError("pmf has negative entries")
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
        object.__setattr__(self, "pmf", pmf)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pmf.shape

    @classmethod
    def random(cls, rng: np.random.Generator, shape=(3, 3, 3)) -> "FiniteJoint":
        w = rng.exponential(size=shape)
        return cls(w / w.sum())


def bayes_strategy(joint: FiniteJoint) -> np.ndarray:
    """MAP guess of t for every (theta, s) cell; ties go to the lowest t."""
    return np.argmax(joint.pmf, axis=2)


def bayes_success_finite(joint: FiniteJoint) -> float:
    """Exact success probability of the MAP attacker.

    Sums p(theta, s) * max_t p(t | theta, s) over the cells with p(theta, s) > 0.
    """
    marg = joint.pmf.sum(axis=2)
    live = marg > 0
    posterior = joint.pmf[live] / marg[live][:, None]
    return float(np.sum(marg[live] * posterior.max(axis=1)))


def strategy_success(joint: FiniteJoint, strategy: np.ndarray) -> float:
    """Success probability of a deterministic map (theta, s) -> t."""
    n_theta, n_s, _ = joint.shape
    ii, jj = np.indices((n_theta, n_s))
    return float(joint.pmf[ii, jj, strategy].sum())


@functools.lru_cache(maxsize=16)
def _all_strategies(n_t: int, cells: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_t), repeat=cells)), dtype=np.intp)


def exhaustive_best_success(joint: FiniteJoint) -> float:
    """Best success over every deterministic strategy, by brute force."""
    n_theta, n_s, n_t = joint.shape
    cells = n_theta * n_s
    if n_t**cells > MAX_STRATEGIES:
        raise ValueError(f"{n_t}^{cells} strategies exceed the enumeration cap {MAX_STRATEGIES}")
    flat = joint.pmf.reshape(cells, n_t)
    strategies = _all_strategies(n_t, cells)
    success = flat[np.arange(cells), strategies].sum(axis=1)
    return float(success.max())


def _as_pmf(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("expected a 1-d probability vector")
    return p


def error_sum(p1, p0, region) -> float:
    """Type-I plus type-II error of the test that declares 1 on ``region``."""
    p1, p0 = _as_pmf(p1), _as_pmf(p0)
    region = np.asarray(region, dtype=bool)
    return float(p0[region].sum() + p1[~region].sum())


def tv_tradeoff_finite(p1, p0) -> tuple[float, float]:
    """Total variation and the minimal error sum attained by the region {p1 > p0}."""
    p1, p0 = _as_pmf(p1), _as_pmf(p0)
    if p1.shape != p0.shape:
        raise ValueError("p1 and p0 live on different supports")
    tv = 0.5 * float(np.abs(p1 - p0).sum())
    err = error_sum(p1, p0, p1 > p0)
    return tv, err


@dataclass
class BoundReport:
    lb_thm2: float | None = None
    lb_thm3: float | None = None
    lb_thm4: float | None = None
    ub_thm5: float | None = None
    r_max_star: float | None = None
    mi_nats: float | None = None
    provenance: dict = field(default_factory=dict)
    clamp_binds: bool = False
