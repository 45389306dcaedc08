"""Root-finders and fixed-point solvers producing truncation thresholds.

Covers the root of the conditional-MSE kernel F, the Levy mean-square-error
equation (quadrature- or Monte-Carlo-backed), the dimensionless root v_n of
the no-jump equation, the refined modulus factor w_h, and the closed-form
asymptotic thresholds sqrt(factor * sigma^2 h log(1/h)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.special import erf

from .kernels import CmseProblem, FaJumpLaw, expected_b1_from_draws, expected_b1_merton
from .models import SamplingGrid, symmetric_stable_increments

SQRT_2PI = math.sqrt(2.0 * math.pi)


class NoSignChangeError(RuntimeError):
    """The scan found no sign change inside the bracket."""


class NonFiniteError(RuntimeError):
    """The objective evaluated to NaN inside the bracket."""


@dataclass(frozen=True)
class RootConfig:
    """Bracketing and tolerance settings for the threshold root-finders.

    When the bracket endpoints are omitted they default to scales tied to
    sigma*sqrt(h) (below any optimal threshold) and sigma*sqrt(h log(1/h))
    (far above it).
    """

    bracket_lo: float | None = None
    bracket_hi: float | None = None
    scan_points: int = 512
    rel_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self) -> None:
        if self.bracket_lo is not None and self.bracket_lo < 0:
            raise ValueError("bracket_lo must be >= 0")
        if (self.bracket_lo is not None and self.bracket_hi is not None
                and not self.bracket_lo < self.bracket_hi):
            raise ValueError("bracket_lo must be < bracket_hi")
        if self.scan_points < 2:
            raise ValueError("scan_points must be >= 2")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")

    def resolved_bracket(self, sigma: float, h: float) -> tuple[float, float]:
        log_term = max(math.log(1.0 / h), 0.5) if h < 1 else 0.5
        lo = self.bracket_lo if self.bracket_lo is not None else 0.25 * sigma * math.sqrt(h)
        hi = (self.bracket_hi if self.bracket_hi is not None
              else 20.0 * sigma * math.sqrt(h * log_term))
        if not lo < hi:
            raise ValueError("degenerate bracket")
        return lo, hi


# --- threshold selection policies -------------------------------------------

@dataclass(frozen=True)
class FixedThreshold:
    """Use a constant threshold."""

    eps: float

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class PowerBipowerRule:
    """eps = multiplier * h^exponent * sigma_hat, re-measured by bipower."""

    multiplier: float = 4.0
    exponent: float = 0.49

    def __post_init__(self) -> None:
        if self.multiplier <= 0:
            raise ValueError("multiplier must be > 0")
        if not 0.0 < self.exponent < 0.5:
            raise ValueError("exponent must lie in (0, 1/2)")


@dataclass(frozen=True)
class ModulusRule:
    """eps = sqrt(factor * sigma_hat^2 * h * log(1/h)) with factor 2 or 3."""

    factor: int
    sigma_source: str = "rv"

    def __post_init__(self) -> None:
        if self.factor not in (2, 3):
            raise ValueError("modulus factor must be 2 or 3")


@dataclass(frozen=True)
class RefinedModulusRule:
    """eps = w_h * sqrt(2 * sigma_hat^2 * h) with w_h from solve_wh."""

    sigma_source: str = "rv"


@dataclass(frozen=True)
class RootFRule:
    """eps solves F(eps; sigma_hat, m_hat) = 0."""

    sigma_source: str = "trv_as"


ThresholdRule = Union[FixedThreshold, PowerBipowerRule, ModulusRule, RefinedModulusRule, RootFRule]


# --- generic machinery -------------------------------------------------------

def _bisect_signed(f: Callable[[float], float], lo: float, hi: float,
                   f_lo: float, rel_tol: float, max_iter: int) -> float:
    """Bisection on [lo, hi] given f(lo) = f_lo and a sign change across it."""
    neg_left = f_lo < 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rel_tol * abs(mid):
            break
        fm = f(mid)
        if math.isnan(fm):
            raise NonFiniteError("objective is NaN inside the bracket")
        if (fm < 0) == neg_left:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scan_crossings(f: Callable[[float], float], lo: float, hi: float,
                    points: int, f_batch=None) -> tuple[np.ndarray, np.ndarray]:
    lo_eff = lo if lo > 0 else hi * 1e-12
    xs = np.geomspace(lo_eff, hi, points)
    fs = f_batch(xs) if f_batch is not None else np.array([f(x) for x in xs])
    if np.any(np.isnan(fs)):
        raise NonFiniteError("objective is NaN inside the bracket")
    return xs, fs


def solve_root_F(problem: CmseProblem, cfg: RootConfig | None = None,
                 *, all_crossings: bool = False):
    """Smallest root of the conditional-MSE kernel F inside the bracket.

    A geometric scan locates the first sign change, which bisection then
    refines to the configured relative tolerance.  With ``all_crossings`` the
    full scan is used and every bracketed root is returned (debug aid: the
    smallest-root policy is a documented choice, not a uniqueness claim).
    """
    cfg = cfg or RootConfig()
    lo, hi = cfg.resolved_bracket(problem.sigma, problem.grid.h)
    xs, fs = _scan_crossings(problem.objective, lo, hi, cfg.scan_points,
                             f_batch=problem.objective_batch)
    roots = []
    if fs[0] == 0.0:
        roots.append(float(xs[0]))
        if not all_crossings:
            return roots[0]
    for i in range(len(xs) - 1):
        # negative -> nonnegative is a crossing (zero reached from below is a
        # root); positive -> exact zero is the underflow plateau, not a root
        if not (fs[i] < 0 <= fs[i + 1] or fs[i] > 0 > fs[i + 1]):
            continue
        roots.append(_bisect_signed(problem.objective, float(xs[i]), float(xs[i + 1]),
                                    float(fs[i]), cfg.rel_tol, cfg.max_iter))
        if not all_crossings:
            return roots[0]
    if not roots:
        raise NoSignChangeError(
            "no sign change of F in bracket "
            f"[{lo:.6g}, {hi:.6g}]; widen the bracket or check the inputs")
    return roots


def solve_levy_mse(sigma: float, grid: SamplingGrid, law: FaJumpLaw,
                   cfg: RootConfig | None = None) -> float:
    """Unique root of eps^2 + 2 (n-1) E[b_1(eps)] - 2 IV = 0 (Levy case).

    E[b_1] is computed by Poisson-mixture quadrature, and the equation is
    strictly increasing in eps, so plain bisection on the bracket suffices.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    cfg = cfg or RootConfig()
    n, h = grid.n, grid.h
    iv = sigma * sigma * grid.t_horizon

    def g(eps: float) -> float:
        return eps * eps + 2.0 * (n - 1) * expected_b1_merton(eps, sigma, h, law) - 2.0 * iv

    lo, hi = cfg.resolved_bracket(sigma, h)
    f_lo, f_hi = g(lo), g(hi)
    if math.isnan(f_lo) or math.isnan(f_hi):
        raise NonFiniteError("Levy MSE objective is NaN at the bracket")
    if f_lo == 0.0:
        return lo
    if (f_lo < 0) == (f_hi < 0):
        raise NoSignChangeError(
            f"Levy MSE equation has no sign change in [{lo:.6g}, {hi:.6g}]")
    return _bisect_signed(g, lo, hi, f_lo, cfg.rel_tol, cfg.max_iter)


def solve_stable_mse(sigma: float, grid: SamplingGrid, activity_index: float,
                     scale: float, n_samples: int = 1_000_000, seed: int = 0,
                     cfg: RootConfig | None = None) -> float:
    """Monte Carlo root of the MSE equation under symmetric stable jumps.

    One fixed sample of increments sigma*sqrt(h)*Z + J_h is drawn up front
    (common random numbers), making the sampled equation monotone in eps.
    The answer is noisy at the Monte Carlo level of the sample.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    cfg = cfg or RootConfig()
    n, h = grid.n, grid.h
    iv = sigma * sigma * grid.t_horizon
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = rng.standard_normal(n_samples)
    jumps = symmetric_stable_increments(
        rng, activity_index, (scale * h) ** (1.0 / activity_index), n_samples)
    draws = sigma * math.sqrt(h) * z + jumps

    def g(eps: float) -> float:
        return eps * eps + 2.0 * (n - 1) * expected_b1_from_draws(eps, draws) - 2.0 * iv

    lo, hi = cfg.resolved_bracket(sigma, h)
    f_lo, f_hi = g(lo), g(hi)
    if (f_lo < 0) == (f_hi < 0):
        raise NoSignChangeError(
            f"sampled stable MSE equation has no sign change in [{lo:.6g}, {hi:.6g}]")
    return _bisect_signed(g, lo, hi, f_lo, cfg.rel_tol, cfg.max_iter)


@lru_cache(maxsize=None)
def solve_vn(n: int) -> float:
    """Dimensionless no-jump threshold factor: the root of

    v^2 + 4 (n-1) (-v phi(v) + integral_0^v phi) - 2 n = 0

    found by bisection on [0, 10] to 1e-12.  The optimal threshold for a
    jump-free path with constant volatility is then v_n * sigma * sqrt(h).
    """
    if n < 2:
        raise ValueError("n must be >= 2")

    def equation(v: float) -> float:
        phi_term = -v * math.exp(-0.5 * v * v) / SQRT_2PI
        int_term = 0.5 * erf(v / math.sqrt(2.0))
        return v * v + 4.0 * (n - 1) * (phi_term + int_term) - 2.0 * n

    lo, hi = 0.0, 10.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if equation(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def solve_wh(h: float) -> float:
    """Refined modulus factor: the unique w with exp(-w^2)/(w h) = sqrt(pi)/2.

    Solved as a fixed point in x = w^2: x <- log(2/(sqrt(pi) h)) - log(x)/2,
    started at x = log(1/h) and iterated to 1e-14.
    """
    if not 0.0 < h < 1.0:
        raise ValueError("step h must lie in (0, 1)")
    target = math.log(2.0 / (math.sqrt(math.pi) * h))
    x = math.log(1.0 / h)
    for _ in range(10_000):
        x_new = target - 0.5 * math.log(x)
        if abs(x_new - x) < 1e-14:
            x = x_new
            break
        x = x_new
    return math.sqrt(x)


def asymptotic_threshold(factor: float, sigma: float, h: float) -> float:
    """Closed-form threshold sqrt(factor * sigma^2 * h * log(1/h)).

    ``factor`` is 2 (mean-square optimal), 3 (misclassification optimal) or
    2 - Y under stable jumps of activity index Y.
    """
    if factor <= 0:
        raise ValueError("threshold factor must be > 0")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not 0.0 < h < 1.0:
        raise ValueError("step h must lie in (0, 1)")
    return math.sqrt(factor * sigma * sigma * h * math.log(1.0 / h))


def wh_threshold(sigma: float, h: float) -> float:
    """Refined threshold sigma * w_h * sqrt(2 h)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return sigma * solve_wh(h) * math.sqrt(2.0 * h)
