"""Analytic kernels for threshold selection in truncated realized variance.

Pure functions of their inputs: the per-interval truncation kernels ``a`` and
``b``, the conditional-MSE derivative kernel ``F`` whose root is the optimal
threshold, the Levy-case expectation of ``b`` (exact quadrature and
closed-form small-step approximations), and the jump misclassification count.
All exponentials of large negative arguments are allowed to underflow to zero
so the kernels never produce NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .models import PathRecord, SamplingGrid

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2 = math.sqrt(2.0)


@dataclass(frozen=True)
class FaJumpLaw:
    """Compound-Poisson jump law with normally distributed jump sizes.

    ``density_at_zero`` is the jump-size density mass at the origin,
    f(0+) + f(0-); if omitted it is derived from the normal size law.
    """

    intensity: float
    jump_mean: float = 0.0
    jump_std: float = 1.0
    density_at_zero: float | None = None

    def __post_init__(self) -> None:
        if self.intensity < 0:
            raise ValueError("jump intensity must be >= 0")
        if self.jump_std <= 0:
            raise ValueError("jump size std must be > 0")
        if self.density_at_zero is not None and self.density_at_zero < 0:
            raise ValueError("density_at_zero must be >= 0")

    @property
    def c_f(self) -> float:
        """Two-sided density at zero used by the small-step expansion."""
        if self.density_at_zero is not None:
            return self.density_at_zero
        z = self.jump_mean / self.jump_std
        return 2.0 * math.exp(-0.5 * z * z) / (self.jump_std * SQRT_2PI)


@dataclass(frozen=True)
class StableLaw:
    """Symmetric strictly stable jump law.

    ``activity_index`` is the Blumenthal-Getoor index in (0, 2) and
    ``levy_constant`` the constant of the Levy density c|x|^(-index-1).
    """

    activity_index: float
    levy_constant: float

    def __post_init__(self) -> None:
        if not 0.0 < self.activity_index < 2.0:
            raise ValueError("activity index must lie in (0, 2)")
        if self.levy_constant <= 0:
            raise ValueError("levy_constant must be > 0")


def _validate_kernel_args(eps: float, sigma2_i: float) -> None:
    if sigma2_i <= 0:
        raise ValueError("per-interval variance sigma2_i must be > 0")
    if eps < 0:
        raise ValueError("threshold must be >= 0")


def a_coef(eps: float, m, sigma2_i: float):
    """Gaussian boundary-density kernel of one interval.

    a(eps, m) = (exp(-(eps-m)^2 / (2 s2)) + exp(-(eps+m)^2 / (2 s2))) / sqrt(2 pi s2)

    ``m`` may be a scalar or an array of jump increments; the threshold and
    per-interval variance are scalars.
    """
    _validate_kernel_args(eps, sigma2_i)
    m = np.asarray(m, dtype=float)
    inv2s2 = 0.5 / sigma2_i
    out = (np.exp(-((eps - m) ** 2) * inv2s2) + np.exp(-((eps + m) ** 2) * inv2s2))
    out /= math.sqrt(sigma2_i) * SQRT_2PI
    return out if out.ndim else float(out)


def b_coef(eps: float, m, sigma2_i: float):
    """Truncated second moment of a N(m, s2) increment at threshold ``eps``.

    b(eps, m) = E[X^2 1{|X| <= eps}] for X ~ N(m, s2).  Evaluated through the
    complementary-error function; the result is clipped to the mathematically
    exact range [0, m^2 + s2] to absorb last-ulp rounding.
    """
    _validate_kernel_args(eps, sigma2_i)
    m = np.abs(np.asarray(m, dtype=float))  # b is even in m
    s = math.sqrt(sigma2_i)
    inv2s2 = 0.5 / sigma2_i
    e_minus = np.exp(-((eps - m) ** 2) * inv2s2)
    e_plus = np.exp(-((eps + m) ** 2) * inv2s2)
    t1 = -(e_minus * (eps + m) + e_plus * (eps - m)) * (s / SQRT_2PI)
    # normal-density integral over [(m-eps)/s, (m+eps)/s] via the complementary
    # error function: with m folded positive both bounds can sit deep in the
    # upper tail, where erf would lose all relative precision
    cdf_span = 0.5 * (erfc((m - eps) / (s * SQRT_2)) - erfc((m + eps) / (s * SQRT_2)))
    bound = m * m + sigma2_i
    out = np.clip(t1 + bound * cdf_span, 0.0, bound)
    return out if out.ndim else float(out)


class CmseProblem:
    """Conditional-MSE objective F(eps; sigma, m) for a fixed path.

    F(eps) = sum_i a_i (eps^2 + 2 sum_{j != i} b_j - 2 IV) with IV = sigma^2 n h.
    Jump increments are grouped by absolute value (a and b are even in m), so
    one evaluation costs O(#distinct jump sizes); sums are compensated.
    """

    def __init__(self, sigma: float, jumps, grid: "SamplingGrid"):
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        jumps = np.asarray(jumps, dtype=float)
        if jumps.ndim != 1 or jumps.size != grid.n:
            raise ValueError("jump vector length must equal grid.n")
        self.sigma = float(sigma)
        self.grid = grid
        self.jumps = jumps
        self.sigma2_i = sigma * sigma * grid.h
        self.iv = sigma * sigma * grid.t_horizon
        self._values, self._counts = np.unique(np.abs(jumps), return_counts=True)
        self._counts = self._counts.astype(float)

    def objective(self, eps: float) -> float:
        a = np.atleast_1d(a_coef(eps, self._values, self.sigma2_i))
        b = np.atleast_1d(b_coef(eps, self._values, self.sigma2_i))
        c = self._counts
        s_a = math.fsum(a * c)
        s_b = math.fsum(b * c)
        s_ab = math.fsum(a * b * c)
        return (eps * eps + 2.0 * s_b - 2.0 * self.iv) * s_a - 2.0 * s_ab

    def objective_batch(self, eps: np.ndarray, block: int = 64) -> np.ndarray:
        """Vectorized objective over many thresholds (used by the root scan).

        Summation here is plain (pairwise) numpy; the scalar path keeps the
        compensated sums and is what bisection refines against.
        """
        eps = np.asarray(eps, dtype=float)
        out = np.empty(eps.size)
        m = self._values[None, :]
        c = self._counts[None, :]
        s = math.sqrt(self.sigma2_i)
        inv2s2 = 0.5 / self.sigma2_i
        for start in range(0, eps.size, block):
            e = eps[start:start + block, None]
            e_minus = np.exp(-((e - m) ** 2) * inv2s2)
            e_plus = np.exp(-((e + m) ** 2) * inv2s2)
            a = (e_minus + e_plus) / (s * SQRT_2PI)
            t1 = -(e_minus * (e + m) + e_plus * (e - m)) * (s / SQRT_2PI)
            span = 0.5 * (erfc((m - e) / (s * SQRT_2)) - erfc((m + e) / (s * SQRT_2)))
            bound = m * m + self.sigma2_i
            b = np.clip(t1 + bound * span, 0.0, bound)
            s_a = np.sum(a * c, axis=1)
            s_b = np.sum(b * c, axis=1)
            s_ab = np.sum(a * b * c, axis=1)
            e1 = eps[start:start + block]
            out[start:start + block] = (e1 * e1 + 2.0 * s_b - 2.0 * self.iv) * s_a \
                - 2.0 * s_ab
        return out


def cmse_objective(eps: float, sigma: float, jumps, grid: "SamplingGrid") -> float:
    """One-shot evaluation of the conditional-MSE kernel F(eps; sigma, m)."""
    return CmseProblem(sigma, jumps, grid).objective(eps)


def _poisson_terms(lam: float, tail_tol: float) -> Iterable[tuple[int, float]]:
    """Yield (k, pmf) of a Poisson(lam) until the remaining tail < tail_tol."""
    pmf = math.exp(-lam)
    covered = pmf
    yield 0, pmf
    k = 0
    while 1.0 - covered >= tail_tol:
        k += 1
        pmf *= lam / k
        covered += pmf
        yield k, pmf
        if k > 200 + 20 * lam:  # defensive cap; unreachable for sane inputs
            break


def expected_b1_merton(
    eps: float,
    sigma: float,
    h: float,
    law: FaJumpLaw,
    *,
    tail_tol: float = 1e-12,
    quad_abs_tol: float = 1e-12,
) -> float:
    """E[b(eps)] for a Levy increment sigma*W_h + compound Poisson jumps.

    Mixes b(eps, m, sigma^2 h) over the number of jumps per step (Poisson tail
    truncated below ``tail_tol``) and the normal jump-size sum (adaptive
    Gauss-Kronrod quadrature, absolute tolerance ``quad_abs_tol``).
    The no-jump term is evaluated exactly.
    """
    if h <= 0:
        raise ValueError("step h must be > 0")
    if eps < 0:
        raise ValueError("threshold must be >= 0")
    sigma2_i = sigma * sigma * h
    lam_h = law.intensity * h
    total = 0.0
    for k, pmf in _poisson_terms(lam_h, tail_tol):
        if k == 0:
            total += pmf * b_coef(eps, 0.0, sigma2_i)
            continue
        mean_k = k * law.jump_mean
        sd_k = math.sqrt(k) * law.jump_std
        norm_const = 1.0 / (sd_k * SQRT_2PI)

        def integrand(m: float) -> float:
            z = (m - mean_k) / sd_k
            return b_coef(eps, m, sigma2_i) * norm_const * math.exp(-0.5 * z * z)

        lo = mean_k - 10.0 * sd_k
        hi = mean_k + 10.0 * sd_k
        # b is concentrated on |m| <= eps, which can be a sliver of the jump
        # range; marking its edges keeps the adaptive rule from skipping it
        spike = [x for x in (-eps, 0.0, eps) if lo < x < hi]
        val = quad(
            integrand,
            lo,
            hi,
            points=spike or None,
            epsabs=quad_abs_tol,
            epsrel=1e-10,
            limit=200,
            full_output=1,
        )[0]
        total += pmf * val
    return total


def expected_b1_asymptotic_fa(eps: float, sigma: float, h: float, law: FaJumpLaw) -> float:
    """Leading small-step terms of E[b(eps)] under finite-activity jumps.

    sigma^2 h - (2/sqrt(2 pi)) sigma eps sqrt(h) exp(-eps^2/(2 sigma^2 h))
             + lambda h eps^3 C(f) / 3

    Valid only in the regime eps -> 0 with eps >> sqrt(h).
    """
    if h <= 0:
        raise ValueError("step h must be > 0")
    s2h = sigma * sigma * h
    gauss = (2.0 / SQRT_2PI) * sigma * eps * math.sqrt(h) * math.exp(-eps * eps / (2.0 * s2h))
    jump = law.intensity * h * eps**3 * law.c_f / 3.0
    return s2h - gauss + jump


def expected_b1_asymptotic_stable(eps: float, sigma: float, h: float, law: StableLaw) -> float:
    """Leading small-step terms of E[b(eps)] under symmetric stable jumps.

    sigma^2 h - (2 sigma/sqrt(2 pi)) sqrt(h) eps exp(-eps^2/(2 sigma^2 h))
             + (2 c / (2 - Y)) h eps^(2 - Y)
    """
    if h <= 0:
        raise ValueError("step h must be > 0")
    s2h = sigma * sigma * h
    y = law.activity_index
    gauss = (2.0 * sigma / SQRT_2PI) * math.sqrt(h) * eps * math.exp(-eps * eps / (2.0 * s2h))
    jump = (2.0 * law.levy_constant / (2.0 - y)) * h * eps ** (2.0 - y)
    return s2h - gauss + jump


def expected_b1_from_draws(eps: float, draws: np.ndarray) -> float:
    """Monte Carlo E[b(eps)] from precomputed increment draws sigma*W_h + J_h.

    With a fixed sample this is nondecreasing in ``eps``, which makes
    bisection on the sampled Levy MSE equation well behaved.
    """
    if eps < 0:
        raise ValueError("threshold must be >= 0")
    draws = np.asarray(draws)
    inside = np.abs(draws) <= eps
    return float(np.sum(draws * draws * inside) / draws.size)


def loss_count(path: "PathRecord", eps: float) -> int:
    """Number of jump misclassifications of threshold ``eps`` on one path.

    Counts intervals where |dX| exceeds the threshold without a jump, plus
    intervals with a jump where |dX| stays below it.  Undefined for
    infinite-activity paths (sentinel jump counts).
    """
    if eps < 0:
        raise ValueError("threshold must be >= 0")
    dn = np.asarray(path.dn)
    if np.any(dn < 0):
        raise ValueError("loss is undefined for paths without finite jump counts")
    adx = np.abs(np.asarray(path.dx))
    false_cut = (adx > eps) & (dn == 0)
    missed_jump = (adx <= eps) & (dn > 0)
    return int(np.count_nonzero(false_cut) + np.count_nonzero(missed_jump))
