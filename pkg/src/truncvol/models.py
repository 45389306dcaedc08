"""Seeded path simulators producing ground-truth records for the estimators.

Four price models: Merton log-normal jump diffusion, Heston variance with
log-normal jumps, Gauss + Variance-Gamma, and Gauss + symmetric stable.  All
simulation is driven by a counter-based (Philox) generator so that identical
(spec, grid, seed) triples reproduce bit-identical paths on any platform and
under any execution order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .kernels import FaJumpLaw

JUMP_COUNT_SENTINEL = -1
_MAX_SUBGRID = 200_000_000


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform observation grid: n steps of size h = t_horizon / n."""

    t_horizon: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("grid must have at least one interval")
        if self.t_horizon <= 0:
            raise ValueError("time horizon must be > 0")

    @property
    def h(self) -> float:
        return self.t_horizon / self.n


@dataclass
class PathRecord:
    """One simulated path: observed increments plus ground truth.

    ``dn`` holds per-interval jump counts, or the sentinel -1 everywhere for
    infinite-activity models where counts are undefined.
    """

    dx: np.ndarray
    m: np.ndarray
    dn: np.ndarray
    iv_i: np.ndarray
    iv_total: float
    seed: int

    def __post_init__(self) -> None:
        n = len(self.dx)
        if not (len(self.m) == len(self.dn) == len(self.iv_i) == n):
            raise ValueError("path vectors must share one length")
        if np.any(self.iv_i <= 0):
            raise ValueError("per-interval integrated variance must be > 0")
        total = float(np.sum(self.iv_i))
        if abs(total - self.iv_total) > 1e-12 * max(abs(total), 1e-300):
            raise ValueError("iv_total inconsistent with per-interval values")

    @property
    def n(self) -> int:
        return len(self.dx)

    @property
    def has_jump_counts(self) -> bool:
        return bool(np.all(self.dn >= 0))


@dataclass(frozen=True)
class Merton:
    """Constant volatility plus compound Poisson normal jumps."""

    sigma: float
    jumps: FaJumpLaw

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass(frozen=True)
class HestonJump:
    """Heston variance dynamics with an independent compound Poisson jump part.

    The variance path is advanced by full-truncation Euler on ``substeps``
    sub-intervals per observation step.
    """

    mu: float
    kappa: float
    theta: float
    xi: float
    rho: float
    v0: float
    jumps: FaJumpLaw
    substeps: int = 10

    def __post_init__(self) -> None:
        if min(self.kappa, self.theta, self.xi, self.v0) <= 0:
            raise ValueError("kappa, theta, xi and v0 must be > 0")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True)
class GaussVG:
    """Brownian part plus a Variance-Gamma jump component."""

    a_drift: float
    sigma: float
    sigma_jmp: float
    theta_vg: float
    kappa_vg: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.kappa_vg <= 0:
            raise ValueError("subordinator variance rate must be > 0")
        if self.sigma_jmp < 0:
            raise ValueError("jump volatility must be >= 0")


@dataclass(frozen=True)
class GaussStable:
    """Brownian part plus a symmetric strictly stable jump component.

    ``scale`` multiplies time in the characteristic exponent, so one-step jump
    increments carry the factor (scale * h)^(1/activity_index).
    """

    sigma: float
    activity_index: float
    scale: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not 0.0 < self.activity_index < 2.0:
            raise ValueError("activity index must lie in (0, 2)")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")


ModelSpec = Union[Merton, HestonJump, GaussVG, GaussStable]


def true_sigma2(spec: ModelSpec) -> float | None:
    """Spot variance of the continuous part, or None when it is stochastic."""
    if isinstance(spec, (Merton, GaussVG, GaussStable)):
        return spec.sigma**2
    return None


def _rng_for(seed: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=seed))


def _normal_jump_increments(rng, law: FaJumpLaw, h: float, n: int):
    counts = rng.poisson(law.intensity * h, n)
    z = rng.standard_normal(n)
    jumps = law.jump_mean * counts + law.jump_std * np.sqrt(counts) * z
    return jumps, counts.astype(np.int64)


def symmetric_stable_increments(
    rng: np.random.Generator, activity_index: float, unit_scale: float, n: int
) -> np.ndarray:
    """Chambers-Mallows-Stuck draws of a symmetric stable law.

    ``unit_scale`` is the scale of the characteristic function
    exp(-(unit_scale |u|)^index); for a process increment over a step h pass
    (scale * h)^(1/index).
    """
    y = activity_index
    u = rng.uniform(-math.pi / 2.0, math.pi / 2.0, n)
    e = rng.standard_exponential(n)
    base = np.sin(y * u) / np.cos(u) ** (1.0 / y)
    tilt = (np.cos((1.0 - y) * u) / e) ** ((1.0 - y) / y)
    return unit_scale * base * tilt


def simulate(spec: ModelSpec, grid: SamplingGrid, seed: int) -> PathRecord:
    """Simulate one path of ``spec`` on ``grid``; deterministic in the seed."""
    rng = _rng_for(seed)
    if isinstance(spec, Merton):
        return _simulate_merton(spec, grid, rng, seed)
    if isinstance(spec, HestonJump):
        return _simulate_heston(spec, grid, rng, seed)
    if isinstance(spec, GaussVG):
        return _simulate_vg(spec, grid, rng, seed)
    if isinstance(spec, GaussStable):
        return _simulate_stable(spec, grid, rng, seed)
    raise TypeError(f"unknown model spec {type(spec).__name__}")


def _simulate_merton(spec, grid, rng, seed):
    n, h = grid.n, grid.h
    z = rng.standard_normal(n)
    jumps, counts = _normal_jump_increments(rng, spec.jumps, h, n)
    dx = spec.sigma * math.sqrt(h) * z + jumps
    iv_i = np.full(n, spec.sigma**2 * h)
    return PathRecord(dx, jumps, counts, iv_i, float(np.sum(iv_i)), seed)


def _simulate_heston(spec, grid, rng, seed):
    n, h = grid.n, grid.h
    sub = spec.substeps
    total = n * sub
    if total > _MAX_SUBGRID:
        raise ValueError("sub-grid too large (n * substeps)")
    delta = h / sub
    sqrt_delta = math.sqrt(delta)
    z_var = rng.standard_normal(total)
    z_perp = rng.standard_normal(total)
    z_price = spec.rho * z_var + math.sqrt(1.0 - spec.rho**2) * z_perp

    dxc = np.empty(total)
    iv_sub = np.empty(total)
    v = spec.v0
    for j in range(total):
        v_pos = v if v > 0.0 else 0.0
        v_next = v + spec.kappa * (spec.theta - v_pos) * delta \
            + spec.xi * math.sqrt(v_pos) * sqrt_delta * z_var[j]
        v_next_pos = v_next if v_next > 0.0 else 0.0
        dxc[j] = math.sqrt(v_pos) * sqrt_delta * z_price[j]
        iv_sub[j] = 0.5 * delta * (v_pos + v_next_pos)
        v = v_next

    jumps, counts = _normal_jump_increments(rng, spec.jumps, h, n)
    dx = spec.mu * h + dxc.reshape(n, sub).sum(axis=1) + jumps
    iv_i = iv_sub.reshape(n, sub).sum(axis=1)
    return PathRecord(dx, jumps, counts, iv_i, float(np.sum(iv_i)), seed)


def _simulate_vg(spec, grid, rng, seed):
    n, h = grid.n, grid.h
    z = rng.standard_normal(n)
    ds = rng.gamma(shape=h / spec.kappa_vg, scale=spec.kappa_vg, size=n)
    z_jmp = rng.standard_normal(n)
    jumps = spec.theta_vg * ds + spec.sigma_jmp * np.sqrt(ds) * z_jmp
    dx = spec.a_drift * h + spec.sigma * math.sqrt(h) * z + jumps
    iv_i = np.full(n, spec.sigma**2 * h)
    dn = np.full(n, JUMP_COUNT_SENTINEL, dtype=np.int64)
    return PathRecord(dx, jumps, dn, iv_i, float(np.sum(iv_i)), seed)


def _simulate_stable(spec, grid, rng, seed):
    n, h = grid.n, grid.h
    z = rng.standard_normal(n)
    unit_scale = (spec.scale * h) ** (1.0 / spec.activity_index)
    jumps = symmetric_stable_increments(rng, spec.activity_index, unit_scale, n)
    dx = spec.sigma * math.sqrt(h) * z + jumps
    iv_i = np.full(n, spec.sigma**2 * h)
    dn = np.full(n, JUMP_COUNT_SENTINEL, dtype=np.int64)
    return PathRecord(dx, jumps, dn, iv_i, float(np.sum(iv_i)), seed)


PATH_CSV_COLUMNS = ("i", "dx", "m", "dn", "iv_i")


def path_to_csv(path: PathRecord) -> str:
    """Serialize a path record with exact 17-significant-digit decimals."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(PATH_CSV_COLUMNS)
    for i in range(path.n):
        writer.writerow([
            i,
            format(path.dx[i], ".17g"),
            format(path.m[i], ".17g"),
            int(path.dn[i]),
            format(path.iv_i[i], ".17g"),
        ])
    return buf.getvalue()


def path_from_csv(text: str, seed: int = 0) -> PathRecord:
    """Rebuild a path record from its CSV form (the seed is not serialized)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != PATH_CSV_COLUMNS:
        raise ValueError(f"unexpected path CSV header: {header!r}")
    dx, m, dn, iv_i = [], [], [], []
    for row in reader:
        if not row:
            continue
        dx.append(float(row[1]))
        m.append(float(row[2]))
        dn.append(int(row[3]))
        iv_i.append(float(row[4]))
    iv = np.asarray(iv_i)
    return PathRecord(
        np.asarray(dx), np.asarray(m), np.asarray(dn, dtype=np.int64),
        iv, float(np.sum(iv)), seed,
    )
