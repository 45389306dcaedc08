"""Monte Carlo experiment engine reproducing the simulation tables.

Runs M seeded paths of one model, applies a configured estimator set to each,
and aggregates streaming statistics (Welford one-pass mean/variance folded in
path-index order, so the result is bit-identical for any worker count).
Configs are plain TOML files; outputs are RFC-4180 CSV or markdown tables.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import ESTIMATOR_ORDER, evaluate_estimator
from .kernels import FaJumpLaw
from .models import (
    GaussStable,
    GaussVG,
    HestonJump,
    Merton,
    ModelSpec,
    SamplingGrid,
    simulate,
    true_sigma2,
)
from .solvers import solve_vn

if sys.version_info >= (3, 11):  # pragma: no cover - version shim
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

BIAS_DENOMINATORS = ("true_sigma2", "path_iv")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one Monte Carlo table."""

    model: ModelSpec
    grid: SamplingGrid
    n_paths: int
    base_seed: int
    estimators: tuple[str, ...] = ESTIMATOR_ORDER
    estimator_params: dict = field(default_factory=dict)
    bias_denominator: str = "true_sigma2"
    output_path: str | None = None
    output_format: str = "csv"
    label: str = ""

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        if len(set(self.estimators)) != len(self.estimators):
            raise ValueError("estimator identifiers must be unique")
        if self.bias_denominator not in BIAS_DENOMINATORS:
            raise ValueError(f"bias_denominator must be one of {BIAS_DENOMINATORS}")
        if self.bias_denominator == "true_sigma2" and true_sigma2(self.model) is None:
            raise ValueError("model has stochastic volatility; use bias_denominator='path_iv'")
        if self.output_format not in ("csv", "markdown"):
            raise ValueError("output format must be 'csv' or 'markdown'")


class Welford:
    """Streaming mean/variance accumulator (one pass, numerically stable)."""

    __slots__ = ("count", "mean", "_m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self._m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def se(self) -> float:
        if self.count == 0:
            return 0.0
        return self.std / math.sqrt(self.count)


@dataclass
class EstimatorStats:
    """Aggregate table row for one estimator."""

    estimator: str
    n_paths: int
    mean_rel_bias: float
    std_rel_bias: float
    se_rel_bias: float
    mse: float
    se_mse: float
    mean_loss: float | None
    std_loss: float | None
    mean_eps: float | None
    std_eps: float | None
    mean_iters: float
    std_iters: float
    fallbacks: int
    nonconverged: int
    errors: int


@dataclass
class McSummary:
    """Cross-path aggregate of one experiment run."""

    config_hash: str
    n_paths: int
    bias_denominator: str
    rows: list[EstimatorStats]

    def row(self, est_id: str) -> EstimatorStats:
        for r in self.rows:
            if r.estimator == est_id:
                return r
        raise KeyError(est_id)


def _path_worker(cfg: ExperimentConfig, index: int):
    seed = cfg.base_seed ^ index
    path = simulate(cfg.model, cfg.grid, seed)
    t = cfg.grid.t_horizon
    sigma2 = true_sigma2(cfg.model)
    out = []
    for est_id in cfg.estimators:
        params = cfg.estimator_params.get(est_id, {})
        try:
            rep = evaluate_estimator(est_id, path, cfg.grid, **params)
        except Exception:
            out.append(None)
            continue
        if cfg.bias_denominator == "true_sigma2":
            # constant-volatility tables report errors of the variance rate
            rel = rep.iv_hat / (sigma2 * t) - 1.0
            sq = (rep.iv_hat / t - sigma2) ** 2
        else:
            rel = rep.iv_hat / path.iv_total - 1.0
            sq = (rep.iv_hat - path.iv_total) ** 2
        eps = rep.eps_final if rep.eps_final is not None and math.isfinite(rep.eps_final) else None
        out.append((rel, sq, rep.loss, eps, rep.iterations,
                    rep.solver_fallback, not rep.converged))
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1,
                   n_paths: int | None = None, base_seed: int | None = None) -> McSummary:
    """Run the configured experiment; deterministic for any thread count.

    Per-path seeds are base_seed XOR path index and the per-path results are
    folded in index order, so scheduling cannot affect the summary.
    ``n_paths``/``base_seed`` override the config without mutating it.
    """
    if n_paths is not None or base_seed is not None:
        overrides = {}
        if n_paths is not None:
            overrides["n_paths"] = n_paths
        if base_seed is not None:
            overrides["base_seed"] = base_seed
        cfg = _replace(cfg, **overrides)
    if threads < 1:
        raise ValueError("threads must be >= 1")

    accs = {
        est: {"rel": Welford(), "sq": Welford(), "loss": Welford(),
              "eps": Welford(), "iters": Welford(),
              "fallbacks": 0, "nonconverged": 0, "errors": 0}
        for est in cfg.estimators
    }

    def fold(result) -> None:
        for est_id, item in zip(cfg.estimators, result):
            acc = accs[est_id]
            if item is None:
                acc["errors"] += 1
                continue
            rel, sq, loss, eps, iters, fallback, nonconv = item
            acc["rel"].add(rel)
            acc["sq"].add(sq)
            if loss is not None:
                acc["loss"].add(float(loss))
            if eps is not None:
                acc["eps"].add(eps)
            acc["iters"].add(float(iters))
            acc["fallbacks"] += int(fallback)
            acc["nonconverged"] += int(nonconv)

    if threads == 1:
        for p in range(cfg.n_paths):
            fold(_path_worker(cfg, p))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(lambda p: _path_worker(cfg, p), range(cfg.n_paths)):
                fold(result)

    rows = []
    for est_id in cfg.estimators:
        acc = accs[est_id]
        rel, sq = acc["rel"], acc["sq"]
        loss, eps, iters = acc["loss"], acc["eps"], acc["iters"]
        rows.append(EstimatorStats(
            estimator=est_id,
            n_paths=cfg.n_paths,
            mean_rel_bias=rel.mean, std_rel_bias=rel.std, se_rel_bias=rel.se,
            mse=sq.mean, se_mse=sq.se,
            mean_loss=loss.mean if loss.count else None,
            std_loss=loss.std if loss.count else None,
            mean_eps=eps.mean if eps.count else None,
            std_eps=eps.std if eps.count else None,
            mean_iters=iters.mean, std_iters=iters.std,
            fallbacks=acc["fallbacks"], nonconverged=acc["nonconverged"],
            errors=acc["errors"],
        ))
    return McSummary(config_hash(cfg), cfg.n_paths, cfg.bias_denominator, rows)


def _replace(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return dataclasses.replace(cfg, **kw)


TABLE_COLUMNS = (
    "estimator", "mean_rel_bias", "std_rel_bias", "mse",
    "mean_loss", "std_loss", "mean_eps", "std_eps",
    "mean_iters", "std_iters", "fallbacks", "nonconverged", "errors",
)


def _row_cells(row: EstimatorStats):
    return (
        row.estimator, row.mean_rel_bias, row.std_rel_bias, row.mse,
        row.mean_loss, row.std_loss, row.mean_eps, row.std_eps,
        row.mean_iters, row.std_iters, row.fallbacks, row.nonconverged, row.errors,
    )


def emit_table(summary: McSummary, fmt: str = "csv") -> str:
    """Render the summary as CSV (exact decimals) or markdown (5 decimals)."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(TABLE_COLUMNS)
        for row in summary.rows:
            cells = []
            for cell in _row_cells(row):
                if cell is None:
                    cells.append("")
                elif isinstance(cell, float):
                    cells.append(format(cell, ".17g"))
                else:
                    cells.append(str(cell))
            writer.writerow(cells)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(TABLE_COLUMNS) + " |",
                 "|" + "---|" * len(TABLE_COLUMNS)]
        total_failures = 0
        for row in summary.rows:
            cells = []
            for cell in _row_cells(row):
                if cell is None:
                    cells.append("")
                elif isinstance(cell, float):
                    cells.append(format(cell, ".5f"))
                else:
                    cells.append(str(cell))
            lines.append("| " + " | ".join(cells) + " |")
            total_failures += row.fallbacks + row.nonconverged + row.errors
        if total_failures:
            lines.append("")
            lines.append(f"Footnote: {total_failures} per-path solver fallback/"
                         "non-convergence/error events; affected paths contribute "
                         "their fallback estimates.")
        return "\n".join(lines) + "\n"
    raise ValueError("format must be 'csv' or 'markdown'")


def emit_vn_curve(n_values=None) -> str:
    """CSV of the dimensionless threshold factor v_n over a grid of n."""
    if n_values is None:
        n_values = np.unique(np.geomspace(100, 10000, 40).astype(int))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(("n", "v_n"))
    for n in n_values:
        writer.writerow((int(n), format(solve_vn(int(n)), ".17g")))
    return buf.getvalue()


# --- config file round trip ---------------------------------------------------

def _model_to_dict(model: ModelSpec) -> dict:
    if isinstance(model, Merton):
        return {"kind": "merton", "sigma": model.sigma, "jumps": _law_to_dict(model.jumps)}
    if isinstance(model, HestonJump):
        return {"kind": "heston_jump", "mu": model.mu, "kappa": model.kappa,
                "theta": model.theta, "xi": model.xi, "rho": model.rho,
                "v0": model.v0, "substeps": model.substeps,
                "jumps": _law_to_dict(model.jumps)}
    if isinstance(model, GaussVG):
        return {"kind": "gauss_vg", "a_drift": model.a_drift, "sigma": model.sigma,
                "sigma_jmp": model.sigma_jmp, "theta_vg": model.theta_vg,
                "kappa_vg": model.kappa_vg}
    if isinstance(model, GaussStable):
        return {"kind": "gauss_stable", "sigma": model.sigma,
                "activity_index": model.activity_index, "scale": model.scale}
    raise TypeError(f"unknown model {type(model).__name__}")


def _law_to_dict(law: FaJumpLaw) -> dict:
    out = {"intensity": law.intensity, "jump_mean": law.jump_mean,
           "jump_std": law.jump_std}
    if law.density_at_zero is not None:
        out["density_at_zero"] = law.density_at_zero
    return out


def _law_from_dict(d: dict) -> FaJumpLaw:
    return FaJumpLaw(
        intensity=float(d["intensity"]),
        jump_mean=float(d.get("jump_mean", 0.0)),
        jump_std=float(d.get("jump_std", 1.0)),
        density_at_zero=(float(d["density_at_zero"])
                         if "density_at_zero" in d else None),
    )


def _model_from_dict(d: dict) -> ModelSpec:
    kind = d["kind"]
    if kind == "merton":
        return Merton(float(d["sigma"]), _law_from_dict(d["jumps"]))
    if kind == "heston_jump":
        return HestonJump(
            mu=float(d.get("mu", 0.0)), kappa=float(d["kappa"]),
            theta=float(d["theta"]), xi=float(d["xi"]), rho=float(d["rho"]),
            v0=float(d["v0"]), jumps=_law_from_dict(d["jumps"]),
            substeps=int(d.get("substeps", 10)))
    if kind == "gauss_vg":
        return GaussVG(
            a_drift=float(d.get("a_drift", 0.0)), sigma=float(d["sigma"]),
            sigma_jmp=float(d["sigma_jmp"]), theta_vg=float(d.get("theta_vg", 0.0)),
            kappa_vg=float(d["kappa_vg"]))
    if kind == "gauss_stable":
        return GaussStable(sigma=float(d["sigma"]),
                           activity_index=float(d["activity_index"]),
                           scale=float(d["scale"]))
    raise ValueError(f"unknown model kind {kind!r}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "label": cfg.label,
        "n_paths": cfg.n_paths,
        "base_seed": cfg.base_seed,
        "bias_denominator": cfg.bias_denominator,
        "estimators": list(cfg.estimators),
        "estimator_params": {k: dict(v) for k, v in sorted(cfg.estimator_params.items())},
        "grid": {"t_horizon": cfg.grid.t_horizon, "n": cfg.grid.n},
        "model": _model_to_dict(cfg.model),
        "output": {"path": cfg.output_path or "", "format": cfg.output_format},
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    output = d.get("output", {})
    return ExperimentConfig(
        model=_model_from_dict(d["model"]),
        grid=SamplingGrid(float(d["grid"]["t_horizon"]), int(d["grid"]["n"])),
        n_paths=int(d["n_paths"]),
        base_seed=int(d["base_seed"]),
        estimators=tuple(d.get("estimators", ESTIMATOR_ORDER)),
        estimator_params={k: dict(v) for k, v in d.get("estimator_params", {}).items()},
        bias_denominator=d.get("bias_denominator", "true_sigma2"),
        output_path=output.get("path") or None,
        output_format=output.get("format", "csv"),
        label=d.get("label", ""),
    )


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the parsed configuration."""
    payload = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_config(text: str) -> ExperimentConfig:
    """Parse an experiment config from TOML text."""
    return config_from_dict(tomllib.loads(text))


def load_config(path) -> ExperimentConfig:
    """Read and parse an experiment config file."""
    from pathlib import Path
    return parse_config(Path(path).read_text())


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        r = repr(value)
        return r if any(c in r for c in ".eE") else r + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize a config back to TOML; parse(dump(cfg)) hashes identically."""
    d = config_to_dict(cfg)
    lines = []
    for key in ("label", "n_paths", "base_seed", "bias_denominator", "estimators"):
        lines.append(f"{key} = {_toml_scalar(d[key])}")
    lines.append("")
    lines.append("[grid]")
    for k, v in d["grid"].items():
        lines.append(f"{k} = {_toml_scalar(v)}")
    lines.append("")
    lines.append("[model]")
    model = dict(d["model"])
    jumps = model.pop("jumps", None)
    for k, v in model.items():
        lines.append(f"{k} = {_toml_scalar(v)}")
    if jumps is not None:
        lines.append("")
        lines.append("[model.jumps]")
        for k, v in jumps.items():
            lines.append(f"{k} = {_toml_scalar(v)}")
    for est, params in d["estimator_params"].items():
        lines.append("")
        lines.append(f"[estimator_params.{est}]")
        for k, v in params.items():
            lines.append(f"{k} = {_toml_scalar(v)}")
    lines.append("")
    lines.append("[output]")
    for k, v in d["output"].items():
        lines.append(f"{k} = {_toml_scalar(v)}")
    return "\n".join(lines) + "\n"
