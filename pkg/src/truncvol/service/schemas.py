"""Pydantic request/response models for the threshold-estimation service."""
from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field


class JumpLawSchema(BaseModel):
    intensity: float = Field(ge=0)
    jump_mean: float = 0.0
    jump_std: float = Field(default=1.0, gt=0)
    density_at_zero: Optional[float] = Field(default=None, ge=0)


class MertonSchema(BaseModel):
    kind: Literal["merton"] = "merton"
    sigma: float = Field(gt=0)
    jumps: JumpLawSchema


class HestonJumpSchema(BaseModel):
    kind: Literal["heston_jump"] = "heston_jump"
    mu: float = 0.0
    kappa: float = Field(gt=0)
    theta: float = Field(gt=0)
    xi: float = Field(gt=0)
    rho: float = Field(ge=-1.0, le=1.0)
    v0: float = Field(gt=0)
    substeps: int = Field(default=10, ge=1)
    jumps: JumpLawSchema


class GaussVGSchema(BaseModel):
    kind: Literal["gauss_vg"] = "gauss_vg"
    a_drift: float = 0.0
    sigma: float = Field(gt=0)
    sigma_jmp: float = Field(ge=0)
    theta_vg: float = 0.0
    kappa_vg: float = Field(gt=0)


class GaussStableSchema(BaseModel):
    kind: Literal["gauss_stable"] = "gauss_stable"
    sigma: float = Field(gt=0)
    activity_index: float = Field(gt=0, lt=2)
    scale: float = Field(gt=0)


ModelSchema = Annotated[
    Union[MertonSchema, HestonJumpSchema, GaussVGSchema, GaussStableSchema],
    Field(discriminator="kind"),
]


class GridSchema(BaseModel):
    t_horizon: float = Field(gt=0)
    n: int = Field(ge=1)


class HealthResponse(BaseModel):
    status: str
    version: str


class SolveVnRequest(BaseModel):
    n: int = Field(ge=2)


class ScalarResponse(BaseModel):
    value: float


class SolveWhRequest(BaseModel):
    h: float = Field(gt=0, lt=1)


class SolveWhResponse(BaseModel):
    w: float
    sqrt_log_inv_h: float


class RootBracketSchema(BaseModel):
    bracket_lo: Optional[float] = Field(default=None, ge=0)
    bracket_hi: Optional[float] = None
    scan_points: int = Field(default=512, ge=2)
    rel_tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200, ge=1)


class SolveRootFRequest(BaseModel):
    sigma: float = Field(gt=0)
    grid: GridSchema
    jumps: Optional[list[float]] = None
    config: Optional[RootBracketSchema] = None


class ThresholdResponse(BaseModel):
    threshold: float


class SolveLevyRequest(BaseModel):
    sigma: float = Field(gt=0)
    grid: GridSchema
    law: JumpLawSchema
    config: Optional[RootBracketSchema] = None


class SimulateRequest(BaseModel):
    model: ModelSchema
    grid: GridSchema
    seed: int = Field(ge=0, lt=2**64)


class PathResponse(BaseModel):
    dx: list[float]
    m: list[float]
    dn: list[int]
    iv_i: list[float]
    iv_total: float
    seed: int


class EstimateRequest(BaseModel):
    dx: list[float]
    t_horizon: float = Field(gt=0)
    estimator: str
    eps: Optional[float] = None
    m: Optional[list[float]] = None
    dn: Optional[list[int]] = None
    iv_i: Optional[list[float]] = None


class EstimateResponse(BaseModel):
    iv_hat: float
    eps_final: Optional[float]
    iterations: int
    loss: Optional[int]
    kept: int
    converged: bool
    solver_fallback: bool


class ExperimentRequest(BaseModel):
    model: ModelSchema
    grid: GridSchema
    n_paths: int = Field(ge=1, le=20_000)
    base_seed: int = Field(ge=0, lt=2**64)
    estimators: Optional[list[str]] = None
    bias_denominator: Literal["true_sigma2", "path_iv"] = "true_sigma2"
    threads: int = Field(default=1, ge=1, le=64)


class EstimatorRowResponse(BaseModel):
    estimator: str
    mean_rel_bias: float
    std_rel_bias: float
    se_rel_bias: float
    mse: float
    se_mse: float
    mean_loss: Optional[float]
    std_loss: Optional[float]
    mean_eps: Optional[float]
    std_eps: Optional[float]
    mean_iters: float
    std_iters: float
    fallbacks: int
    nonconverged: int
    errors: int


class ExperimentResponse(BaseModel):
    config_hash: str
    n_paths: int
    bias_denominator: str
    rows: list[EstimatorRowResponse]


class VnCurveRequest(BaseModel):
    n_values: list[int] = Field(min_length=1, max_length=500)


class VnCurveResponse(BaseModel):
    points: list[tuple[int, float]]
