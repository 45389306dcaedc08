"""FastAPI service wrapping the estimation library for multi-client use.

Scalar solvers and per-path estimation are cheap, stateless calls; the
experiment endpoint is intended for desk-scale runs (path counts are capped),
with the CLI remaining the tool for full table reproduction.
"""
from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..estimators import ESTIMATOR_ORDER, evaluate_estimator, tbv, trv
from ..harness import ExperimentConfig, run_experiment
from ..kernels import CmseProblem, FaJumpLaw
from ..models import (
    GaussStable,
    GaussVG,
    HestonJump,
    Merton,
    PathRecord,
    SamplingGrid,
    simulate,
)
from ..solvers import (
    NonFiniteError,
    NoSignChangeError,
    RootConfig,
    solve_levy_mse,
    solve_root_F,
    solve_vn,
    solve_wh,
)
from . import schemas as s


def _law(schema: s.JumpLawSchema) -> FaJumpLaw:
    return FaJumpLaw(schema.intensity, schema.jump_mean, schema.jump_std,
                     schema.density_at_zero)


def _model(schema) -> object:
    if schema.kind == "merton":
        return Merton(schema.sigma, _law(schema.jumps))
    if schema.kind == "heston_jump":
        return HestonJump(schema.mu, schema.kappa, schema.theta, schema.xi,
                          schema.rho, schema.v0, _law(schema.jumps), schema.substeps)
    if schema.kind == "gauss_vg":
        return GaussVG(schema.a_drift, schema.sigma, schema.sigma_jmp,
                       schema.theta_vg, schema.kappa_vg)
    return GaussStable(schema.sigma, schema.activity_index, schema.scale)


def _grid(schema: s.GridSchema) -> SamplingGrid:
    return SamplingGrid(schema.t_horizon, schema.n)


def _root_config(schema: s.RootBracketSchema | None) -> RootConfig | None:
    if schema is None:
        return None
    return RootConfig(schema.bracket_lo, schema.bracket_hi, schema.scan_points,
                      schema.rel_tol, schema.max_iter)


def _numeric_422(exc: Exception) -> HTTPException:
    kind = {"NoSignChangeError": "no_sign_change",
            "NonFiniteError": "non_finite"}.get(type(exc).__name__, "numeric_error")
    return HTTPException(status_code=422, detail={"error": kind, "message": str(exc)})


def create_app() -> FastAPI:
    app = FastAPI(title="truncvol", version=__version__,
                  description="Optimal-threshold selection for truncated realized variance")

    @app.get("/health", response_model=s.HealthResponse)
    def health() -> s.HealthResponse:
        return s.HealthResponse(status="ok", version=__version__)

    @app.post("/solve/vn", response_model=s.ScalarResponse)
    def vn(req: s.SolveVnRequest) -> s.ScalarResponse:
        return s.ScalarResponse(value=solve_vn(req.n))

    @app.post("/solve/wh", response_model=s.SolveWhResponse)
    def wh(req: s.SolveWhRequest) -> s.SolveWhResponse:
        return s.SolveWhResponse(w=solve_wh(req.h),
                                 sqrt_log_inv_h=math.sqrt(math.log(1.0 / req.h)))

    @app.post("/solve/root-f", response_model=s.ThresholdResponse)
    def root_f(req: s.SolveRootFRequest) -> s.ThresholdResponse:
        grid = _grid(req.grid)
        jumps = np.asarray(req.jumps) if req.jumps is not None else np.zeros(grid.n)
        try:
            problem = CmseProblem(req.sigma, jumps, grid)
            eps = solve_root_F(problem, _root_config(req.config))
        except (NoSignChangeError, NonFiniteError, ValueError) as exc:
            raise _numeric_422(exc) from exc
        return s.ThresholdResponse(threshold=eps)

    @app.post("/solve/levy-mse", response_model=s.ThresholdResponse)
    def levy(req: s.SolveLevyRequest) -> s.ThresholdResponse:
        try:
            eps = solve_levy_mse(req.sigma, _grid(req.grid), _law(req.law),
                                 _root_config(req.config))
        except (NoSignChangeError, NonFiniteError, ValueError) as exc:
            raise _numeric_422(exc) from exc
        return s.ThresholdResponse(threshold=eps)

    @app.post("/simulate", response_model=s.PathResponse)
    def simulate_path(req: s.SimulateRequest) -> s.PathResponse:
        path = simulate(_model(req.model), _grid(req.grid), req.seed)
        return s.PathResponse(
            dx=path.dx.tolist(), m=path.m.tolist(), dn=path.dn.tolist(),
            iv_i=path.iv_i.tolist(), iv_total=path.iv_total, seed=path.seed)

    @app.post("/estimate", response_model=s.EstimateResponse)
    def estimate(req: s.EstimateRequest) -> s.EstimateResponse:
        dx = np.asarray(req.dx, dtype=float)
        n = dx.size
        if n == 0:
            raise HTTPException(422, detail={"error": "empty_path"})
        grid = SamplingGrid(req.t_horizon, n)
        if req.estimator in ("trv", "tbv") and req.eps is not None:
            rep = trv(dx, req.eps) if req.estimator == "trv" else tbv(dx, req.eps)
        else:
            m = np.asarray(req.m, dtype=float) if req.m is not None else np.zeros(n)
            dn = (np.asarray(req.dn, dtype=np.int64) if req.dn is not None
                  else np.full(n, -1, dtype=np.int64))
            iv_i = (np.asarray(req.iv_i, dtype=float) if req.iv_i is not None
                    else np.full(n, max(np.sum(dx * dx) / n, 1e-300)))
            if req.estimator == "orc" and (req.m is None or req.iv_i is None):
                raise HTTPException(
                    422, detail={"error": "missing_ground_truth",
                                 "message": "oracle needs true m and iv_i"})
            path = PathRecord(dx, m, dn, iv_i, float(np.sum(iv_i)), 0)
            try:
                rep = evaluate_estimator(req.estimator, path, grid)
            except ValueError as exc:
                raise HTTPException(422, detail={"error": "bad_estimator",
                                                 "message": str(exc)}) from exc
        return s.EstimateResponse(
            iv_hat=rep.iv_hat, eps_final=rep.eps_final, iterations=rep.iterations,
            loss=rep.loss, kept=rep.kept, converged=rep.converged,
            solver_fallback=rep.solver_fallback)

    @app.post("/experiment", response_model=s.ExperimentResponse)
    def experiment(req: s.ExperimentRequest) -> s.ExperimentResponse:
        try:
            cfg = ExperimentConfig(
                model=_model(req.model), grid=_grid(req.grid),
                n_paths=req.n_paths, base_seed=req.base_seed,
                estimators=(tuple(req.estimators) if req.estimators
                            else ESTIMATOR_ORDER),
                bias_denominator=req.bias_denominator)
            summary = run_experiment(cfg, threads=req.threads)
        except ValueError as exc:
            raise HTTPException(422, detail={"error": "bad_config",
                                             "message": str(exc)}) from exc
        rows = [s.EstimatorRowResponse(**row.__dict__) for row in summary.rows]
        return s.ExperimentResponse(config_hash=summary.config_hash,
                                    n_paths=summary.n_paths,
                                    bias_denominator=summary.bias_denominator,
                                    rows=rows)

    @app.post("/vn-curve", response_model=s.VnCurveResponse)
    def vn_curve(req: s.VnCurveRequest) -> s.VnCurveResponse:
        try:
            points = [(n, solve_vn(n)) for n in req.n_values]
        except ValueError as exc:
            raise _numeric_422(exc) from exc
        return s.VnCurveResponse(points=points)

    return app


app = create_app()
