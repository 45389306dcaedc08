"""Command-line entry point wiring configs to the harness, solvers and estimators.

Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O failure.
Markdown goes to stdout; CSV is written to files only.  Seeds come from the
flags or the config, never from the clock.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import ESTIMATOR_ORDER, evaluate_estimator, tbv, trv
from .harness import (
    config_hash,
    dump_config,
    emit_table,
    emit_vn_curve,
    load_config,
    run_experiment,
)
from .kernels import CmseProblem, FaJumpLaw
from .models import SamplingGrid, path_from_csv, path_to_csv, simulate
from .solvers import (
    NonFiniteError,
    NoSignChangeError,
    solve_levy_mse,
    solve_root_F,
    solve_vn,
    solve_wh,
)

EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _fail(code: int, kind: str, message: str) -> CliError:
    return CliError(code, kind, message)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("TRUNCVOL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise _fail(EXIT_USAGE, "usage", f"TRUNCVOL_THREADS={env!r} is not an integer")
    return 1


def _load_cfg(path: str):
    try:
        return load_config(path)
    except OSError as exc:
        raise _fail(EXIT_IO, "io", f"cannot read config {path}: {exc}")
    except (ValueError, KeyError, TypeError) as exc:
        raise _fail(EXIT_USAGE, "usage", f"bad config {path}: {exc}")


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _fail(EXIT_IO, "io", f"cannot write {path}: {exc}")


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    seed = args.seed if args.seed is not None else cfg.base_seed
    path = simulate(cfg.model, cfg.grid, seed)
    _write_text(args.out, path_to_csv(path))
    print(f"wrote {args.out} (n={path.n}, seed={seed}, iv_total={path.iv_total:.17g})")
    return 0


def cmd_estimate(args) -> int:
    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        raise _fail(EXIT_IO, "io", f"cannot read path file {args.path}: {exc}")
    try:
        path = path_from_csv(text)
    except ValueError as exc:
        raise _fail(EXIT_USAGE, "usage", str(exc))

    eps = args.eps
    if args.estimator in ("trv", "tbv") and eps is not None:
        report = trv(path.dx, eps) if args.estimator == "trv" else tbv(path.dx, eps)
    else:
        if args.t_horizon is None:
            raise _fail(EXIT_USAGE, "usage",
                        f"estimator {args.estimator!r} needs --t-horizon")
        grid = SamplingGrid(args.t_horizon, path.n)
        try:
            report = evaluate_estimator(args.estimator, path, grid)
        except ValueError as exc:
            raise _fail(EXIT_USAGE, "usage", str(exc))
    print(f"estimator: {args.estimator}")
    print(f"iv_hat: {report.iv_hat:.17g}")
    print(f"eps_final: {'' if report.eps_final is None else format(report.eps_final, '.17g')}")
    print(f"iterations: {report.iterations}")
    print(f"loss: {'' if report.loss is None else report.loss}")
    print(f"kept: {report.kept}")
    print(f"converged: {report.converged}")
    if args.out:
        header = "estimator,iv_hat,eps_final,iterations,loss,kept,converged\r\n"
        row = ",".join([
            args.estimator, format(report.iv_hat, ".17g"),
            "" if report.eps_final is None else format(report.eps_final, ".17g"),
            str(report.iterations),
            "" if report.loss is None else str(report.loss),
            str(report.kept), str(report.converged).lower(),
        ])
        _write_text(args.out, header + row + "\r\n")
    return 0


def cmd_table(args) -> int:
    cfg = _load_cfg(args.config)
    fmt = args.format or cfg.output_format
    summary = run_experiment(cfg, threads=_threads(args),
                             n_paths=args.paths, base_seed=args.seed)
    text = emit_table(summary, fmt)
    if fmt == "markdown":
        print(text, end="")
    else:
        out = args.out or cfg.output_path
        if not out:
            raise _fail(EXIT_USAGE, "usage", "CSV output needs --out or output.path in config")
        _write_text(out, text)
        print(f"wrote {out} (config {summary.config_hash}, n_paths={summary.n_paths})")
    return 0


def cmd_solve(args) -> int:
    try:
        if args.solver == "vn":
            print(f"{solve_vn(args.n):.12g}")
        elif args.solver == "wh":
            print(f"{solve_wh(args.h):.12g}")
        elif args.solver == "root-f":
            grid = SamplingGrid(args.t_horizon, args.n)
            if args.jumps_csv:
                try:
                    jumps = path_from_csv(Path(args.jumps_csv).read_text()).m
                except OSError as exc:
                    raise _fail(EXIT_IO, "io", str(exc))
            elif args.jumps:
                jumps = np.array([float(x) for x in args.jumps.split(",")])
            else:
                jumps = np.zeros(grid.n)
            if jumps.size != grid.n:
                raise _fail(EXIT_USAGE, "usage",
                            f"got {jumps.size} jumps for n={grid.n}")
            print(f"{solve_root_F(CmseProblem(args.sigma, jumps, grid)):.12g}")
        elif args.solver == "levy":
            grid = SamplingGrid(args.t_horizon, args.n)
            law = FaJumpLaw(args.intensity, args.jump_mean, args.jump_std)
            print(f"{solve_levy_mse(args.sigma, grid, law):.12g}")
        else:  # pragma: no cover - argparse restricts choices
            raise _fail(EXIT_USAGE, "usage", f"unknown solver {args.solver!r}")
    except (NoSignChangeError, NonFiniteError) as exc:
        raise _fail(EXIT_NUMERIC, type(exc).__name__, str(exc))
    except (ValueError, OverflowError) as exc:
        raise _fail(EXIT_NUMERIC, "numeric", str(exc))
    return 0


def cmd_vn_curve(args) -> int:
    n_values = np.unique(np.geomspace(args.n_min, args.n_max, args.points).astype(int))
    text = emit_vn_curve(n_values)
    _write_text(args.out, text)
    print(f"wrote {args.out} ({len(n_values)} points)")
    return 0


def cmd_config_hash(args) -> int:
    cfg = _load_cfg(args.config)
    print(config_hash(cfg))
    return 0


def cmd_config_dump(args) -> int:
    cfg = _load_cfg(args.config)
    print(dump_config(cfg), end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="truncvol",
        description="Optimal-threshold truncated realized variance toolkit")
    parser.add_argument("--version", action="version", version=f"truncvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one path and write its CSV record")
    p.add_argument("--config", required=True, help="experiment config (model + grid)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("estimate", help="run one estimator on a saved path CSV")
    p.add_argument("--path", required=True, help="path CSV produced by simulate")
    p.add_argument("--estimator", required=True,
                   help=f"one of {', '.join(ESTIMATOR_ORDER)} (or trv/tbv with --eps)")
    p.add_argument("--eps", type=float, default=None, help="fixed threshold for trv/tbv")
    p.add_argument("--t-horizon", type=float, default=None, dest="t_horizon",
                   help="time horizon of the path (needed by threshold rules)")
    p.add_argument("--out", default=None, help="optional CSV output")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("table", help="run a Monte Carlo experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output CSV (default: config output.path)")
    p.add_argument("--seed", type=int, default=None, help="override config base_seed")
    p.add_argument("--paths", type=int, default=None, help="override config n_paths")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (TRUNCVOL_THREADS as fallback; results identical)")
    p.add_argument("--format", choices=("csv", "markdown"), default=None)
    p.set_defaults(fn=cmd_table)

    p = sub.add_parser("solve", help="scalar threshold solvers")
    solver_sub = p.add_subparsers(dest="solver", required=True)

    q = solver_sub.add_parser("vn", help="dimensionless no-jump root v_n")
    q.add_argument("--n", type=int, required=True)
    q.set_defaults(fn=cmd_solve)

    q = solver_sub.add_parser("wh", help="refined modulus factor w_h")
    q.add_argument("--h", type=float, required=True)
    q.set_defaults(fn=cmd_solve)

    q = solver_sub.add_parser("root-f", help="root of the conditional-MSE kernel F")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--t-horizon", type=float, required=True, dest="t_horizon")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--jumps", default=None, help="comma-separated jump increments")
    q.add_argument("--jumps-csv", default=None, help="path CSV to take the m column from")
    q.set_defaults(fn=cmd_solve)

    q = solver_sub.add_parser("levy", help="root of the Levy MSE equation")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--t-horizon", type=float, required=True, dest="t_horizon")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--intensity", type=float, required=True)
    q.add_argument("--jump-mean", type=float, default=0.0, dest="jump_mean")
    q.add_argument("--jump-std", type=float, default=1.0, dest="jump_std")
    q.set_defaults(fn=cmd_solve)

    p = sub.add_parser("vn-curve", help="CSV of v_n over a grid of n")
    p.add_argument("--n-min", type=int, default=100, dest="n_min")
    p.add_argument("--n-max", type=int, default=10000, dest="n_max")
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_vn_curve)

    p = sub.add_parser("config-hash", help="print the digest of a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_config_hash)

    p = sub.add_parser("config-dump", help="re-serialize a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_config_dump)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"truncvol: error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except (NoSignChangeError, NonFiniteError) as exc:
        print(f"truncvol: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"truncvol: error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"truncvol: error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
