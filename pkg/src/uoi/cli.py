"""Command-line front end: data generation, fitting, metrics, scaling bench.

Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage
error.  Any fit invoked here is bit-reproducible from the configuration
echoed into its output file; only the timing section varies run to run.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmSettings
from .data_io import (
    GroundTruth,
    generate_regression,
    read_fit,
    read_matrix,
    read_truth,
    write_fit,
    write_matrix,
    write_truth,
)
from .pipeline import UoiFit, fit_uoi_lasso, support_metrics
from .problem import RegressionProblem
from .resampling import BootstrapPlan
from .var import VarFit, VarSpec, fit_uoi_var, generate_stable_var, simulate_var

REPORT_HEADER = (
    "mode,size_rows,size_cols,threads,phase,computation_s,reduction_s,"
    "distribution_s,data_io_s,total_s,speedup,efficiency"
)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _fraction(text):
    v = float(text)
    if not (0.0 < v < 1.0):
        raise argparse.ArgumentTypeError("must be in (0, 1)")
    return v


def _matrix_ext(fmt):
    return ".bin" if fmt == "binary" else ".txt"


def _add_solver_args(sp):
    g = sp.add_argument_group("solver")
    g.add_argument("--rho", type=float, default=1.0, help="ADMM penalty parameter")
    g.add_argument("--abs-tol", type=float, default=1e-6)
    g.add_argument("--rel-tol", type=float, default=1e-5)
    g.add_argument("--max-iter", type=_positive_int, default=5000)


def _settings_from(args):
    return AdmmSettings(
        rho=args.rho,
        abs_tol=args.abs_tol,
        rel_tol=args.rel_tol,
        max_iter=args.max_iter,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uoi",
        description="Union-of-intersections sparse regression and VAR fitting",
    )
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser(
        "generate-regression", help="synthesize a sparse regression dataset"
    )
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--k", type=_positive_int, required=True, help="true nonzeros")
    sp.add_argument("--sigma", type=float, default=0.1, help="noise std dev")
    sp.add_argument("--beta-scale", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.add_argument("-o", "--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_generate_regression)

    sp = sub.add_parser("generate-var", help="synthesize a stable VAR series")
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--order", "-d", type=_positive_int, default=1)
    sp.add_argument("--nnz", type=int, default=3, help="nonzeros per matrix row")
    sp.add_argument("--radius", type=float, default=0.9, help="companion spectral radius")
    sp.add_argument("--sigma", type=float, default=1.0, help="noise std dev")
    sp.add_argument("--mu-scale", type=float, default=0.0,
                    help="intercepts drawn uniform in [-s, s]")
    sp.add_argument("--n", type=_positive_int, required=True, help="series length")
    sp.add_argument("--burn-in", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.add_argument("-o", "--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_generate_var)

    sp = sub.add_parser("fit-lasso", help="union-of-intersections sparse regression")
    sp.add_argument("--x", required=True, help="design matrix file")
    sp.add_argument("--y", required=True, help="response file (n x 1)")
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.add_argument("--b1", type=_positive_int, default=5)
    sp.add_argument("--b2", type=_positive_int, default=5)
    sp.add_argument("--q", type=_positive_int, default=8)
    sp.add_argument("--lambda-min-ratio", type=_fraction, default=0.01)
    sp.add_argument("--subsample-fraction", type=float, default=0.8)
    sp.add_argument("--eval-fraction", type=_fraction, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=_positive_int, default=1)
    sp.add_argument("--no-intercept", action="store_true")
    _add_solver_args(sp)
    sp.add_argument("-o", "--out", required=True, help="fit output path")
    sp.set_defaults(func=cmd_fit_lasso)

    sp = sub.add_parser("fit-var", help="union-of-intersections VAR fit")
    sp.add_argument("--series", required=True, help="series file (N x p)")
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.add_argument("--order", "-d", type=_positive_int, default=1)
    sp.add_argument("--block-len", type=_positive_int, default=None,
                    help="bootstrap block length (default: ceil(sqrt(rows)))")
    sp.add_argument("--b1", type=_positive_int, default=30)
    sp.add_argument("--b2", type=_positive_int, default=20)
    sp.add_argument("--q", type=_positive_int, default=20)
    sp.add_argument("--lambda-min-ratio", type=_fraction, default=0.01)
    sp.add_argument("--subsample-fraction", type=float, default=0.8)
    sp.add_argument("--eval-fraction", type=_fraction, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=_positive_int, default=1)
    sp.add_argument("--no-intercept", action="store_true")
    _add_solver_args(sp)
    sp.add_argument("-o", "--out", required=True, help="fit output path")
    sp.set_defaults(func=cmd_fit_var)

    sp = sub.add_parser("metrics", help="score a fit against ground truth")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--x", default=None, help="held-out design matrix (regression)")
    sp.add_argument("--y", default=None, help="held-out response (regression)")
    sp.add_argument("--series", default=None, help="held-out series (VAR)")
    sp.add_argument("--format", choices=["binary", "text"], default="binary")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("bench", help="thread-scaling benchmark (regression fit)")
    sp.add_argument("--mode", choices=["strong", "weak", "splits"], default="strong")
    sp.add_argument("--threads", default="1,2,4,8",
                    help="comma-separated worker counts (strong/weak)")
    sp.add_argument("--splits", default="16x2,8x4,4x8,2x16",
                    help="comma-separated PBxPL pool shapes (splits mode)")
    sp.add_argument("--n", type=_positive_int, default=10000,
                    help="rows (per-thread rows in weak mode)")
    sp.add_argument("--p", type=_positive_int, default=100)
    sp.add_argument("--k", type=_positive_int, default=10)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--b1", type=_positive_int, default=20)
    sp.add_argument("--b2", type=_positive_int, default=5)
    sp.add_argument("--q", type=_positive_int, default=20)
    sp.add_argument("--lambda-min-ratio", type=_fraction, default=0.01)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--out", required=True, help="report path (CSV, appended)")
    sp.set_defaults(func=cmd_bench)

    return parser


def cmd_generate_regression(args) -> int:
    problem, truth = generate_regression(
        args.n, args.p, args.k, args.sigma, args.beta_scale, args.seed
    )
    os.makedirs(args.out, exist_ok=True)
    ext = _matrix_ext(args.format)
    x_path = os.path.join(args.out, "X" + ext)
    y_path = os.path.join(args.out, "y" + ext)
    t_path = os.path.join(args.out, "truth.json")
    write_matrix(problem.X, x_path, args.format)
    write_matrix(problem.y[:, None], y_path, args.format)
    write_truth(truth, t_path)
    print(f"wrote {x_path}, {y_path}, {t_path}")
    return 0


def cmd_generate_var(args) -> int:
    spec = generate_stable_var(args.p, args.order, args.nnz, args.radius, args.seed)
    sigma = spec.sigma * args.sigma**2
    mu = spec.mu
    if args.mu_scale != 0.0:
        rng = np.random.default_rng(np.uint64(args.seed) ^ np.uint64(0xA5A5A5A5))
        mu = rng.uniform(-args.mu_scale, args.mu_scale, size=args.p)
    spec = VarSpec(A=spec.A, mu=mu, sigma=sigma)
    series = simulate_var(spec, args.n, args.burn_in, args.seed)
    os.makedirs(args.out, exist_ok=True)
    ext = _matrix_ext(args.format)
    s_path = os.path.join(args.out, "series" + ext)
    t_path = os.path.join(args.out, "truth.json")
    write_matrix(series, s_path, args.format)
    write_truth(spec, t_path)
    print(f"wrote {s_path}, {t_path}")
    return 0


def cmd_fit_lasso(args) -> int:
    t0 = time.perf_counter()
    X = read_matrix(args.x, args.format)
    y = read_matrix(args.y, args.format)
    io_s = time.perf_counter() - t0
    if y.shape[1] != 1:
        raise ValueError(f"response file must have one column, got {y.shape[1]}")
    problem = RegressionProblem(X, y[:, 0])
    plan = BootstrapPlan(
        master_seed=args.seed,
        b1=args.b1,
        b2=args.b2,
        subsample_fraction=args.subsample_fraction,
        eval_fraction=args.eval_fraction,
    )
    fit = fit_uoi_lasso(
        problem,
        plan,
        q=args.q,
        settings=_settings_from(args),
        epsilon=args.lambda_min_ratio,
        fit_intercept=not args.no_intercept,
        workers=args.threads,
    )
    fit.timing.selection.data_io_s += io_s
    fit.timing.selection.total_s += io_s
    write_fit(fit, args.out)
    print(
        f"wrote {args.out}: support size {fit.support().size} of {problem.p}, "
        f"mean chosen loss {float(fit.chosen_losses.mean()):.6g}"
    )
    return 0


def cmd_fit_var(args) -> int:
    t0 = time.perf_counter()
    series = read_matrix(args.series, args.format)
    io_s = time.perf_counter() - t0
    plan = BootstrapPlan(
        master_seed=args.seed,
        b1=args.b1,
        b2=args.b2,
        subsample_fraction=args.subsample_fraction,
        eval_fraction=args.eval_fraction,
        block_len=args.block_len,
    )
    fit = fit_uoi_var(
        series,
        args.order,
        plan,
        q=args.q,
        settings=_settings_from(args),
        epsilon=args.lambda_min_ratio,
        fit_intercept=not args.no_intercept,
        workers=args.threads,
    )
    fit.timing.selection.data_io_s += io_s
    fit.timing.selection.total_s += io_s
    write_fit(fit, args.out)
    print(
        f"wrote {args.out}: estimated spectral radius {fit.spectral_radius:.4f} "
        f"({'stable' if fit.stable else 'unstable'})"
    )
    return 0


def _analytic_r2(beta_true, noise_sigma, beta_hat, intercept):
    signal = float(beta_true @ beta_true)
    err = float((beta_hat - beta_true) @ (beta_hat - beta_true)) + intercept**2
    denom = signal + noise_sigma**2
    if denom == 0.0:
        return 1.0 if err == 0.0 else -np.inf
    return 1.0 - (noise_sigma**2 + err) / denom


def _empirical_r2(y, pred):
    resid = y - pred
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if np.allclose(resid, 0) else -np.inf
    return 1.0 - float(resid @ resid) / sst


def cmd_metrics(args) -> int:
    fit = read_fit(args.fit)
    truth = read_truth(args.truth)
    lines = []
    if isinstance(fit, UoiFit):
        if not isinstance(truth, GroundTruth):
            raise ValueError("regression fit paired with non-regression truth")
        if fit.beta_star.shape != truth.beta_true.shape:
            raise ValueError(
                f"fit has {fit.beta_star.shape[0]} coefficients, truth has "
                f"{truth.beta_true.shape[0]}"
            )
        m = support_metrics(fit.support(), truth.support_true)
        denom = float(np.linalg.norm(truth.beta_true))
        rel = float(np.linalg.norm(fit.beta_star - truth.beta_true))
        rel = rel / denom if denom > 0 else rel
        if args.x and args.y:
            X = read_matrix(args.x, args.format)
            y = read_matrix(args.y, args.format)[:, 0]
            r2 = _empirical_r2(y, X @ fit.beta_star + fit.intercept)
            r2_kind = "empirical"
        else:
            r2 = _analytic_r2(
                truth.beta_true, truth.noise_sigma, fit.beta_star, fit.intercept
            )
            r2_kind = "analytic"
        lines += [
            f"false_positives = {m['false_positives']}",
            f"false_negatives = {m['false_negatives']}",
            f"precision = {m['precision']:.6f}",
            f"recall = {m['recall']:.6f}",
            f"relative_l2_error = {rel:.6e}",
            f"r2_{r2_kind} = {r2:.6f}",
        ]
    elif isinstance(fit, VarFit):
        if not isinstance(truth, VarSpec):
            raise ValueError("VAR fit paired with non-VAR truth")
        if fit.A_hat.shape != truth.A.shape:
            raise ValueError(
                f"fit lag matrices have shape {fit.A_hat.shape}, truth has "
                f"{truth.A.shape}"
            )
        est_sup = np.flatnonzero(fit.A_hat.ravel() != 0.0)
        true_sup = np.flatnonzero(truth.A.ravel() != 0.0)
        m = support_metrics(est_sup, true_sup)
        denom = float(np.linalg.norm(truth.A.ravel()))
        rel = float(np.linalg.norm((fit.A_hat - truth.A).ravel()))
        rel = rel / denom if denom > 0 else rel
        lines += [
            f"false_positives = {m['false_positives']}",
            f"false_negatives = {m['false_negatives']}",
            f"precision = {m['precision']:.6f}",
            f"recall = {m['recall']:.6f}",
            f"relative_l2_error = {rel:.6e}",
            f"max_abs_coeff_error = {float(np.abs(fit.A_hat - truth.A).max()):.6e}",
            f"spectral_radius = {fit.spectral_radius:.6f}",
            f"stable = {fit.stable}",
        ]
        if args.series:
            series = read_matrix(args.series, args.format)
            from .var import build_var_design

            design = build_var_design(series, fit.A_hat.shape[0])
            B = fit.A_hat.transpose(0, 2, 1).reshape(-1, design.p)
            pred = design.X @ B + fit.mu_hat
            resid = design.Y - pred
            sst = float(np.sum((design.Y - design.Y.mean(axis=0)) ** 2))
            r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
            lines.append(f"r2_one_step = {r2:.6f}")
    else:
        raise ValueError(f"unrecognized fit type {type(fit)!r}")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# scaling benchmark


@dataclass
class BenchConfig:
    """One benchmark campaign: problem shape, pool shapes, fit parameters."""

    mode: str
    out: str
    threads: list = field(default_factory=lambda: [1, 2, 4, 8])
    splits: list = field(default_factory=list)  # (pb, pl) pairs, splits mode
    n: int = 10000
    p: int = 100
    k_nonzero: int = 10
    sigma: float = 1.0
    b1: int = 20
    b2: int = 5
    q: int = 20
    epsilon: float = 0.01
    seed: int = 0


def _report_rows(label, rows, cols, threads, fit, baseline):
    """Render selection / estimation / total rows with speedup columns."""
    t = fit.timing
    phases = [
        ("selection", t.selection),
        ("estimation", t.estimation),
    ]
    totals = {
        "computation_s": t.selection.computation_s + t.estimation.computation_s,
        "reduction_s": t.selection.reduction_s + t.estimation.reduction_s,
        "distribution_s": t.selection.distribution_s + t.estimation.distribution_s,
        "data_io_s": t.selection.data_io_s + t.estimation.data_io_s,
        "total_s": t.selection.total_s + t.estimation.total_s,
    }
    out = []
    for phase, pt in phases + [("total", None)]:
        vals = totals if pt is None else {
            "computation_s": pt.computation_s,
            "reduction_s": pt.reduction_s,
            "distribution_s": pt.distribution_s,
            "data_io_s": pt.data_io_s,
            "total_s": pt.total_s,
        }
        base = baseline.get(phase)
        speedup = base / vals["total_s"] if base and vals["total_s"] > 0 else 1.0
        efficiency = speedup / threads
        if baseline.get("_weak"):
            efficiency = speedup  # weak efficiency: T1 / Tk at matched per-thread work
        out.append(
            f"{label},{rows},{cols},{threads},{phase},"
            f"{vals['computation_s']:.6f},{vals['reduction_s']:.6f},"
            f"{vals['distribution_s']:.6f},{vals['data_io_s']:.6f},"
            f"{vals['total_s']:.6f},{speedup:.4f},{efficiency:.4f}"
        )
    return out


def bench_scaling(config: BenchConfig) -> list[str]:
    """Run the campaign and append plot-ready rows to the report file.

    Strong mode fixes the problem and sweeps worker counts; weak mode grows
    rows proportionally to workers; splits mode runs PB x PL pool shapes at
    the same problem size.  A run that exhausts memory is recorded as a
    skipped row and the campaign continues.
    """
    runs = []
    if config.mode == "strong":
        runs = [("strong", config.n, t, t) for t in config.threads]
    elif config.mode == "weak":
        runs = [("weak", config.n * t, t, t) for t in config.threads]
    elif config.mode == "splits":
        runs = [
            (f"splits-{pb}x{pl}", config.n, pb * pl, pb * pl)
            for pb, pl in config.splits
        ]
    else:
        raise ValueError(f"unknown bench mode {config.mode!r}")

    lines = []
    baseline = {}
    weak = config.mode == "weak"
    for label, rows, threads, workers in runs:
        try:
            problem, _ = generate_regression(
                rows, config.p, config.k_nonzero, config.sigma, 1.0, config.seed
            )
            plan = BootstrapPlan(
                master_seed=config.seed, b1=config.b1, b2=config.b2
            )
            fit = fit_uoi_lasso(
                problem, plan, q=config.q, epsilon=config.epsilon, workers=workers
            )
        except MemoryError:
            lines.append(
                f"{label},{rows},{config.p},{threads},skipped,"
                f"0,0,0,0,0,0,0"
            )
            continue
        t = fit.timing
        if not baseline:
            baseline = {
                "selection": t.selection.total_s,
                "estimation": t.estimation.total_s,
                "total": t.selection.total_s + t.estimation.total_s,
                "_weak": weak,
            }
        lines.extend(_report_rows(label, rows, config.p, threads, fit, baseline))

    new_file = not (os.path.exists(config.out) and os.path.getsize(config.out) > 0)
    with open(config.out, "a") as fh:
        if new_file:
            fh.write(f"# host={platform.node()} cores={os.cpu_count()} ")
            fh.write(f"machine={platform.machine()} python={platform.python_version()} ")
            fh.write(f"numpy={np.__version__}\n")
            fh.write("# times in seconds; speedup/efficiency vs the first run; ")
            fh.write("category columns are wall-clock shares per phase\n")
            fh.write(REPORT_HEADER + "\n")
        for line in lines:
            fh.write(line + "\n")
    return lines


def cmd_bench(args) -> int:
    threads = [int(t) for t in args.threads.split(",") if t]
    splits = []
    if args.mode == "splits":
        for part in args.splits.split(","):
            pb, _, pl = part.partition("x")
            splits.append((int(pb), int(pl)))
    config = BenchConfig(
        mode=args.mode,
        out=args.out,
        threads=threads,
        splits=splits,
        n=args.n,
        p=args.p,
        k_nonzero=args.k,
        sigma=args.sigma,
        b1=args.b1,
        b2=args.b2,
        q=args.q,
        epsilon=args.lambda_min_ratio,
        seed=args.seed,
    )
    lines = bench_scaling(config)
    print(f"appended {len(lines)} rows to {config.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as e:  # CLI contract: message, never a bare traceback
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
