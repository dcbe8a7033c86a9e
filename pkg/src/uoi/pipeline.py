"""Union-of-intersections regression: selection, estimation, orchestration.

Selection intersects bootstrap LASSO supports per penalty value, producing
a family of candidate supports.  Estimation refits each candidate by OLS on
fresh bootstrap splits, keeps the best per bootstrap by held-out loss, and
averages the winners.  Both phases run as independent seeded tasks over
bootstraps with ordered reductions, so results do not depend on worker
count or completion order.

The same machinery drives the multi-response (vector-autoregression) fit:
internally every routine works on a response matrix with C columns and
supports indexed in the stacked coefficient space of length C * p; the
plain regression case is C = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Optional, Sequence

import numpy as np

from .admm import (
    AdmmSettings,
    NormalFactorization,
    _iterate,
    _iterate_multi,
    ols_admm,
)
from .parallel import deterministic_blas, run_tasks
from .problem import RegressionProblem
from .resampling import (
    BootstrapPlan,
    Phase,
    derive_seed,
    row_bootstrap,
    train_eval_split,
)
from .timing import PhaseClock, TaskClock, TimingBreakdown

__all__ = [
    "LambdaGrid",
    "SupportFamily",
    "UoiFit",
    "lambda_grid",
    "intersect_supports",
    "select",
    "estimate",
    "fit_uoi_lasso",
    "ols_on_support",
    "eval_loss",
    "support_metrics",
]


@dataclass(frozen=True, eq=False)
class LambdaGrid:
    """Geometric penalty grid from lambda_max down to epsilon * lambda_max."""

    values: np.ndarray
    lambda_max: float
    epsilon: float

    @property
    def q(self) -> int:
        return self.values.shape[0]


@dataclass(eq=False)
class SupportFamily:
    """Per-penalty intersected supports, aligned with the penalty grid.

    nonconverged lists (bootstrap, penalty-index) pairs whose solve hit the
    iteration limit; their final-iterate supports are still used.
    """

    supports: list
    lambdas: np.ndarray
    nonconverged: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.supports)


@dataclass(eq=False)
class UoiFit:
    """Averaged estimate plus everything needed to audit how it was chosen."""

    beta_star: np.ndarray
    intercept: float
    support_family: SupportFamily
    chosen_lambda_idx: np.ndarray
    chosen_losses: np.ndarray
    chosen_supports: list
    timing: TimingBreakdown
    config: dict
    diagnostics: dict = field(default_factory=dict)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_star != 0.0)


def _geometric_values(lambda_max: float, q: int, epsilon: float) -> np.ndarray:
    if q < 1:
        raise ValueError("q must be at least 1")
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must be in (0, 1)")
    if q == 1:
        return np.array([lambda_max])
    steps = np.arange(q) / (q - 1)
    return lambda_max * epsilon**steps


def _lambda_max(X: np.ndarray, Ycols: np.ndarray) -> float:
    out = 0.0
    for c in range(Ycols.shape[1]):
        out = max(out, float(np.abs(X.T @ Ycols[:, c]).max()))
    return out


def lambda_grid(problem: RegressionProblem, q: int, epsilon: float = 0.01) -> LambdaGrid:
    """Build the penalty grid for a problem, topped at ||X'y||_inf."""
    lam_max = _lambda_max(problem.X, problem.y[:, None])
    if lam_max <= 0.0:
        raise ValueError("degenerate problem: ||X'y||_inf is zero")
    return LambdaGrid(_geometric_values(lam_max, q, epsilon), lam_max, epsilon)


def intersect_supports(supports: Sequence[np.ndarray]) -> np.ndarray:
    """Sorted intersection of index sets."""
    if len(supports) == 0:
        raise ValueError("need at least one support to intersect")
    normalized = [np.unique(np.asarray(s, dtype=np.int64)) for s in supports]
    return reduce(np.intersect1d, normalized)


def support_metrics(estimated, truth) -> dict:
    """False positives / negatives and precision / recall (0/0 counts as 1)."""
    est = np.unique(np.asarray(estimated, dtype=np.int64))
    tru = np.unique(np.asarray(truth, dtype=np.int64))
    tp = np.intersect1d(est, tru).size
    fp = est.size - tp
    fn = tru.size - tp
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return {
        "false_positives": int(fp),
        "false_negatives": int(fn),
        "precision": precision,
        "recall": recall,
    }


def eval_loss(
    problem: RegressionProblem,
    indices: np.ndarray,
    beta: np.ndarray,
    intercept: float = 0.0,
) -> float:
    """Mean squared prediction error on the given rows."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("evaluation set is empty")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (problem.p,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({problem.p},)")
    r = problem.y[idx] - (problem.X[idx] @ beta + intercept)
    return float(np.mean(r * r))


def ols_on_support(
    problem: RegressionProblem,
    support: np.ndarray,
    settings: Optional[AdmmSettings] = None,
) -> np.ndarray:
    """Least-squares refit restricted to the support columns.

    Returns a full-length coefficient vector, zero off the support; the
    empty support returns the zero vector.
    """
    sup = np.unique(np.asarray(support, dtype=np.int64))
    p = problem.p
    if sup.size and (sup[0] < 0 or sup[-1] >= p):
        raise ValueError("support indices out of range")
    beta = np.zeros(p)
    if sup.size == 0:
        return beta
    sub = RegressionProblem(problem.X[:, sup], problem.y)
    beta[sup] = ols_admm(sub, settings).beta
    return beta


# ---------------------------------------------------------------------------
# internal engine, shared with the vector-autoregression fit


def _center(X, Ycols, fit_intercept):
    if not fit_intercept:
        return X, Ycols, np.zeros(X.shape[1]), np.zeros(Ycols.shape[1])
    x_mean = X.mean(axis=0)
    y_mean = Ycols.mean(axis=0)
    return X - x_mean, Ycols - y_mean, x_mean, y_mean


def _path_states_multi(factorization, AtY, lambdas, settings):
    """Warm-started penalty path over all response columns at once.

    The factorization returned by each solve (refactored when adaptive rho
    fired) seeds the next one, so the adapted rho persists down the path.
    """
    p, C = AtY.shape
    X = np.zeros((p, C))
    Z = np.zeros((p, C))
    U = np.zeros((p, C))
    out = []
    for lam in lambdas:
        X, Z, U, it, conv, factorization = _iterate_multi(
            factorization, AtY, lam, settings, X, Z, U
        )
        out.append((Z.copy(), it, conv.copy()))
    return out


def _selection_task(X, Ycols, sampler, k, lambdas, settings, fit_intercept, zero_tol):
    clock = TaskClock()
    with clock.section("distribution"):
        idx = sampler(k)
        Xb = X[idx]
        Yb = Ycols[idx]
        Xc, Yc, _, _ = _center(Xb, Yb, fit_intercept)
    C = Ycols.shape[1]
    p_cols = X.shape[1]
    per_lambda = [[] for _ in lambdas]
    nonconv = set()
    with clock.section("computation"):
        fac = NormalFactorization(Xc, settings.rho)
        AtY = Xc.T @ Yc
        for j, (Z, _it, conv) in enumerate(
            _path_states_multi(fac, AtY, lambdas, settings)
        ):
            for c in range(C):
                nz = np.flatnonzero(np.abs(Z[:, c]) > zero_tol)
                if nz.size:
                    per_lambda[j].append(nz.astype(np.int64) + c * p_cols)
            if not conv.all():
                nonconv.add((k, j))
    supports = [
        np.concatenate(s) if s else np.empty(0, dtype=np.int64)
        for s in per_lambda
    ]
    return supports, sorted(nonconv), clock.times


def _select_engine(
    X, Ycols, lambdas, plan, settings, sampler, fit_intercept, workers, zero_tol, clock
):
    tasks = [
        (lambda k=k: _selection_task(
            X, Ycols, sampler, k, lambdas, settings, fit_intercept, zero_tol
        ))
        for k in range(plan.b1)
    ]
    results = run_tasks(tasks, workers)
    nonconverged = []
    for _, nc, times in results:
        nonconverged.extend(nc)
        clock.absorb(times)
    with clock.serial("reduction"):
        family = [
            reduce(np.intersect1d, [results[k][0][j] for k in range(plan.b1)])
            for j in range(len(lambdas))
        ]
    return family, sorted(nonconverged)


def _restricted_ols_gram(gram, aty, sup, settings, fac_cache):
    """OLS on a support via the cached Gram slice, using the zero-penalty
    ADMM iteration."""
    key = sup.tobytes()
    fac = fac_cache.get(key)
    if fac is None:
        fac = NormalFactorization.from_gram(gram[np.ix_(sup, sup)], settings.rho)
        fac_cache[key] = fac
    zeros = np.zeros(sup.size)
    _x, z, _u, _it, _r, _s, conv, _fac = _iterate(
        fac, aty[sup], 0.0, settings, zeros, zeros.copy(), zeros.copy()
    )
    return z, conv


def _estimation_task(X, Ycols, supports, splitter, k, settings, fit_intercept):
    clock = TaskClock()
    with clock.section("distribution"):
        tr_idx, ev_idx = splitter(k)
        Xtr = X[tr_idx]
        Ytr = Ycols[tr_idx]
        Xev = X[ev_idx]
        Yev = Ycols[ev_idx]
        Xc, Yc, xm, ym = _center(Xtr, Ytr, fit_intercept)
    p_cols = X.shape[1]
    C = Ycols.shape[1]
    q = len(supports)
    losses = np.empty(q)
    sizes = [s.size for s in supports]
    coef_blocks = []
    nonconv = set()
    with clock.section("computation"):
        gram = Xc.T @ Xc
        atys = [Xc.T @ Yc[:, c] for c in range(C)]
        fac_cache = {}
        sol_cache = {}
        for j, sup in enumerate(supports):
            B = np.zeros((p_cols, C))
            intercepts = np.zeros(C)
            for c in range(C):
                lo = np.searchsorted(sup, c * p_cols)
                hi = np.searchsorted(sup, (c + 1) * p_cols)
                sup_c = (sup[lo:hi] - c * p_cols).astype(np.int64)
                if sup_c.size:
                    skey = (c, sup_c.tobytes())
                    cached = sol_cache.get(skey)
                    if cached is None:
                        cached, conv = _restricted_ols_gram(
                            gram, atys[c], sup_c, settings, fac_cache
                        )
                        if not conv:
                            nonconv.add((k, j))
                        sol_cache[skey] = cached
                    B[sup_c, c] = cached
                if fit_intercept:
                    intercepts[c] = ym[c] - float(xm @ B[:, c])
            pred = Xev @ B + intercepts
            diff = Yev - pred
            losses[j] = float(np.mean(diff * diff))
            coef_blocks.append((B, intercepts))
    best = min(range(q), key=lambda j: (losses[j], sizes[j], j))
    B, intercepts = coef_blocks[best]
    width = p_cols + (1 if fit_intercept else 0)
    blocks = np.empty((C, width))
    blocks[:, :p_cols] = B.T
    if fit_intercept:
        blocks[:, p_cols] = intercepts
    beta_vec = blocks.reshape(-1)
    return beta_vec, float(losses[best]), best, sorted(nonconv), clock.times


def _estimate_engine(
    X, Ycols, supports, plan, settings, splitter, fit_intercept, workers, clock
):
    tasks = [
        (lambda k=k: _estimation_task(
            X, Ycols, supports, splitter, k, settings, fit_intercept
        ))
        for k in range(plan.b2)
    ]
    results = run_tasks(tasks, workers)
    nonconverged = []
    for _, _, _, nc, times in results:
        nonconverged.extend(nc)
        clock.absorb(times)
    with clock.serial("reduction"):
        acc = np.zeros_like(results[0][0])
        for beta_vec, _, _, _, _ in results:
            acc += beta_vec
        beta_star_vec = acc / plan.b2
    chosen_idx = np.array([r[2] for r in results], dtype=np.int64)
    chosen_losses = np.array([r[1] for r in results])
    chosen_supports = [supports[j] for j in chosen_idx]
    return beta_star_vec, chosen_idx, chosen_losses, chosen_supports, sorted(nonconverged)


def _row_sampler(n, plan):
    def sample(k):
        seed = derive_seed(plan.master_seed, Phase.SELECTION, k)
        return row_bootstrap(
            n, plan.subsample_fraction, seed, phase=Phase.SELECTION, k=k
        ).indices

    return sample


def _row_splitter(n, plan):
    def split(k):
        seed = derive_seed(plan.master_seed, Phase.ESTIMATION_TRAIN, k)
        tr, ev = train_eval_split(n, plan.eval_fraction, seed, k=k)
        return tr.indices, ev.indices

    return split


# ---------------------------------------------------------------------------
# public pipeline operations


def select(
    problem: RegressionProblem,
    grid: LambdaGrid,
    plan: BootstrapPlan,
    settings: Optional[AdmmSettings] = None,
    *,
    fit_intercept: bool = True,
    workers: int = 1,
    zero_tol: float = 1e-8,
) -> SupportFamily:
    """Model selection: intersect bootstrap LASSO supports per penalty.

    Each bootstrap solves the full decreasing penalty path with warm
    starts; supports are coefficients above zero_tol in magnitude.
    """
    settings = settings or AdmmSettings()
    Ycols = problem.y[:, None]
    clock = PhaseClock()
    with deterministic_blas():
        supports, nonconv = _select_engine(
            problem.X,
            Ycols,
            grid.values,
            plan,
            settings,
            _row_sampler(problem.n, plan),
            fit_intercept,
            workers,
            zero_tol,
            clock,
        )
    return SupportFamily(supports, grid.values.copy(), nonconv)


def estimate(
    problem: RegressionProblem,
    family: SupportFamily,
    plan: BootstrapPlan,
    settings: Optional[AdmmSettings] = None,
    *,
    fit_intercept: bool = True,
    workers: int = 1,
) -> UoiFit:
    """Model estimation: average the best per-bootstrap OLS refits.

    Every candidate support is refit on a fresh train/eval split; the
    lowest held-out loss wins (ties prefer the smaller support, then the
    smaller penalty index) and the winners are averaged in bootstrap order.
    """
    settings = settings or AdmmSettings()
    Ycols = problem.y[:, None]
    clock = PhaseClock()
    with deterministic_blas():
        beta_vec, chosen_idx, chosen_losses, chosen_supports, nonconv = (
            _estimate_engine(
                problem.X,
                Ycols,
                family.supports,
                plan,
                settings,
                _row_splitter(problem.n, plan),
                fit_intercept,
                workers,
                clock,
            )
        )
    timing = TimingBreakdown(estimation=clock.close())
    p = problem.p
    if fit_intercept:
        beta_star = beta_vec[:p].copy()
        intercept = float(beta_vec[p])
    else:
        beta_star = beta_vec.copy()
        intercept = 0.0
    return UoiFit(
        beta_star=beta_star,
        intercept=intercept,
        support_family=family,
        chosen_lambda_idx=chosen_idx,
        chosen_losses=chosen_losses,
        chosen_supports=chosen_supports,
        timing=timing,
        config=_config_echo(plan, len(family), None, fit_intercept, settings),
        diagnostics={"estimation_nonconverged": nonconv},
    )


def _config_echo(plan, q, epsilon, fit_intercept, settings, zero_tol=1e-8, extra=None):
    cfg = {
        "master_seed": plan.master_seed,
        "b1": plan.b1,
        "b2": plan.b2,
        "q": q,
        "epsilon": epsilon,
        "subsample_fraction": plan.subsample_fraction,
        "eval_fraction": plan.eval_fraction,
        "block_len": plan.block_len,
        "fit_intercept": fit_intercept,
        "zero_tol": zero_tol,
        "rho": settings.rho,
        "abs_tol": settings.abs_tol,
        "rel_tol": settings.rel_tol,
        "max_iter": settings.max_iter,
        "relaxation": settings.relaxation,
        "adaptive_rho": settings.adaptive_rho,
    }
    if extra:
        cfg.update(extra)
    return cfg


def fit_uoi_lasso(
    problem: RegressionProblem,
    plan: BootstrapPlan,
    q: int = 8,
    settings: Optional[AdmmSettings] = None,
    *,
    epsilon: float = 0.01,
    fit_intercept: bool = True,
    workers: int = 1,
    zero_tol: float = 1e-8,
) -> UoiFit:
    """Run selection then estimation with fresh randomization per phase.

    The result is a pure function of (data, configuration, master seed):
    worker count changes only the timing fields.
    """
    settings = settings or AdmmSettings()
    X = problem.X
    Ycols = problem.y[:, None]
    with deterministic_blas():
        sel_clock = PhaseClock()
        with sel_clock.serial("computation"):
            Xc, Yc, _, _ = _center(X, Ycols, fit_intercept)
            lam_max = _lambda_max(Xc, Yc)
            if lam_max <= 0.0:
                raise ValueError("degenerate problem: ||X'y||_inf is zero")
            lambdas = _geometric_values(lam_max, q, epsilon)
        supports, sel_nonconv = _select_engine(
            X, Ycols, lambdas, plan, settings,
            _row_sampler(problem.n, plan),
            fit_intercept, workers, zero_tol, sel_clock,
        )
        sel_timing = sel_clock.close()

        est_clock = PhaseClock()
        beta_vec, chosen_idx, chosen_losses, chosen_supports, est_nonconv = (
            _estimate_engine(
                X, Ycols, supports, plan, settings,
                _row_splitter(problem.n, plan),
                fit_intercept, workers, est_clock,
            )
        )
        est_timing = est_clock.close()

    family = SupportFamily(supports, lambdas, sel_nonconv)
    p = problem.p
    if fit_intercept:
        beta_star = beta_vec[:p].copy()
        intercept = float(beta_vec[p])
    else:
        beta_star = beta_vec.copy()
        intercept = 0.0
    return UoiFit(
        beta_star=beta_star,
        intercept=intercept,
        support_family=family,
        chosen_lambda_idx=chosen_idx,
        chosen_losses=chosen_losses,
        chosen_supports=chosen_supports,
        timing=TimingBreakdown(selection=sel_timing, estimation=est_timing),
        config=_config_echo(plan, q, epsilon, fit_intercept, settings, zero_tol),
        diagnostics={"estimation_nonconverged": est_nonconv},
    )
