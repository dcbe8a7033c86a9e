"""L1-regularized least squares by ADMM, single-shard and consensus forms.

Solves  J(beta) = 1/2 ||y - X beta||^2 + lam ||beta||_1  by alternating an
x-minimization (a cached normal-equations solve), a z-minimization (soft
thresholding) and a scaled dual update.  Setting lam = 0 gives ordinary
least squares through the same iteration.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .problem import RegressionProblem

__all__ = [
    "AdmmSettings",
    "AdmmResult",
    "NormalFactorization",
    "soft_threshold",
    "objective",
    "kkt_violation",
    "lasso_admm",
    "lasso_path",
    "ols_admm",
    "consensus_lasso_admm",
]


@dataclass(frozen=True)
class AdmmSettings:
    """Hyperparameters of the ADMM iteration.

    rho is the starting augmented-Lagrangian penalty, relaxation the
    over-relaxation factor in [1, 2).  With adaptive_rho (the default),
    rho is doubled or halved whenever the primal and dual residuals differ
    by more than a factor of ten, rescaling the scaled dual variable to
    match; a fixed rho stalls badly when the Gram spectrum is far from
    rho, which is the norm for unscaled designs.
    """

    rho: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-5
    max_iter: int = 5000
    relaxation: float = 1.0
    adaptive_rho: bool = True

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (1.0 <= self.relaxation < 2.0):
            raise ValueError("relaxation must lie in [1, 2)")


@dataclass(eq=False)
class AdmmResult:
    """Terminal state of one solve.

    beta is the consensus iterate (exact zeros from thresholding).  When the
    iteration limit is hit without meeting the stopping rule, converged is
    False and beta holds the final iterate; callers decide what to do.
    """

    beta: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective: float
    # final (x, z, u, rho): warm_start material for a nearby lambda.  The
    # scaled dual u only means anything at its rho, hence the fourth entry.
    state: tuple = field(repr=False, default=None)


class NormalFactorization:
    """Cached Cholesky factorization for the ADMM x-update.

    Factors (X'X + rho I) when n >= p, or (X X'/rho + I) when n < p (the
    x-update then goes through the matrix-inversion lemma).  One instance is
    valid for every iteration of a solve and for warm-started solves at
    other penalty levels, as long as X and rho are unchanged.
    """

    def __init__(self, X: np.ndarray, rho: float):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.n, self.p = X.shape
        self.rho = float(rho)
        self.wide = self.n < self.p
        if self.wide:
            self._X = X
            self._outer = X @ X.T
            self._chol = cho_factor(
                self._outer / self.rho + np.eye(self.n), lower=True
            )
            self.gram = None
        else:
            self._X = X
            self.gram = X.T @ X
            self._chol = cho_factor(
                self.gram + self.rho * np.eye(self.p), lower=True
            )

    @classmethod
    def from_gram(cls, gram: np.ndarray, rho: float) -> "NormalFactorization":
        """Build from a precomputed Gram matrix X'X (always the tall form)."""
        out = object.__new__(cls)
        out.n = None
        out.p = gram.shape[0]
        out.rho = float(rho)
        out.wide = False
        out._X = None
        out.gram = gram
        out._chol = cho_factor(gram + out.rho * np.eye(out.p), lower=True)
        return out

    def solve(self, q: np.ndarray) -> np.ndarray:
        """Return (X'X + rho I)^{-1} q."""
        if self.wide:
            return q / self.rho - (
                self._X.T @ cho_solve(self._chol, self._X @ q)
            ) / self.rho**2
        return cho_solve(self._chol, q)

    def with_rho(self, rho: float) -> "NormalFactorization":
        """Refactor at a new rho, reusing the cached Gram/outer product."""
        out = object.__new__(NormalFactorization)
        out.n, out.p, out.wide = self.n, self.p, self.wide
        out.rho = float(rho)
        out._X = self._X
        if self.wide:
            out._outer = self._outer
            out._chol = cho_factor(
                self._outer / out.rho + np.eye(self.n), lower=True
            )
            out.gram = None
        else:
            out.gram = self.gram
            out._chol = cho_factor(
                self.gram + out.rho * np.eye(self.p), lower=True
            )
        return out


def soft_threshold(v: np.ndarray, kappa: float) -> np.ndarray:
    """Elementwise shrinkage sign(v) * max(|v| - kappa, 0)."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def objective(problem: RegressionProblem, lam: float, beta: np.ndarray) -> float:
    """Value of 1/2 ||y - X beta||^2 + lam ||beta||_1."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (problem.p,):
        raise ValueError(
            f"beta has shape {beta.shape}, expected ({problem.p},)"
        )
    r = problem.y - problem.X @ beta
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def kkt_violation(
    problem: RegressionProblem, lam: float, beta: np.ndarray
) -> float:
    """Largest violation of the stationarity conditions at beta.

    For active coordinates the correlation X'(y - X beta) must equal
    lam * sign(beta_i); for inactive ones it must stay within [-lam, lam].
    Checkable without any solver internals.
    """
    beta = np.asarray(beta, dtype=np.float64)
    g = problem.X.T @ (problem.y - problem.X @ beta)
    active = beta != 0
    viol_active = np.abs(g[active] - lam * np.sign(beta[active]))
    viol_inactive = np.maximum(np.abs(g[~active]) - lam, 0.0)
    worst = 0.0
    if viol_active.size:
        worst = float(viol_active.max())
    if viol_inactive.size:
        worst = max(worst, float(viol_inactive.max()))
    return worst


def _iterate(fac, Aty, lam, settings, x, z, u):
    """Run the ADMM loop from the given state.

    Returns the final state, iteration stats, and the factorization last
    used (rebuilt whenever the adaptive-rho rule fires), so a penalty path
    can carry the adapted rho forward instead of re-adapting from scratch.
    """
    p = Aty.shape[0]
    sqrt_p = np.sqrt(p)
    alpha = settings.relaxation
    rho = fac.rho
    # keep the factorizations well conditioned under adaptation
    rho_min = settings.rho * 1e-6
    rho_max = settings.rho * 1e6
    converged = False
    it = 0
    r_norm = s_norm = np.inf
    for it in range(1, settings.max_iter + 1):
        x = fac.solve(Aty + rho * (z - u))
        z_old = z
        x_hat = x if alpha == 1.0 else alpha * x + (1.0 - alpha) * z_old
        z = soft_threshold(x_hat + u, lam / rho)
        u = u + x_hat - z

        r_norm = float(np.linalg.norm(x - z))
        s_norm = float(rho * np.linalg.norm(z - z_old))
        eps_pri = sqrt_p * settings.abs_tol + settings.rel_tol * max(
            float(np.linalg.norm(x)), float(np.linalg.norm(z))
        )
        eps_dual = sqrt_p * settings.abs_tol + settings.rel_tol * rho * float(
            np.linalg.norm(u)
        )
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if settings.adaptive_rho:
            if r_norm > 10.0 * s_norm and rho < rho_max:
                rho *= 2.0
                u = u / 2.0
                fac = fac.with_rho(rho)
            elif s_norm > 10.0 * r_norm and rho > rho_min:
                rho /= 2.0
                u = u * 2.0
                fac = fac.with_rho(rho)
    return x, z, u, it, r_norm, s_norm, converged, fac


def _iterate_multi(fac, AtY, lam, settings, X, Z, U):
    """ADMM on C response columns at once, sharing one factorization.

    Iterates all columns to their own stopping thresholds (the x-update is
    a multi-RHS solve, so extra iterations on already-converged columns are
    nearly free); rho adapts on the aggregate residuals so the shared
    factorization stays valid.  Returns the per-column convergence mask.
    """
    p, C = AtY.shape
    sqrt_p = np.sqrt(p)
    alpha = settings.relaxation
    rho = fac.rho
    rho_min = settings.rho * 1e-6
    rho_max = settings.rho * 1e6
    converged = np.zeros(C, dtype=bool)
    it = 0
    for it in range(1, settings.max_iter + 1):
        X = fac.solve(AtY + rho * (Z - U))
        Z_old = Z
        X_hat = X if alpha == 1.0 else alpha * X + (1.0 - alpha) * Z_old
        Z = soft_threshold(X_hat + U, lam / rho)
        U = U + X_hat - Z

        r2 = ((X - Z) ** 2).sum(axis=0)
        s2 = rho * rho * ((Z - Z_old) ** 2).sum(axis=0)
        x2 = (X * X).sum(axis=0)
        z2 = (Z * Z).sum(axis=0)
        u2 = (U * U).sum(axis=0)
        eps_pri = sqrt_p * settings.abs_tol + settings.rel_tol * np.sqrt(
            np.maximum(x2, z2)
        )
        eps_dual = sqrt_p * settings.abs_tol + settings.rel_tol * rho * np.sqrt(u2)
        converged = (np.sqrt(r2) <= eps_pri) & (np.sqrt(s2) <= eps_dual)
        if converged.all():
            break
        if settings.adaptive_rho:
            r_all = float(np.sqrt(r2.sum()))
            s_all = float(np.sqrt(s2.sum()))
            if r_all > 10.0 * s_all and rho < rho_max:
                rho *= 2.0
                U = U / 2.0
                fac = fac.with_rho(rho)
            elif s_all > 10.0 * r_all and rho > rho_min:
                rho /= 2.0
                U = U * 2.0
                fac = fac.with_rho(rho)
    return X, Z, U, it, converged, fac


def _check_warm_start(warm_start, p, default_rho):
    if len(warm_start) == 4:
        x, z, u, rho = warm_start
    else:
        x, z, u = warm_start
        rho = default_rho
    for name, v in (("x", x), ("z", z), ("u", u)):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (p,):
            raise ValueError(
                f"warm_start {name} has shape {v.shape}, expected ({p},)"
            )
    if rho <= 0:
        raise ValueError("warm_start rho must be positive")
    return (
        np.asarray(x, dtype=np.float64).copy(),
        np.asarray(z, dtype=np.float64).copy(),
        np.asarray(u, dtype=np.float64).copy(),
        float(rho),
    )


def lasso_admm(
    problem: RegressionProblem,
    lam: float,
    settings: Optional[AdmmSettings] = None,
    warm_start: Optional[tuple] = None,
    factorization: Optional[NormalFactorization] = None,
) -> AdmmResult:
    """Solve the L1-penalized least-squares problem at penalty lam.

    warm_start is an (x, z, u[, rho]) tuple from a previous solve on the
    same problem (typically the neighbouring point of a penalty path, via
    AdmmResult.state); when rho is present the iteration resumes at it.  A
    prebuilt NormalFactorization for (problem.X, settings.rho) may be
    passed to share the factorization across solves.
    """
    settings = settings or AdmmSettings()
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    X, y = problem.X, problem.y
    p = problem.p
    if factorization is None:
        factorization = NormalFactorization(X, settings.rho)
    elif (factorization.n, factorization.p) != X.shape:
        raise ValueError("factorization was built for a different matrix")
    elif factorization.rho != settings.rho:
        raise ValueError("factorization rho does not match settings.rho")

    if warm_start is None:
        x = np.zeros(p)
        z = np.zeros(p)
        u = np.zeros(p)
    else:
        x, z, u, ws_rho = _check_warm_start(warm_start, p, settings.rho)
        if ws_rho != factorization.rho:
            factorization = factorization.with_rho(ws_rho)

    Aty = X.T @ y
    x, z, u, it, r_norm, s_norm, converged, fac = _iterate(
        factorization, Aty, lam, settings, x, z, u
    )
    return AdmmResult(
        beta=z.copy(),
        iterations=it,
        primal_residual=r_norm,
        dual_residual=s_norm,
        converged=converged,
        objective=objective(problem, lam, z),
        state=(x, z, u, fac.rho),
    )


def lasso_path(
    problem: RegressionProblem,
    lambdas: Sequence[float],
    settings: Optional[AdmmSettings] = None,
    factorization: Optional[NormalFactorization] = None,
) -> list[AdmmResult]:
    """Solve at each penalty in order, warm-starting from the previous one.

    The factorization is built once and shared; lambdas are expected in
    decreasing order so each warm start is nearby.
    """
    settings = settings or AdmmSettings()
    if factorization is None:
        factorization = NormalFactorization(problem.X, settings.rho)
    p = problem.p
    Aty = problem.X.T @ problem.y
    x = np.zeros(p)
    z = np.zeros(p)
    u = np.zeros(p)
    results = []
    for lam in lambdas:
        if lam < 0:
            raise ValueError("lambdas must be nonnegative")
        x, z, u, it, r_norm, s_norm, converged, factorization = _iterate(
            factorization, Aty, lam, settings, x, z, u
        )
        results.append(
            AdmmResult(
                beta=z.copy(),
                iterations=it,
                primal_residual=r_norm,
                dual_residual=s_norm,
                converged=converged,
                objective=objective(problem, lam, z),
                state=(x, z, u, factorization.rho),
            )
        )
    return results


def ols_admm(
    problem: RegressionProblem, settings: Optional[AdmmSettings] = None
) -> AdmmResult:
    """Ordinary least squares as the zero-penalty case of the same iteration.

    From a zero start the null-space component never moves, so on
    rank-deficient problems the fixed point is the minimum-norm solution.
    """
    return lasso_admm(problem, 0.0, settings)


def consensus_lasso_admm(
    shards: Sequence[RegressionProblem],
    lam: float,
    settings: Optional[AdmmSettings] = None,
    workers: int = 1,
) -> AdmmResult:
    """Solve the row-partitioned problem by global-consensus ADMM.

    Each shard minimizes its own least-squares term against a shared
    consensus variable z; the z-update averages the shard iterates in shard
    order (a deterministic reduction, so the result does not depend on
    workers) and soft-thresholds with lam / (rho K).  The solution matches
    the single-shard solve on the row-concatenation of the shards.
    """
    settings = settings or AdmmSettings()
    if len(shards) == 0:
        raise ValueError("shard list is empty")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    p = shards[0].p
    for i, s in enumerate(shards):
        if s.p != p:
            raise ValueError(
                f"shard {i} has {s.p} columns, expected {p}"
            )

    K = len(shards)
    rho = settings.rho
    alpha = settings.relaxation
    facs = [NormalFactorization(s.X, rho) for s in shards]
    Atys = [s.X.T @ s.y for s in shards]
    xs = [np.zeros(p) for _ in range(K)]
    us = [np.zeros(p) for _ in range(K)]
    z = np.zeros(p)
    sqrt_kp = np.sqrt(K * p)

    def x_update(k):
        return facs[k].solve(Atys[k] + rho * (z - us[k]))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        converged = False
        it = 0
        r_norm = s_norm = np.inf
        for it in range(1, settings.max_iter + 1):
            if pool is None:
                xs = [x_update(k) for k in range(K)]
            else:
                xs = list(pool.map(x_update, range(K)))
            z_old = z
            if alpha == 1.0:
                x_hats = xs
            else:
                x_hats = [alpha * x + (1.0 - alpha) * z_old for x in xs]
            # ordered reduction: sum in shard-index order
            w = np.zeros(p)
            for k in range(K):
                w += x_hats[k] + us[k]
            z = soft_threshold(w / K, lam / (rho * K))
            us = [us[k] + x_hats[k] - z for k in range(K)]

            r_norm = float(
                np.sqrt(sum(np.linalg.norm(x - z) ** 2 for x in xs))
            )
            s_norm = float(rho * np.sqrt(K) * np.linalg.norm(z - z_old))
            eps_pri = sqrt_kp * settings.abs_tol + settings.rel_tol * max(
                float(np.sqrt(sum(np.linalg.norm(x) ** 2 for x in xs))),
                float(np.sqrt(K) * np.linalg.norm(z)),
            )
            eps_dual = sqrt_kp * settings.abs_tol + settings.rel_tol * float(
                rho * np.sqrt(sum(np.linalg.norm(u) ** 2 for u in us))
            )
            if r_norm <= eps_pri and s_norm <= eps_dual:
                converged = True
                break
            if settings.adaptive_rho:
                if r_norm > 10.0 * s_norm and rho < settings.rho * 1e6:
                    rho *= 2.0
                    us = [u / 2.0 for u in us]
                    facs = [f.with_rho(rho) for f in facs]
                elif s_norm > 10.0 * r_norm and rho > settings.rho * 1e-6:
                    rho /= 2.0
                    us = [u * 2.0 for u in us]
                    facs = [f.with_rho(rho) for f in facs]
    finally:
        if pool is not None:
            pool.shutdown()

    obj = 0.5 * sum(
        float(np.sum((s.y - s.X @ z) ** 2)) for s in shards
    ) + lam * float(np.abs(z).sum())
    return AdmmResult(
        beta=z.copy(),
        iterations=it,
        primal_residual=r_norm,
        dual_residual=s_norm,
        converged=converged,
        objective=obj,
        state=None,
    )
