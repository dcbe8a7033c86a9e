"""Sparse vector autoregression: simulation, lagged design, and the fit.

A VAR(d) series is rewritten as a multivariate least-squares problem with
lagged regressors; stacking the response columns gives a block-diagonal
system that decomposes into p independent column regressions sharing one
regressor matrix.  The fit runs the union-of-intersections pipeline over
those columns with block-bootstrap resampling so draws respect temporal
dependence, then folds the stacked coefficients back into lag matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .admm import AdmmSettings
from .parallel import deterministic_blas
from .pipeline import (
    SupportFamily,
    _center,
    _config_echo,
    _estimate_engine,
    _geometric_values,
    _lambda_max,
    _select_engine,
)
from .problem import RegressionProblem
from .resampling import (
    BootstrapPlan,
    Phase,
    auto_block_len,
    block_bootstrap,
    block_train_eval_split,
    derive_seed,
)
from .timing import PhaseClock, TimingBreakdown

__all__ = [
    "VarSpec",
    "VarDesign",
    "VarFit",
    "StabilityCheck",
    "companion_matrix",
    "check_stability",
    "simulate_var",
    "build_var_design",
    "vectorized_problem",
    "generate_stable_var",
    "partition_coefficients",
    "flatten_coefficients",
    "fit_uoi_var",
]


def companion_matrix(A) -> np.ndarray:
    """Companion form of the lag matrices: top block row [A_1 ... A_d],
    identity blocks on the subdiagonal, zeros elsewhere."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 2:
        A = A[None, :, :]
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ValueError("expected d square lag matrices of equal size")
    d, p, _ = A.shape
    if d < 1:
        raise ValueError("need at least one lag matrix")
    top = np.concatenate(list(A), axis=1)
    if d == 1:
        return top.copy()
    lower = np.hstack([np.eye(p * (d - 1)), np.zeros((p * (d - 1), p))])
    return np.vstack([top, lower])


@dataclass(frozen=True)
class StabilityCheck:
    spectral_radius: float
    stable: bool


def check_stability(A) -> StabilityCheck:
    """Spectral radius of the companion matrix; stable iff it is below 1."""
    radius = float(np.abs(np.linalg.eigvals(companion_matrix(A))).max())
    return StabilityCheck(spectral_radius=radius, stable=radius < 1.0)


@dataclass(frozen=True, eq=False)
class VarSpec:
    """A stable VAR(d) process: lag matrices, intercept, noise covariance."""

    A: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim == 2:
            A = A[None, :, :]
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must be d square matrices of equal size")
        p = A.shape[1]
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != (p,):
            raise ValueError(f"mu has shape {mu.shape}, expected ({p},)")
        if sigma.shape != (p, p):
            raise ValueError(f"sigma has shape {sigma.shape}, expected ({p}, {p})")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("sigma must be positive definite") from None
        chk = check_stability(A)
        if not chk.stable:
            raise ValueError(
                f"unstable process: companion spectral radius "
                f"{chk.spectral_radius:.6f} >= 1"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[0]


def simulate_var(
    spec: VarSpec, N: int, burn_in: int = 0, seed: int = 0
) -> np.ndarray:
    """Simulate N observations of the process after discarding burn_in.

    The recursion starts from the zero state, so with burn_in = 0 the first
    rows carry the transient toward the stationary regime.
    """
    if N <= spec.d:
        raise ValueError("N must exceed the order d")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    p, d = spec.p, spec.d
    rng = np.random.default_rng(seed)
    steps = burn_in + N
    chol = np.linalg.cholesky(spec.sigma)
    eps = rng.standard_normal((steps, p)) @ chol.T
    buf = np.zeros((d + steps, p))
    A = spec.A
    for t in range(steps):
        acc = spec.mu + eps[t]
        for j in range(d):
            acc = acc + A[j] @ buf[d + t - 1 - j]
        buf[d + t] = acc
    return buf[d + burn_in :].copy()


@dataclass(frozen=True, eq=False)
class VarDesign:
    """Lagged least-squares layout of a series.

    Row r of Y is the observation at time N - r (newest first); the same
    row of X holds the d preceding observations, newest lag first.
    """

    Y: np.ndarray
    X: np.ndarray
    N: int
    d: int
    p: int


def build_var_design(series: np.ndarray, d: int) -> VarDesign:
    """Arrange a series into the (N-d) x p response and (N-d) x (dp)
    lagged-regressor matrices."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise ValueError("series must be 2-D (time by dimension)")
    N, p = series.shape
    if d < 1:
        raise ValueError("order d must be at least 1")
    if N <= d:
        raise ValueError(f"need more than d={d} observations, got {N}")
    Y = series[d:][::-1].copy()
    blocks = [series[d - lag : N - lag][::-1] for lag in range(1, d + 1)]
    X = np.ascontiguousarray(np.hstack(blocks))
    return VarDesign(Y=Y, X=X, N=N, d=d, p=p)


def vectorized_problem(design: VarDesign) -> list[RegressionProblem]:
    """Decompose the stacked system into p column regressions.

    The identity-Kronecker operator of the stacked form is block diagonal,
    so each response column pairs with the shared regressor matrix; the
    stacked operator itself is never materialized here.
    """
    return [
        RegressionProblem(design.X, design.Y[:, c]) for c in range(design.p)
    ]


def generate_stable_var(
    p: int, d: int, nnz_per_row: int, target_radius: float, seed: int = 0
) -> VarSpec:
    """Sparse random lag matrices rescaled to a target companion radius.

    Each row of each lag matrix gets nnz_per_row entries with magnitudes in
    [0.5, 1.5] and random signs; the matrices are jointly scaled (bisection
    on the scale factor) until the spectral radius is within 1e-4 of the
    target.  nnz_per_row = 0 returns the zero process regardless of target.
    Noise covariance is the identity and the intercept is zero.
    """
    if not (0.0 < target_radius < 1.0):
        raise ValueError("target_radius must be in (0, 1)")
    if not (0 <= nnz_per_row <= p):
        raise ValueError("nnz_per_row must be between 0 and p")
    rng = np.random.default_rng(seed)
    mu = np.zeros(p)
    sigma = np.eye(p)
    if nnz_per_row == 0:
        return VarSpec(A=np.zeros((d, p, p)), mu=mu, sigma=sigma)

    for _ in range(8):
        A0 = np.zeros((d, p, p))
        for lag in range(d):
            for row in range(p):
                cols = rng.choice(p, size=nnz_per_row, replace=False)
                mags = rng.uniform(0.5, 1.5, size=nnz_per_row)
                signs = rng.integers(0, 2, size=nnz_per_row) * 2 - 1
                A0[lag, row, cols] = signs * mags
        r0 = check_stability(A0).spectral_radius
        if r0 > 0.0:
            break
    else:
        raise ValueError("could not draw a non-nilpotent sparse pattern")

    def radius(s):
        return check_stability(s * A0).spectral_radius

    lo, hi = 0.0, target_radius / r0
    while radius(hi) < target_radius:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        r = radius(mid)
        if abs(r - target_radius) <= 1e-4:
            lo = hi = mid
            break
        if r < target_radius:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return VarSpec(A=s * A0, mu=mu, sigma=sigma)


def partition_coefficients(
    beta_star: np.ndarray, p: int, d: int, intercept: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Fold a stacked coefficient vector into lag matrices and intercepts.

    The stacked layout is one block per response column c: the dp lag
    coefficients of column c, then its intercept when enabled.  Entry i of
    lag block l maps to A_l[c, i].  Exact inverse of flatten_coefficients.
    """
    beta_star = np.asarray(beta_star, dtype=np.float64)
    width = d * p + (1 if intercept else 0)
    if beta_star.shape != (p * width,):
        raise ValueError(
            f"beta_star has length {beta_star.shape[0]}, expected {p * width}"
        )
    blocks = beta_star.reshape(p, width)
    B = blocks[:, : d * p].T  # (dp, p), column c = coefficients of column c
    mu_hat = blocks[:, d * p].copy() if intercept else np.zeros(p)
    A_hat = B.reshape(d, p, p).transpose(0, 2, 1).copy()
    return A_hat, mu_hat


def flatten_coefficients(
    A_hat: np.ndarray, mu_hat: np.ndarray, intercept: bool
) -> np.ndarray:
    """Stack lag matrices (and intercepts) back into the vector layout."""
    A_hat = np.asarray(A_hat, dtype=np.float64)
    d, p, _ = A_hat.shape
    B = A_hat.transpose(0, 2, 1).reshape(d * p, p)
    width = d * p + (1 if intercept else 0)
    blocks = np.empty((p, width))
    blocks[:, : d * p] = B.T
    if intercept:
        blocks[:, d * p] = mu_hat
    return blocks.reshape(-1)


@dataclass(eq=False)
class VarFit:
    """Fitted lag matrices plus the pipeline evidence behind them."""

    A_hat: np.ndarray
    mu_hat: np.ndarray
    beta_star: np.ndarray
    support_family: SupportFamily
    chosen_lambda_idx: np.ndarray
    chosen_losses: np.ndarray
    chosen_supports: list
    spectral_radius: float
    stable: bool
    timing: TimingBreakdown
    config: dict
    diagnostics: dict = field(default_factory=dict)


def _block_sampler(n_eff, block_len, plan):
    def sample(k):
        seed = derive_seed(plan.master_seed, Phase.SELECTION, k)
        return block_bootstrap(
            n_eff,
            block_len,
            seed,
            plan.subsample_fraction,
            phase=Phase.SELECTION,
            k=k,
        ).indices

    return sample


def _block_splitter(n_eff, block_len, plan):
    def split(k):
        seed = derive_seed(plan.master_seed, Phase.ESTIMATION_TRAIN, k)
        tr, ev = block_train_eval_split(
            n_eff, block_len, plan.eval_fraction, seed, k=k
        )
        return tr.indices, ev.indices

    return split


def fit_uoi_var(
    series: np.ndarray,
    d: int,
    plan: BootstrapPlan,
    q: int = 20,
    settings: Optional[AdmmSettings] = None,
    *,
    epsilon: float = 0.01,
    fit_intercept: bool = True,
    workers: int = 1,
    zero_tol: float = 1e-8,
) -> VarFit:
    """Union-of-intersections fit of a VAR(d) model to a series.

    Resampling draws whole time blocks (one joint draw applied to the
    response and regressor rows), selection and estimation run over the p
    column problems with supports tracked in the stacked coefficient space,
    and the averaged stacked estimate is folded back into lag matrices.  An
    unstable fitted model is reported, not raised.
    """
    settings = settings or AdmmSettings()
    design = build_var_design(series, d)
    n_eff = design.N - design.d
    block_len = (
        plan.block_len if plan.block_len is not None else auto_block_len(n_eff)
    )
    if block_len > n_eff:
        raise ValueError("block_len exceeds the number of design rows")
    X, Ycols = design.X, design.Y

    with deterministic_blas():
        sel_clock = PhaseClock()
        with sel_clock.serial("computation"):
            Xc, Yc, _, _ = _center(X, Ycols, fit_intercept)
            lam_max = _lambda_max(Xc, Yc)
            if lam_max <= 0.0:
                raise ValueError("degenerate series: ||X'Y||_max is zero")
            lambdas = _geometric_values(lam_max, q, epsilon)
        supports, sel_nonconv = _select_engine(
            X, Ycols, lambdas, plan, settings,
            _block_sampler(n_eff, block_len, plan),
            fit_intercept, workers, zero_tol, sel_clock,
        )
        sel_timing = sel_clock.close()

        est_clock = PhaseClock()
        beta_vec, chosen_idx, chosen_losses, chosen_supports, est_nonconv = (
            _estimate_engine(
                X, Ycols, supports, plan, settings,
                _block_splitter(n_eff, block_len, plan),
                fit_intercept, workers, est_clock,
            )
        )
        est_timing = est_clock.close()

    family = SupportFamily(supports, lambdas, sel_nonconv)
    A_hat, mu_hat = partition_coefficients(beta_vec, design.p, d, fit_intercept)
    stab = check_stability(A_hat)
    return VarFit(
        A_hat=A_hat,
        mu_hat=mu_hat,
        beta_star=beta_vec,
        support_family=family,
        chosen_lambda_idx=chosen_idx,
        chosen_losses=chosen_losses,
        chosen_supports=chosen_supports,
        spectral_radius=stab.spectral_radius,
        stable=stab.stable,
        timing=TimingBreakdown(selection=sel_timing, estimation=est_timing),
        config=_config_echo(
            plan, q, epsilon, fit_intercept, settings, zero_tol,
            extra={"d": d, "p": design.p, "block_len_used": block_len},
        ),
        diagnostics={"estimation_nonconverged": est_nonconv},
    )
