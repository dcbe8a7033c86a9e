"""Independent reference implementations the tests check against.

These deliberately share no code with the package solver paths: the LASSO
oracle is coordinate descent, OLS goes through the normal equations, the
lagged design is built by an explicit double loop, and the stacked
operator is materialized with a sparse Kronecker product.
"""

import numpy as np
import scipy.sparse


def soft(v, k):
    return np.sign(v) * max(abs(v) - k, 0.0)


def cd_lasso(X, y, lam, tol=1e-10, max_sweeps=200000):
    """Coordinate-descent minimizer of 1/2 ||y - X b||^2 + lam ||b||_1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    G = X.T @ X
    grad = X.T @ y  # holds X'y - G @ beta throughout
    diag = np.diag(G).copy()
    beta = np.zeros(p)
    for _ in range(max_sweeps):
        max_step = 0.0
        for i in range(p):
            if diag[i] <= 0.0:
                continue
            rho_i = grad[i] + diag[i] * beta[i]
            new = soft(rho_i, lam) / diag[i]
            step = new - beta[i]
            if step != 0.0:
                grad -= G[:, i] * step
                beta[i] = new
                max_step = max(max_step, abs(step))
        if max_step <= tol * max(1.0, float(np.abs(beta).max())):
            break
    return beta


def lasso_objective(X, y, lam, beta):
    r = y - X @ beta
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def normal_equations(X, y):
    return np.linalg.solve(X.T @ X, X.T @ y)


def double_loop_design(series, d):
    """Entry-by-entry construction of the lagged design matrices."""
    N, p = series.shape
    Y = np.empty((N - d, p))
    X = np.empty((N - d, d * p))
    for r in range(N - d):
        tau = N - r  # response time, 1-based
        Y[r] = series[tau - 1]
        for lag in range(1, d + 1):
            X[r, (lag - 1) * p : lag * p] = series[tau - lag - 1]
    return Y, X


def materialized_kron(X, p):
    """The stacked block-diagonal operator I_p (x) X, explicitly formed."""
    return scipy.sparse.kron(scipy.sparse.identity(p), X, format="csr")


def var_recursion(A, mu, noise, x0=None):
    """Naive simulation of x_t = mu + sum_j A_j x_{t-j} + noise_t."""
    A = np.asarray(A, dtype=np.float64)
    d, p, _ = A.shape
    steps = noise.shape[0]
    buf = np.zeros((d + steps, p))
    if x0 is not None:
        buf[:d] = x0
    for t in range(steps):
        acc = mu + noise[t]
        for j in range(d):
            acc = acc + A[j] @ buf[d + t - 1 - j]
        buf[d + t] = acc
    return buf[d:]
