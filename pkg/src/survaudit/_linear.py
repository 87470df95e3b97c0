"""Small least-squares and logistic regression solvers used by imputation and attacks."""

from __future__ import annotations

import numpy as np

RIDGE_FALLBACK = 1e-6


def solve_normal(X: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Least squares through the normal equations.

    The first column of ``X`` is taken as an unpenalized intercept when
    ``ridge`` > 0.  A singular system is retried with ``RIDGE_FALLBACK`` added
    to the diagonal instead of failing.
    """
    A = X.T @ X
    b = X.T @ y
    pen = np.full(A.shape[0], ridge)
    if ridge:
        pen[0] = 0.0
    try:
        coef = np.linalg.solve(A + np.diag(pen), b)
        if not np.all(np.isfinite(coef)) or np.linalg.cond(A + np.diag(pen)) > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        coef = np.linalg.solve(A + np.diag(pen + RIDGE_FALLBACK), b)
    return coef


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1.0, max_iter: int = 50,
                 tol: float = 1e-8) -> np.ndarray:
    """L2-penalized logistic regression by Newton's method; column 0 is the intercept."""
    n, p = X.shape
    w = np.zeros(p)
    pen = np.full(p, l2)
    pen[0] = 0.0
    for _ in range(max_iter):
        mu = _sigmoid(X @ w)
        grad = X.T @ (mu - y) + pen * w
        s = mu * (1.0 - mu)
        H = (X * s[:, None]).T @ X + np.diag(pen + RIDGE_FALLBACK)
        step = np.linalg.solve(H, grad)
        w -= step
        if np.max(np.abs(step)) < tol:
            break
    return w


def fit_logistic_ovr(X: np.ndarray, codes: np.ndarray, n_classes: int, l2: float = 1.0) -> np.ndarray:
    """One-vs-rest weights, shape (n_classes, p).  Two classes share one model."""
    if n_classes == 2:
        w = fit_logistic(X, (codes == 1).astype(float), l2)
        return np.vstack([-w, w])
    return np.vstack([fit_logistic(X, (codes == k).astype(float), l2) for k in range(n_classes)])


def predict_ovr(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Class with the highest one-vs-rest probability; ties go to the lowest code."""
    return np.argmax(X @ W.T, axis=1)
