"""Dense linear-algebra kernels shared by every classifier."""

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite values in input")


def _as_2d(B):
    B = np.asarray(B, dtype=float)
    return (B[:, None], True) if B.ndim == 1 else (B, False)


def _spd_solve(M, R):
    try:
        return scipy.linalg.solve(M, R, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return scipy.linalg.solve(M, R, assume_a="sym", check_finite=False)


def ridge_solve(A, B, C, penalty=None):
    """Regularized least squares ``argmin ||A b - B||^2 + (1/C) b^T (I + P) b``.

    Parameters
    ----------
    A : (n, d) array
    B : (n,) or (n, c) array
    C : float
        Regularization strength, larger means weaker shrinkage.
    penalty : (d, d) array, optional
        Extra symmetric PSD penalty ``P`` added to the identity. Forces the
        primal path.

    Returns
    -------
    beta : (d,) or (d, c) array

    Notes
    -----
    Without a penalty the primal system ``(A^T A + I/C)`` is used when
    ``d <= n`` and the dual form ``A^T (A A^T + I/C)^{-1} B`` otherwise.
    """
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    A = np.asarray(A, dtype=float)
    B2, squeeze = _as_2d(B)
    _check_finite(A, B2)
    n, d = A.shape
    if penalty is not None:
        P = np.asarray(penalty, dtype=float)
        _check_finite(P)
        M = A.T @ A + (np.eye(d) + P) / C
        beta = _spd_solve(M, A.T @ B2)
    elif d <= n:
        beta = _spd_solve(A.T @ A + np.eye(d) / C, A.T @ B2)
    else:
        beta = A.T @ _spd_solve(A @ A.T + np.eye(n) / C, B2)
    return beta[:, 0] if squeeze else beta


def ridge_residual(A, B, C, beta, penalty=None):
    """Relative residual of the normal equations solved by :func:`ridge_solve`."""
    A = np.asarray(A, dtype=float)
    d = A.shape[1]
    reg = np.eye(d) if penalty is None else np.eye(d) + penalty
    rhs = A.T @ np.asarray(B, dtype=float)
    r = (A.T @ A + reg / C) @ beta - rhs
    return np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300)


def pinv(A, tol=None):
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values below ``tol * max_sv`` are treated as zero; the default
    ``tol`` is ``max(A.shape) * eps``.
    """
    A = np.asarray(A, dtype=float)
    _check_finite(A)
    m, n = A.shape
    if A.size == 0:
        return np.zeros((n, m))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if tol is None:
        tol = max(m, n) * np.finfo(float).eps
    smax = s[0] if s.size else 0.0
    keep = s > tol * smax
    if not np.any(keep):
        return np.zeros((n, m))
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def sq_distances(X, Y):
    return cdist(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), "sqeuclidean")


def gaussian_kernel(X, Y, sigma):
    """``K[i, j] = exp(-||x_i - y_j||^2 / sigma^2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return np.exp(-sq_distances(X, Y) / sigma**2)


def linear_kernel(X, Y):
    return np.asarray(X, dtype=float) @ np.asarray(Y, dtype=float).T
