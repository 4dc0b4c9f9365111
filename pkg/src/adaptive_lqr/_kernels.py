"""Compiled inner loops for small dense matrices.

At the dimensions used here (n, m <= 10) plain loops beat BLAS calls, whose
per-call overhead dominates the Riccati iteration.
"""

import numba
import numpy as np

CONVERGED, DIVERGED, EXHAUSTED = 0, 1, 2


@numba.njit(cache=True)
def matmul(X, Y):
    n, k = X.shape
    m = Y.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for l in range(k):
            x = X[i, l]
            for j in range(m):
                out[i, j] += x * Y[l, j]
    return out


@numba.njit(cache=True)
def spd_solve(S, Y):
    """Solve ``S X = Y`` for symmetric positive definite ``S`` by Cholesky; NaNs if ``S`` is not PD."""
    m = S.shape[0]
    L = np.zeros((m, m))
    for j in range(m):
        s = S[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return np.full(Y.shape, np.nan)
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    X = Y.copy()
    for c in range(Y.shape[1]):
        for i in range(m):
            s = X[i, c]
            for k in range(i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
        for i in range(m - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, m):
                s -= L[k, i] * X[k, c]
            X[i, c] = s / L[i, i]
    return X


@numba.njit(cache=True)
def spectral_radius(M):
    # complex input: numba refuses real input whose eigenvalues are complex
    return np.max(np.abs(np.linalg.eigvals(M.astype(np.complex128))))


@numba.njit(cache=True)
def riccati(A, B, Q, R, tol, max_iter, cap):
    """Riccati value iteration followed by the gain and closed-loop spectral radius.

    Returns ``(P, K, iterations, status, rho)``; ``K`` and ``rho`` are only
    meaningful when status is CONVERGED.
    """
    P, k, status = riccati_fixed_point(A, B, Q, R, tol, max_iter, cap)
    m, n = B.shape[1], A.shape[0]
    if status != CONVERGED:
        return P, np.zeros((m, n)), k, status, np.inf
    Bt = np.ascontiguousarray(B.T)
    BtP = matmul(Bt, P)
    K = -spd_solve(matmul(BtP, B) + R, matmul(BtP, A))
    rho = spectral_radius(A + matmul(B, K))
    return P, K, k, status, rho


@numba.njit(cache=True)
def lyapunov(L, C):
    """Solve ``S = L S L' + C`` through ``(I - L kron L) vec(S) = vec(C)`` (row-major vec)."""
    n = L.shape[0]
    lhs = np.eye(n * n) - np.kron(L, L)
    S = np.linalg.solve(lhs, np.ascontiguousarray(C).reshape(n * n)).reshape(n, n)
    return 0.5 * (S + S.T)


@numba.njit(cache=True)
def riccati_fixed_point(A, B, Q, R, tol, max_iter, cap):
    """Value iteration for the DARE from ``P = Q``.

    Returns ``(P, iterations, status)`` with status one of CONVERGED,
    DIVERGED (Frobenius norm above ``cap`` or non-finite) or EXHAUSTED.
    """
    P = Q.copy()
    At = np.ascontiguousarray(A.T)
    Bt = np.ascontiguousarray(B.T)
    norm_p = np.sqrt(np.sum(P * P))
    for k in range(1, max_iter + 1):
        AtP = matmul(At, P)
        AtPB = matmul(AtP, B)
        S = matmul(matmul(Bt, P), B) + R
        X = spd_solve(S, np.ascontiguousarray(AtPB.T))
        P_new = Q + matmul(AtP, A) - matmul(AtPB, X)
        P_new = 0.5 * (P_new + P_new.T)
        norm_new = np.sqrt(np.sum(P_new * P_new))
        if not np.isfinite(norm_new) or norm_new > cap:
            return P_new, k, DIVERGED
        diff = np.sqrt(np.sum((P_new - P) ** 2))
        if diff <= tol * (1.0 + norm_p):
            return P_new, k, CONVERGED
        P = P_new
        norm_p = norm_new
    return P, max_iter, EXHAUSTED
