"""Linear unmixing of the encoder output ``F ~ A_hat S``.

Vertices are found by the successive projection algorithm (exact when every
component has at least one pure sample) and abundances by simplex-constrained
least squares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RankError


@dataclass
class UnmixResult:
    Ahat: np.ndarray
    Shat: np.ndarray
    vertex_indices: np.ndarray


def spa_vertices(F, K, tol=1e-12):
    """Indices of ``K`` columns of ``F`` picked by successive projection.

    Each step takes the column with the largest residual norm (lowest index
    on ties) and projects every column onto the orthogonal complement of it.
    ``F`` is rescaled by its largest column norm first.
    """
    F = np.asarray(F, dtype=float)
    if not np.all(np.isfinite(F)):
        raise ParameterError("F must be finite")
    if K < 1 or K > F.shape[1]:
        raise ParameterError(f"need 1 <= K <= N, got K={K}, N={F.shape[1]}")
    norms = np.linalg.norm(F, axis=0)
    if norms.max() == 0:
        raise RankError("F is identically zero")
    R = F / norms.max()
    picks = []
    for _ in range(K):
        sq = np.einsum("ij,ij->j", R, R)
        j = int(np.argmax(sq))
        if sq[j] < tol**2:
            raise RankError(f"residual collapsed after {len(picks)} vertices")
        picks.append(j)
        u = R[:, j] / np.sqrt(sq[j])
        R = R - np.outer(u, u @ R)
    return np.array(picks)


def project_simplex(V):
    """Euclidean projection of each column of ``V`` onto the probability simplex."""
    V = np.asarray(V, dtype=float)
    K = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ind = np.arange(1, K + 1)[:, None]
    cond = U - css / ind > 0
    r = K - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[r, np.arange(V.shape[1])] / (r + 1)
    return np.maximum(V - theta, 0.0)


def _polish(F, A, S, support_tol=1e-9):
    """Re-solve each column exactly on its detected support (equality-constrained LS)."""
    K, N = S.shape
    out = S.copy()
    patterns = S > support_tol
    keys, inverse = np.unique(patterns.T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for p, key in enumerate(keys):
        cols = np.flatnonzero(inverse == p)
        T = np.flatnonzero(key)
        if T.size == 0:
            continue
        At = A[:, T]
        n = T.size
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = 2 * At.T @ At
        kkt[:n, n] = 1.0
        kkt[n, :n] = 1.0
        rhs = np.vstack([2 * At.T @ F[:, cols], np.ones((1, cols.size))])
        try:
            sol = np.linalg.solve(kkt, rhs)[:n]
        except np.linalg.LinAlgError:
            continue
        cand = np.zeros((K, cols.size))
        cand[T] = sol
        ok = np.all(sol >= -1e-12, axis=0)
        old_err = np.sum((F[:, cols] - A @ out[:, cols]) ** 2, axis=0)
        new_err = np.sum((F[:, cols] - A @ cand) ** 2, axis=0)
        better = ok & (new_err <= old_err + 1e-14 * (1 + old_err))
        out[:, cols[better]] = project_simplex(cand[:, better])
    return out


def project_abundances(F, Ahat, tol=1e-10, max_iter=20000):
    """Per-column ``min ||F_l - Ahat s||^2`` over the simplex.

    Accelerated projected gradient to ``tol`` followed by an exact solve on
    each column's support.
    """
    F = np.asarray(F, dtype=float)
    A = np.asarray(Ahat, dtype=float)
    K = A.shape[1]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankError("Ahat must have full column rank")
    step = 1.0 / (2.0 * sv[0] ** 2)
    AtA, AtF = A.T @ A, A.T @ F
    S = np.full((K, F.shape[1]), 1.0 / K)
    Yk, t = S.copy(), 1.0
    for _ in range(max_iter):
        S_new = project_simplex(Yk - step * 2.0 * (AtA @ Yk - AtF))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Yk = S_new + ((t - 1.0) / t_new) * (S_new - S)
        done = np.max(np.abs(S_new - S)) < tol
        S, t = S_new, t_new
        if done:
            break
    return _polish(F, A, S)


def unmix(F, K) -> UnmixResult:
    """Vertex selection followed by abundance projection."""
    F = np.asarray(F, dtype=float)
    if K > F.shape[1]:
        raise ParameterError(f"K={K} exceeds the number of samples {F.shape[1]}")
    idx = spa_vertices(F, K)
    Ahat = F[:, idx]
    return UnmixResult(Ahat, project_abundances(F, Ahat), idx)
