"""Evaluation metrics and finite-difference curvature diagnostics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, RankError


def _encoder(model):
    """Callable mapping an ``M x B`` array to encoder outputs of the same shape."""
    if hasattr(model, "encode"):
        return model.encode
    if hasattr(model, "encoders"):
        return model.encoders
    if callable(model):
        return model
    raise ParameterError("model must expose encode(), encoders, or be callable")


def _check_full_row_rank(Z, name, tol=1e-10):
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv[-1] <= tol * sv[0]:
        raise RankError(f"{name} is not full row rank (singular values {sv})")


def subspace_distance(S, F):
    """Spectral norm of the part of ``range(F^T)`` lying outside ``range(S^T)``.

    Both inputs are ``K x N`` with full row rank; the result is in ``[0, 1]``
    and is invariant to left multiplication of either argument by an
    invertible matrix.
    """
    S = np.asarray(S, dtype=float)
    F = np.asarray(F, dtype=float)
    if S.shape[1] != F.shape[1]:
        raise ParameterError("S and F need the same number of columns")
    _check_full_row_rank(S, "S")
    _check_full_row_rank(F, "F")
    Qs, _ = np.linalg.qr(S.T)
    Qf, _ = np.linalg.qr(F.T)
    resid = Qf - Qs @ (Qs.T @ Qf)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def dominant_rows(F, K):
    """Rank-``K`` row basis of ``F`` (top right-singular vectors, scaled).

    Used when the encoder output has more channels than components, so that
    ``subspace_distance`` compares ``K``-dimensional row spaces.
    """
    F = np.asarray(F, dtype=float)
    if F.shape[0] == K:
        return F
    if F.shape[0] < K:
        raise ParameterError(f"F has {F.shape[0]} rows, fewer than K={K}")
    _, sv, Vt = np.linalg.svd(F, full_matrices=False)
    return sv[:K, None] * Vt[:K]


def permutation_mse(S, Shat):
    """Row-normalised MSE between ``S`` and ``Shat``, minimised over row relabelings."""
    S = np.asarray(S, dtype=float)
    Shat = np.asarray(Shat, dtype=float)
    if S.shape != Shat.shape:
        raise ParameterError(f"shape mismatch {S.shape} vs {Shat.shape}")
    K = S.shape[0]
    if K > 8:
        raise ParameterError("exhaustive permutation search is limited to K <= 8")
    ns = np.linalg.norm(S, axis=1)
    nh = np.linalg.norm(Shat, axis=1)
    if np.any(ns == 0) or np.any(nh == 0):
        raise DomainError("zero row: normalised MSE is undefined")
    U = S / ns[:, None]
    V = Shat / nh[:, None]
    cost = np.sum((U[:, None, :] - V[None, :, :]) ** 2, axis=2)
    rows = np.arange(K)
    best = min(cost[rows, list(p)].sum() for p in itertools.permutations(range(K)))
    return float(best / K)


def second_derivative_fd(phi, z, delta):
    """Central second difference ``(phi(z+d) - 2 phi(z) + phi(z-d)) / d^2``.

    The truncation error is ``-(d^2/12) phi''''(xi)``, so the estimate is exact
    for polynomials of degree <= 3.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    return (phi(z + delta) - 2.0 * phi(z) + phi(z - delta)) / (delta * delta)


def cross_derivative_fd(psi, point, deltas):
    """Four-point estimate of the mixed partial of ``psi(x, y)``."""
    x, y = point
    dx, dy = deltas
    if not (dx > 0 and dy > 0):
        raise ParameterError("stencil widths must be positive")
    return (psi(x + dx, y + dy) - psi(x + dx, y - dy)
            - psi(x - dx, y + dy) + psi(x - dx, y - dy)) / (4.0 * dx * dy)


def composed(model, g, m, y):
    """Evaluate ``h_m(y) = f_m(g_m(y))`` for a vector of ``y`` on channel ``m``.

    Only channel ``m`` of the encoder output is kept. Every input row ``k``
    is filled with ``g_k(y)`` so that all rows stay inside their own range.
    """
    enc = _encoder(model)
    y = np.asarray(y, dtype=float)
    X = g(np.tile(y, (len(g), 1)))
    return enc(X)[m]


@dataclass
class AffinityReport:
    slope: np.ndarray
    intercept: np.ndarray
    r2: np.ndarray
    max_curvature: np.ndarray
    y_ranges: np.ndarray

    @property
    def min_r2(self):
        return float(np.min(self.r2))

    @property
    def sum_intercepts(self):
        return float(np.sum(self.intercept))

    def rows(self):
        return [
            {"channel": m + 1, "slope": float(self.slope[m]), "intercept": float(self.intercept[m]),
             "r2": float(self.r2[m]), "max_abs_h2": float(self.max_curvature[m])}
            for m in range(len(self.r2))
        ]


def affinity_report(model, g, A, S, grid=512, quantiles=(0.5, 99.5)):
    """Least-squares affine fit of each ``h_m = f_m o g_m`` over the data range.

    The grid spans the given percentiles of ``(A S)_m``. ``R^2`` is clamped
    to ``[0, 1]``; ``max_curvature`` is the largest second difference.
    """
    A = np.asarray(A, dtype=float)
    Y = A @ np.asarray(S, dtype=float)
    M = A.shape[0]
    slope, icpt, r2, curv, ranges = (np.zeros(M) for _ in range(5))
    ranges = np.zeros((M, 2))
    for m in range(M):
        lo, hi = np.percentile(Y[m], quantiles)
        if hi <= lo:
            hi = lo + 1e-12
        y = np.linspace(lo, hi, grid)
        h = composed(model, g, m, y)
        X = np.column_stack([y, np.ones_like(y)])
        coef, *_ = np.linalg.lstsq(X, h, rcond=None)
        resid = h - X @ coef
        ss_tot = np.sum((h - h.mean()) ** 2)
        ss_res = np.sum(resid**2)
        r2[m] = 1.0 if ss_tot == 0 and ss_res == 0 else max(0.0, 1.0 - ss_res / ss_tot) if ss_tot > 0 else 0.0
        slope[m], icpt[m] = coef
        step = y[1] - y[0]
        curv[m] = np.max(np.abs(np.diff(h, 2))) / step**2 if grid > 2 else 0.0
        ranges[m] = lo, hi
    return AffinityReport(slope, icpt, np.clip(r2, 0.0, 1.0), curv, ranges)


def curvature_residual(model, g, A, Sgrid, rel_delta=1e-3):
    """Mean over ``Sgrid`` columns of ``||h''(A s)||^2``, by central differences.

    Each channel uses ``delta_m = rel_delta * (range of (A Sgrid)_m)``. The
    stencil must stay inside the image of the simplex under row ``m`` of
    ``A``, and ``Sgrid`` must be strictly interior.
    """
    A = np.asarray(A, dtype=float)
    Sgrid = np.asarray(Sgrid, dtype=float)
    if np.any(Sgrid <= 0):
        raise DomainError("curvature grid must lie in the simplex interior")
    Y = A @ Sgrid
    total = np.zeros(Y.shape[1])
    for m in range(A.shape[0]):
        span = Y[m].max() - Y[m].min()
        delta = rel_delta * (span if span > 0 else 1.0)
        lo, hi = A[m].min(), A[m].max()
        if np.any(Y[m] - delta < lo) or np.any(Y[m] + delta > hi):
            raise DomainError(f"channel {m}: stencil leaves the simplex image; move the grid inward")
        h2 = second_derivative_fd(lambda y: composed(model, g, m, y), Y[m], delta)
        total += h2 * h2
    return float(np.mean(total))
