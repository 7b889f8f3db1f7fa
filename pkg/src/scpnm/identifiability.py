"""Identifiability algebra for simplex-constrained post-nonlinear mixtures.

With ``s_K = 1 - s_1 - ... - s_{K-1}``, differentiating the sum-to-one
identity ``sum_m h_m((A s)_m) = 1`` twice gives ``G h'' = 0``, where the rows
of ``G`` are the elementwise products ``b_i * b_j`` (``i <= j < K``) of the
column differences ``b_i = A[:, i] - A[:, K-1]``. Full column rank of ``G``
forces every ``h_m`` to be affine; a nontrivial null space lets one build
non-affine solutions explicitly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RankError


@dataclass(frozen=True)
class GMatrix:
    data: np.ndarray
    row_index: tuple  # 0-based (i, j) pairs: squares first, then i < j lexicographic

    @property
    def shape(self):
        return self.data.shape


def build_g(A) -> GMatrix:
    """The ``K(K-1)/2 x M`` second-derivative coefficient matrix of ``A``."""
    A = np.asarray(A, dtype=float)
    M, K = A.shape
    if K < 3:
        raise ParameterError("the G matrix is defined for K >= 3")
    B = A[:, :K - 1] - A[:, K - 1:K]
    pairs = [(i, i) for i in range(K - 1)]
    pairs += [(i, j) for i in range(K - 1) for j in range(i + 1, K - 1)]
    G = np.stack([B[:, i] * B[:, j] for i, j in pairs])
    return GMatrix(G, tuple(pairs))


def _data(G):
    return G.data if isinstance(G, GMatrix) else np.asarray(G, dtype=float)


def sigma_min(G) -> float:
    sv = np.linalg.svd(_data(G), compute_uv=False)
    return float(sv[-1]) if sv.size else 0.0


def numerical_rank(G, rtol=1e-8) -> int:
    sv = np.linalg.svd(_data(G), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def check_bound(M, K) -> bool:
    """True iff ``3 <= K <= M <= K(K-1)/2``, the regime where ``G`` can have full column rank."""
    return 3 <= K <= M <= K * (K - 1) // 2


def solve_tau(A, dense_tol=1e-10):
    """Minimum-norm ``tau`` with ``A^T tau = 1``.

    ``tau`` gives the feasible affine encoder ``f_m(x) = tau_m g_m^{-1}(x)``.
    Warns when some entry is below ``dense_tol`` in magnitude.
    """
    A = np.asarray(A, dtype=float)
    M, K = A.shape
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankError("A must have full column rank")
    tau = np.linalg.pinv(A.T) @ np.ones(K)
    if np.min(np.abs(tau)) < dense_tol:
        warnings.warn("solution of A^T tau = 1 is not dense", RuntimeWarning, stacklevel=2)
    return tau


def is_dense(tau, tol=1e-10) -> bool:
    return bool(np.min(np.abs(tau)) >= tol)


@dataclass(frozen=True)
class Counterexample:
    """Channel maps ``h_m`` that satisfy the sum-to-one identity without being affine.

    ``h_m(y) = iota_m (y + c_m)^2 + beta_m`` where ``iota_m != 0`` and
    ``h_m(y) = omega_m y + beta_m`` otherwise.
    """

    A: np.ndarray
    iota: np.ndarray
    c: np.ndarray
    beta: np.ndarray
    omega: np.ndarray

    @property
    def quadratic(self):
        return self.iota != 0

    def h(self, Y):
        """Evaluate every channel map on the rows of the ``M x N`` array ``Y``."""
        Y = np.asarray(Y, dtype=float)
        q = self.quadratic[:, None]
        quad = self.iota[:, None] * (Y + self.c[:, None]) ** 2
        lin = self.omega[:, None] * Y
        return np.where(q, quad, lin) + self.beta[:, None]

    def h_prime(self, Y):
        Y = np.asarray(Y, dtype=float)
        q = self.quadratic[:, None]
        return np.where(q, 2 * self.iota[:, None] * (Y + self.c[:, None]),
                        self.omega[:, None] * np.ones_like(Y))

    def h_second(self):
        return 2.0 * self.iota

    def constraint_error(self, S):
        """``max |1^T h(A s) - 1|`` over the columns of ``S``."""
        return float(np.max(np.abs(self.h(self.A @ S).sum(axis=0) - 1.0)))

    def rows(self):
        return [{"channel": m + 1, "iota": float(self.iota[m]), "c": float(self.c[m]),
                 "beta": float(self.beta[m]), "omega": float(self.omega[m])}
                for m in range(len(self.iota))]


def _guards_hold(A, iota, c):
    lo, hi = A.min(axis=1), A.max(axis=1)
    q = iota != 0
    literal = (c <= lo) | (c >= hi)
    # vertex of the parabola sits at y = -c; keep it off [lo, hi]
    monotone = (-c <= lo) | (-c >= hi)
    return bool(np.all((literal & monotone) | ~q))


def build_counterexample(A, seed=0, zero_tol=1e-12, max_halvings=200) -> Counterexample:
    """Construct non-affine ``h`` satisfying ``1^T h(A s) = 1`` on the simplex.

    Needs ``M > K(K-1)/2`` so that ``G`` has a nontrivial null space. The
    curvature vector is a random unit null vector of ``G`` halved until every
    quadratic channel is monotone over ``[min_k a_mk, max_k a_mk]``.
    """
    A = np.asarray(A, dtype=float)
    M, K = A.shape
    if M <= K * (K - 1) // 2:
        raise ParameterError(f"G has a trivial null space when M={M} <= K(K-1)/2={K * (K - 1) // 2}")
    tau = solve_tau(A)
    G = build_g(A).data
    _, sv, Vt = np.linalg.svd(G)
    rank = int(np.sum(sv > 1e-8 * sv[0])) if sv.size else 0
    null = Vt[rank:]
    rng = np.random.default_rng(seed)
    iota = rng.standard_normal(null.shape[0]) @ null
    iota /= np.linalg.norm(iota)
    iota[np.abs(iota) < zero_tol] = 0.0
    q = iota != 0
    aK = A[:, K - 1]

    def coeffs(iota):
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(q, tau / (2 * iota) - aK, 0.0)
        beta = np.where(q, iota * aK**2 - c**2 * iota, 0.0)
        omega = np.where(q, 0.0, tau)
        return c, beta, omega

    for _ in range(max_halvings):
        c, beta, omega = coeffs(iota)
        if _guards_hold(A, iota, c):
            return Counterexample(A, iota, c, beta, omega)
        iota = iota / 2.0
    raise RankError("could not scale the curvature vector to satisfy the invertibility guards")
