"""Marginal pseudolikelihood of the data given kernel hyperparameters.

Observations are mapped through ``phi_z(x) = [k(x, z_1), ..., k(x, z_m)]``
for fixed landmarks ``z``. The stacked features are Gaussian with covariance
``1 1^T (x) R_zz + tau2 I`` once the embedding is integrated out, and the
change of variables contributes the Jacobian volume ``gamma(x)`` for every
observation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import comb, logsumexp
from scipy.stats import multivariate_normal

from .errors import InvalidInputError
from .kernels import GramKind, SEKernelParams, as_points, gram, jittered_cholesky

NAIVE_MAX_DIM = 2000
# Above this many D-subsets of landmarks the Jacobian log-determinant uses
# a row-graded QR factorization instead of the exact Cauchy-Binet sum.
CAUCHY_BINET_MAX_SUBSETS = 10000
_CHUNK_ENTRIES = 1_000_000


@dataclass(frozen=True)
class Landmarks:
    points: np.ndarray

    def __post_init__(self):
        Z = as_points(self.points, "landmarks")
        m, D = Z.shape
        if m < D:
            raise InvalidInputError(f"need at least D={D} landmarks, got {m}")
        if m > 1 and pdist(Z).min() <= 1e-12:
            raise InvalidInputError("landmarks contain duplicate rows")
        object.__setattr__(self, "points", Z)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PseudolikEval:
    log_gaussian_term: float
    log_jacobian_term: float
    total: float
    degenerate: bool = False


def _check(data, landmarks: Landmarks) -> np.ndarray:
    X = as_points(data, "data")
    if X.shape[1] != landmarks.dim:
        raise InvalidInputError(f"dimension mismatch: data D={X.shape[1]}, landmarks D={landmarks.dim}")
    return X


def phi_z(x, landmarks: Landmarks, params: SEKernelParams) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = _check(x[None, :], landmarks)
    return gram(X, landmarks.points, params, GramKind.K)[0]


def _log_det_cauchy_binet(logk: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """log det(sum_l w_l v_l v_l^T) with w_l = exp(2 logk_l), summed exactly
    over all D-subsets of landmarks in the log domain."""
    n, m, D = diff.shape
    subsets = np.array(list(itertools.combinations(range(m), D)), dtype=np.intp)
    out = np.empty(n)
    step = max(1, _CHUNK_ENTRIES // (len(subsets) * D * D))
    for start in range(0, n, step):
        V = diff[start : start + step][:, subsets, :]  # (c, S, D, D)
        if D == 1:
            det = V[..., 0, 0]
        elif D == 2:
            det = V[..., 0, 0] * V[..., 1, 1] - V[..., 0, 1] * V[..., 1, 0]
        elif D == 3:
            det = np.einsum("...i,...i->...", V[..., 0, :], np.cross(V[..., 1, :], V[..., 2, :]))
        else:
            det = np.linalg.det(V)
        with np.errstate(divide="ignore"):
            terms = 2.0 * np.log(np.abs(det)) + 2.0 * logk[start : start + step][:, subsets].sum(axis=-1)
        out[start : start + step] = logsumexp(terms, axis=1)
    return out


def _log_det_graded_qr(logk: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """Same quantity through a Householder QR of the weighted Jacobian.

    Rows are scaled relative to the heaviest one and sorted by decreasing
    weight, which keeps the factorization accurate for strongly graded rows.
    Rows whose relative weight underflows drop out.
    """
    n, m, D = diff.shape
    top = logk.max(axis=1, keepdims=True)
    order = np.argsort(-logk, axis=1)
    scale = np.exp(np.take_along_axis(logk - top, order, axis=1))
    A = np.take_along_axis(diff, order[:, :, None], axis=1) * scale[:, :, None]
    r = np.linalg.qr(A, mode="r")
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    with np.errstate(divide="ignore"):
        return 2.0 * np.log(diag).sum(axis=1) + 2.0 * D * top[:, 0]


def log_gamma_many(X: np.ndarray, landmarks: Landmarks, params: SEKernelParams) -> np.ndarray:
    """log gamma(x_i) for each row; -inf marks a singular J^T J."""
    Z = landmarks.points
    D = Z.shape[1]
    theta = params.theta
    logk = -cdist(X, Z, "sqeuclidean") / (2.0 * theta**2)
    diff = X[:, None, :] - Z[None, :, :]
    if comb(landmarks.m, D, exact=True) <= CAUCHY_BINET_MAX_SUBSETS:
        logdet = _log_det_cauchy_binet(logk, diff)
    else:
        logdet = _log_det_graded_qr(logk, diff)
    # each Jacobian entry carries 1/theta^2
    return 0.5 * (logdet - 4.0 * D * math.log(theta))


def log_gamma(x, landmarks: Landmarks, params: SEKernelParams) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = _check(x[None, :], landmarks)
    return float(log_gamma_many(X, landmarks, params)[0])


def gamma(x, landmarks: Landmarks, params: SEKernelParams) -> float:
    """Jacobian volume ``sqrt(det(J^T J))`` of ``x -> phi_z(x)``."""
    return math.exp(log_gamma(x, landmarks, params))


def _jacobian_term(X, landmarks, params):
    lg = log_gamma_many(X, landmarks, params)
    degenerate = bool(np.any(np.isneginf(lg)))
    return (-math.inf if degenerate else float(math.fsum(lg))), degenerate


def log_pseudolik_naive(data, landmarks: Landmarks, params: SEKernelParams) -> PseudolikEval:
    """Direct mn-dimensional Gaussian evaluation; the reference for the fast path."""
    X = _check(data, landmarks)
    n, m = X.shape[0], landmarks.m
    if n * m > NAIVE_MAX_DIM:
        raise InvalidInputError(f"naive evaluation limited to mn <= {NAIVE_MAX_DIM}, got {n * m}")
    Kxz = gram(X, landmarks.points, params, GramKind.K)
    Rzz = gram(landmarks.points, None, params, GramKind.R)
    # observation-major stacking: [phi(x_1); ...; phi(x_n)]
    y = Kxz.ravel()
    C = np.kron(np.ones((n, n)), Rzz) + params.tau2 * np.eye(n * m)
    g = float(multivariate_normal(mean=np.zeros(n * m), cov=C).logpdf(y))
    j, degenerate = _jacobian_term(X, landmarks, params)
    return PseudolikEval(g, j, g + j, degenerate)


def log_gaussian_fast(X: np.ndarray, landmarks: Landmarks, params: SEKernelParams) -> float:
    n, m = X.shape[0], landmarks.m
    tau2 = params.tau2
    Kxz = gram(X, landmarks.points, params, GramKind.K)
    Rzz = gram(landmarks.points, None, params, GramKind.R)
    mu_z = Kxz.mean(axis=0)
    L = jittered_cholesky(Rzz + (tau2 / n) * np.eye(m))
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    a = np.linalg.solve(L, mu_z)
    quad = a @ a
    frob = np.sum(Kxz**2)
    return -0.5 * (
        logdet
        + quad
        + frob / tau2
        - n * (mu_z @ mu_z) / tau2
        + m * math.log(n)
        + m * (n - 1) * math.log(tau2)
        + m * n * math.log(2.0 * math.pi)
    )


def log_pseudolik_fast(data, landmarks: Landmarks, params: SEKernelParams) -> PseudolikEval:
    """Kronecker-structured evaluation in O(m^3 + mn) for the Gaussian part."""
    X = _check(data, landmarks)
    g = float(log_gaussian_fast(X, landmarks, params))
    j, degenerate = _jacobian_term(X, landmarks, params)
    return PseudolikEval(g, j, g + j, degenerate)


def default_m(n: int, D: int) -> int:
    return max(D, min(20, math.ceil(n / 10)))


def choose_landmark_indices(data, m: int, seed: int) -> np.ndarray:
    """Row indices of ``m`` distinct landmarks, drawn in a seeded random order.

    A row duplicating an already chosen landmark is skipped.
    """
    X = as_points(data, "data")
    n, D = X.shape
    if m < D:
        raise InvalidInputError(f"m={m} is below the dimension D={D}")
    if m >= n:
        raise InvalidInputError(f"m={m} must be smaller than n={n}")
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for idx in rng.permutation(n):
        if chosen and cdist(X[idx][None, :], X[chosen]).min() <= 1e-12:
            continue
        chosen.append(int(idx))
        if len(chosen) == m:
            break
    if len(chosen) < m:
        raise InvalidInputError(f"only {len(chosen)} distinct rows available, need m={m}")
    return np.array(chosen, dtype=np.intp)


def choose_landmarks(data, m: int, seed: int):
    """Hold out ``m`` distinct rows as landmarks.

    Returns ``(Landmarks, remaining_rows)``; rows skipped as duplicates of a
    landmark stay in the working data.
    """
    X = as_points(data, "data")
    idx = choose_landmark_indices(X, m, seed)
    mask = np.ones(X.shape[0], dtype=bool)
    mask[idx] = False
    return Landmarks(X[idx]), X[mask]
