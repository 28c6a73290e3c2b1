"""Kernel mean embeddings: the empirical estimator, the conjugate Gaussian
posterior over the population embedding, and the spectral shrinkage
estimator (S-KMSE)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import InvalidInputError
from .kernels import GramKind, SEKernelParams, as_points, gram, jittered_cholesky


@dataclass(frozen=True)
class EmpiricalEmbedding:
    data: np.ndarray
    params: SEKernelParams

    def __post_init__(self):
        X = as_points(self.data, "data")
        if X.shape[0] < 1:
            raise InvalidInputError("an embedding needs at least one observation")
        object.__setattr__(self, "data", X)

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class PosteriorEmbedding:
    """Joint Gaussian over embedding values at ``eval_points``."""

    eval_points: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Draw ``size`` joint function values, shape (size, p)."""
        L = jittered_cholesky(self.covariance)
        z = rng.standard_normal((size, self.mean.shape[0]))
        return self.mean[None, :] + z @ L.T


@dataclass(frozen=True)
class SKMSEConfig:
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidInputError(f"lambda must be a nonnegative real, got {self.lam!r}")


def _query(emb: EmpiricalEmbedding, query) -> np.ndarray:
    Q = as_points(query, "query")
    if Q.shape[1] != emb.data.shape[1]:
        raise InvalidInputError(f"dimension mismatch: query D={Q.shape[1]}, data D={emb.data.shape[1]}")
    return Q


def empirical_eval(emb: EmpiricalEmbedding, query) -> np.ndarray:
    """``(1/n) sum_i k(x_i, q_j)`` for every query row."""
    Q = _query(emb, query)
    return gram(Q, emb.data, emb.params, GramKind.K).mean(axis=1)


def posterior(emb: EmpiricalEmbedding, query, prior_kind=GramKind.R) -> PosteriorEmbedding:
    """Posterior (predictive) distribution of the embedding at ``query``.

    ``prior_kind="K"`` swaps the prior kernel for the base kernel; it exists
    to check the correspondence with :func:`skmse_eval` and is not a model
    option.
    """
    Q = _query(emb, query)
    X, params = emb.data, emb.params
    n = emb.n
    R = gram(X, None, params, prior_kind)
    Rq = gram(Q, X, params, prior_kind)
    Rqq = gram(Q, None, params, prior_kind)
    v = empirical_eval(emb, X)
    L = jittered_cholesky(R + (params.tau2 / n) * np.eye(n))
    mean = Rq @ cho_solve((L, True), v)
    W = np.linalg.solve(L, Rq.T)  # L^{-1} R*^T
    cov = Rqq - W.T @ W
    cov = 0.5 * (cov + cov.T)
    return PosteriorEmbedding(eval_points=Q, mean=mean, covariance=cov)


def skmse_eval(data, params: SEKernelParams, cfg: SKMSEConfig, query) -> np.ndarray:
    """Spectral kernel mean shrinkage estimator evaluated at ``query``.

    ``K_{query,data} (K + n lam I)^{-1} v`` with ``v`` the empirical
    embedding at the data points; only the base kernel is used.
    """
    emb = EmpiricalEmbedding(data, params)
    Q = _query(emb, query)
    X, n = emb.data, emb.n
    K = gram(X, None, params, GramKind.K)
    v = K.mean(axis=1)
    L = jittered_cholesky(K + n * cfg.lam * np.eye(n))
    beta = cho_solve((L, True), v)
    return gram(Q, X, params, GramKind.K) @ beta


def witness(post_p: PosteriorEmbedding, post_q: PosteriorEmbedding) -> PosteriorEmbedding:
    """Posterior of ``mu_P - mu_Q`` for independent posteriors on one grid."""
    if post_p.eval_points.shape != post_q.eval_points.shape or not np.array_equal(
        post_p.eval_points, post_q.eval_points
    ):
        raise InvalidInputError("witness requires identical evaluation points")
    return PosteriorEmbedding(
        eval_points=post_p.eval_points,
        mean=post_p.mean - post_q.mean,
        covariance=post_p.covariance + post_q.covariance,
    )
