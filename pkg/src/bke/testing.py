"""Kernel two-sample (MMD) and independence (HSIC) tests with permutation
calibration, plus posterior bands for the witness function."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .embedding import EmpiricalEmbedding, posterior
from .errors import InvalidInputError
from .kernels import GramKind, SEKernelParams, as_points, gram
from .learn import HyperPosterior

PERM_BATCH = 64


class MMDVariant(str, enum.Enum):
    BIASED = "biased"
    UNBIASED = "unbiased"


class StatisticKind(str, enum.Enum):
    MMD2 = "mmd2"
    HSIC = "hsic"


@dataclass
class TestResult:
    statistic: float
    p_value: float
    n_permutations: int
    alpha: float
    reject: bool
    kernel: SEKernelParams
    kernel_y: Optional[SEKernelParams] = None
    kind: str = StatisticKind.MMD2.value

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
            "alpha": self.alpha,
            "reject": self.reject,
            "kernel": self.kernel.to_dict(),
        }
        if self.kernel_y is not None:
            out["kernel_y"] = self.kernel_y.to_dict()
        return out


@dataclass
class WitnessBand:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    def excludes_zero(self) -> np.ndarray:
        return (self.lower > 0) | (self.upper < 0)


def _two_samples(x, y):
    X = as_points(x, "x")
    Y = as_points(y, "y")
    if X.shape[1] != Y.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def mmd2(x, y, params: SEKernelParams, variant=MMDVariant.BIASED) -> float:
    """Squared MMD between the empirical embeddings of ``x`` and ``y``."""
    variant = MMDVariant(variant)
    X, Y = _two_samples(x, y)
    n, n2 = len(X), len(Y)
    Kxx = gram(X, None, params, GramKind.K)
    Kyy = gram(Y, None, params, GramKind.K)
    Kxy = gram(X, Y, params, GramKind.K)
    if variant is MMDVariant.BIASED:
        return float(Kxx.mean() + Kyy.mean() - 2.0 * Kxy.mean())
    if n < 2 or n2 < 2:
        raise InvalidInputError("the unbiased MMD needs at least 2 points per sample")
    xx = (Kxx.sum() - np.trace(Kxx)) / (n * (n - 1))
    yy = (Kyy.sum() - np.trace(Kyy)) / (n2 * (n2 - 1))
    return float(xx + yy - 2.0 * Kxy.mean())


def _mmd2_from_labels(K: np.ndarray, ind: np.ndarray, n: int, n2: int, variant: MMDVariant) -> np.ndarray:
    """MMD for each column of the 0/1 membership matrix ``ind`` (first sample = 1)."""
    total = K.sum()
    rows = K.sum(axis=1)
    s_xx = np.einsum("ib,ib->b", ind, K @ ind)
    s_xy = rows @ ind - s_xx
    s_yy = total - 2.0 * s_xy - s_xx
    if variant is MMDVariant.BIASED:
        return s_xx / n**2 + s_yy / n2**2 - 2.0 * s_xy / (n * n2)
    diag = np.diag(K)
    tr_x = diag @ ind
    tr_y = diag.sum() - tr_x
    return (s_xx - tr_x) / (n * (n - 1)) + (s_yy - tr_y) / (n2 * (n2 - 1)) - 2.0 * s_xy / (n * n2)


def hsic(x, y, params_x: SEKernelParams, params_y: SEKernelParams) -> float:
    """Biased HSIC, ``trace(K H L H) / n^2``."""
    X = as_points(x, "x")
    Y = as_points(y, "y")
    if len(X) != len(Y):
        raise InvalidInputError(f"HSIC needs paired samples, got {len(X)} and {len(Y)} rows")
    if len(X) < 4:
        raise InvalidInputError("HSIC needs at least 4 pairs")
    Kc = _centre(gram(X, None, params_x, GramKind.K))
    L = gram(Y, None, params_y, GramKind.K)
    return float(np.sum(Kc * L) / len(X) ** 2)


def _centre(K: np.ndarray) -> np.ndarray:
    return K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()


def _p_value(observed: float, perm: np.ndarray) -> float:
    # tolerance so that exact ties survive floating-point noise
    tol = 1e-12 * max(1.0, abs(observed))
    return float((1 + np.count_nonzero(perm >= observed - tol)) / (1 + len(perm)))


def permutation_test(
    statistic_kind,
    x,
    y,
    params: SEKernelParams,
    params_y: Optional[SEKernelParams] = None,
    n_permutations: int = 500,
    alpha: float = 0.05,
    seed: int = 0,
    variant=MMDVariant.BIASED,
) -> TestResult:
    """Permutation test of equal distributions (MMD2) or independence (HSIC).

    MMD2 re-splits the pooled sample preserving sizes; HSIC permutes the
    rows of ``y``. ``p = (1 + #{perm >= observed}) / (1 + n_permutations)``.
    """
    kind = StatisticKind(statistic_kind)
    if n_permutations < 100:
        raise InvalidInputError("use at least 100 permutations")
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if kind is StatisticKind.MMD2:
        variant = MMDVariant(variant)
        X, Y = _two_samples(x, y)
        n, n2 = len(X), len(Y)
        if variant is MMDVariant.UNBIASED and min(n, n2) < 2:
            raise InvalidInputError("the unbiased MMD needs at least 2 points per sample")
        Z = np.vstack([X, Y])
        K = gram(Z, None, params, GramKind.K)
        N = n + n2
        base = np.zeros((N, 1))
        base[:n] = 1.0
        observed = float(_mmd2_from_labels(K, base, n, n2, variant)[0])
        perm = np.empty(n_permutations)
        for start in range(0, n_permutations, PERM_BATCH):
            b = min(PERM_BATCH, n_permutations - start)
            ind = np.zeros((N, b))
            for j in range(b):
                ind[rng.permutation(N)[:n], j] = 1.0
            perm[start : start + b] = _mmd2_from_labels(K, ind, n, n2, variant)
        params_y = None
    else:
        if params_y is None:
            params_y = params
        X = as_points(x, "x")
        Y = as_points(y, "y")
        if len(X) != len(Y):
            raise InvalidInputError(f"HSIC needs paired samples, got {len(X)} and {len(Y)} rows")
        if len(X) < 4:
            raise InvalidInputError("HSIC needs at least 4 pairs")
        n = len(X)
        Kc = _centre(gram(X, None, params, GramKind.K))
        L = gram(Y, None, params_y, GramKind.K)
        observed = float(np.sum(Kc * L) / n**2)
        perm = np.empty(n_permutations)
        for j in range(n_permutations):
            p = rng.permutation(n)
            perm[j] = np.sum(Kc * L[np.ix_(p, p)]) / n**2
    p_value = _p_value(observed, perm)
    return TestResult(
        statistic=observed,
        p_value=p_value,
        n_permutations=n_permutations,
        alpha=alpha,
        reject=p_value <= alpha,
        kernel=params,
        kernel_y=params_y,
        kind=kind.value,
    )


def witness_band(
    data_p,
    data_q,
    grid,
    hyper: Union[SEKernelParams, HyperPosterior],
    level: float = 0.8,
    n_draws: int = 800,
    seed: int = 0,
    eta=None,
) -> WitnessBand:
    """Monte-Carlo posterior band for ``mu_P - mu_Q`` on ``grid``.

    Each draw picks hyperparameters (fixed, or uniformly among posterior
    draws), samples one function from each posterior embedding and takes the
    difference. The band is the pointwise ``(1 -/+ level) / 2`` quantiles.
    """
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    if n_draws < 1:
        raise InvalidInputError("n_draws must be positive")
    P, Q = _two_samples(data_p, data_q)
    G = as_points(grid, "grid")
    if G.shape[1] != P.shape[1]:
        raise InvalidInputError("grid dimension does not match the data")
    rng = np.random.default_rng(seed)

    def posteriors(params):
        return posterior(EmpiricalEmbedding(P, params), G), posterior(EmpiricalEmbedding(Q, params), G)

    if isinstance(hyper, SEKernelParams):
        post_p, post_q = posteriors(hyper)
        draws = post_p.sample(rng, n_draws) - post_q.sample(rng, n_draws)
    else:
        if len(hyper.draws) == 0:
            raise InvalidInputError("hyperparameter posterior has no draws")
        picks = rng.integers(0, len(hyper.draws), size=n_draws)
        cache = {}
        draws = np.empty((n_draws, len(G)))
        kw = {} if eta is None else {"eta": eta}
        for i, k in enumerate(picks):
            # rejected proposals repeat values, so key on the values themselves
            key = tuple(float(v) for v in hyper.draws[k])
            if key not in cache:
                cache[key] = posteriors(SEKernelParams(theta=key[0], tau2=key[1], **kw))
            post_p, post_q = cache[key]
            draws[i] = post_p.sample(rng, 1)[0] - post_q.sample(rng, 1)[0]
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    lower, upper = np.quantile(draws, [lo_q, hi_q], axis=0)
    mean = draws.mean(axis=0)
    return WitnessBand(grid=G, mean=mean, lower=lower, upper=upper, level=level)
