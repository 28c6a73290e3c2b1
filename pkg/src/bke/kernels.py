"""Squared-exponential kernel, its self-convolution prior kernel, Gram
matrices and the median heuristic.

The base kernel is always parameterized as

    k(x, y) = exp(-||x - y||^2 / (2 theta^2))

and the prior kernel ``r`` is the convolution of ``k`` with itself under a
measure ``nu``: either Lebesgue measure (``eta=LEBESGUE_LIMIT``) or an
unnormalized isotropic Gaussian ``exp(-||u||^2 / (2 eta^2)) du``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConditioningError, DegenerateDataError, InvalidInputError


class _LebesgueLimit:
    """Sentinel for the infinite-width prior measure."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "LEBESGUE_LIMIT"

    def __reduce__(self):
        return (_LebesgueLimit, ())


LEBESGUE_LIMIT = _LebesgueLimit()


class GramKind(str, enum.Enum):
    K = "K"  # base kernel k_theta
    R = "R"  # prior kernel r_theta


class MedianMode(str, enum.Enum):
    NO_HALF = "no-half"  # exp(-d^2 / l^2)
    HALF = "half"  # exp(-d^2 / (2 l^2))


@dataclass(frozen=True)
class SEKernelParams:
    """Hyperparameters of the isotropic SE model.

    Attributes:
        theta: lengthscale, in data units.
        eta: width of the Gaussian prior measure, or ``LEBESGUE_LIMIT``.
        tau2: likelihood variance of the empirical embedding.
    """

    theta: float
    eta: Union[float, _LebesgueLimit] = LEBESGUE_LIMIT
    tau2: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise InvalidInputError(f"theta must be positive and finite, got {self.theta!r}")
        if not (np.isfinite(self.tau2) and self.tau2 > 0):
            raise InvalidInputError(f"tau2 must be positive and finite, got {self.tau2!r}")
        if self.eta is not LEBESGUE_LIMIT:
            if not (np.isfinite(self.eta) and self.eta > 0):
                raise InvalidInputError(f"eta must be positive or LEBESGUE_LIMIT, got {self.eta!r}")

    @property
    def lebesgue(self) -> bool:
        return self.eta is LEBESGUE_LIMIT

    def with_(self, **changes) -> "SEKernelParams":
        fields = {"theta": self.theta, "eta": self.eta, "tau2": self.tau2}
        fields.update(changes)
        return SEKernelParams(**fields)

    def to_dict(self) -> dict:
        return {
            "theta": float(self.theta),
            "eta": None if self.lebesgue else float(self.eta),
            "tau2": float(self.tau2),
        }


def as_points(a, name: str = "points") -> np.ndarray:
    """Coerce to a finite 2-D float array (a 1-D input is one column)."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _pair(x, y):
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def se_eval(x, y, params: SEKernelParams) -> float:
    x, y = _pair(x, y)
    d2 = float(np.sum((x - y) ** 2))
    return math.exp(-d2 / (2.0 * params.theta**2))


def se_grad_x(x, y, params: SEKernelParams) -> np.ndarray:
    """Gradient of ``k(x, y)`` with respect to ``x``: ``-k(x, y) (x - y) / theta^2``."""
    x, y = _pair(x, y)
    return -se_eval(x, y, params) * (x - y) / params.theta**2


def _r_from_sq(d2_diff, s2_mid, D: int, params: SEKernelParams):
    """r_theta given ||x - y||^2 and ||(x + y) / 2||^2 (arrays broadcast)."""
    th2 = params.theta**2
    out = np.exp(-d2_diff / (4.0 * th2))
    if params.lebesgue:
        return math.pi ** (D / 2) * params.theta**D * out
    eta2 = params.eta**2
    scale = (2.0 * math.pi) ** (D / 2) * (2.0 / th2 + 1.0 / eta2) ** (-D / 2)
    return scale * out * np.exp(-0.5 * s2_mid / (th2 / 2.0 + eta2))


def r_eval(x, y, params: SEKernelParams) -> float:
    x, y = _pair(x, y)
    d2 = float(np.sum((x - y) ** 2))
    s2 = float(np.sum(((x + y) / 2.0) ** 2))
    return float(_r_from_sq(d2, s2, x.shape[0], params))


def gram(points_a, points_b=None, params: SEKernelParams = None, kind=GramKind.K) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k or r at ``(a_i, b_j)``.

    With ``points_b`` omitted the square Gram matrix over ``points_a`` is
    returned, symmetrized exactly.
    """
    if params is None:
        raise InvalidInputError("params is required")
    kind = GramKind(kind)
    a = as_points(points_a, "points_a")
    b = a if points_b is None else as_points(points_b, "points_b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    d2 = cdist(a, b, "sqeuclidean")
    if kind is GramKind.K:
        G = np.exp(-d2 / (2.0 * params.theta**2))
    else:
        if params.lebesgue:
            s2 = 0.0
        else:
            na = np.sum(a**2, axis=1)[:, None]
            nb = np.sum(b**2, axis=1)[None, :]
            # ||(a+b)/2||^2 = (||a||^2 + ||b||^2 + 2 a.b) / 4
            s2 = np.maximum((na + nb + 2.0 * a @ b.T) / 4.0, 0.0)
        G = _r_from_sq(d2, s2, a.shape[1], params)
    if points_b is None:
        G = 0.5 * (G + G.T)
    return G


def median_heuristic(data, mode=MedianMode.NO_HALF) -> float:
    """Lengthscale from the median pairwise distance.

    ``l = median ||x_i - x_j||`` over pairs ``i < j``. The returned theta
    reproduces the requested convention under ``exp(-d^2 / (2 theta^2))``:
    ``l / sqrt(2)`` for NO_HALF and ``l`` for HALF.
    """
    mode = MedianMode(mode)
    X = as_points(data, "data")
    if X.shape[0] < 2:
        raise InvalidInputError("median heuristic needs at least 2 points")
    ell = float(np.median(pdist(X)))
    if ell <= 0.0:
        raise DegenerateDataError("median pairwise distance is zero")
    return ell / math.sqrt(2.0) if mode is MedianMode.NO_HALF else ell


JITTER_RETRIES = 3
JITTER_SCALE = 1e-10


def jittered_cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``A``, repairing the diagonal if needed.

    On failure ``1e-10 * trace/n`` is added to the diagonal, growing tenfold
    per retry, for at most three retries.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    base = JITTER_SCALE * max(np.trace(A) / n, np.finfo(float).tiny)
    for attempt in range(JITTER_RETRIES):
        jitter = base * 10.0**attempt
        try:
            return np.linalg.cholesky(A + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError(f"Cholesky failed after {JITTER_RETRIES} jitter retries")
