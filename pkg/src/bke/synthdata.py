"""Seeded generators for the synthetic benchmark data sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class GridMixtureSpec:
    """Gaussian mixture with one component per node of a square grid.

    Unrotated components have unit isotropic covariance. Rotated ones have
    eigenvalues ``sqrt(eps)`` and ``1/sqrt(eps)`` (unit geometric mean) and a
    random orientation per component; ``eps < 1`` is read as ``1/eps``.
    """

    grid_side: int = 3
    spacing: float = 10.0
    eps: float = 1.0
    per_component: int = 100
    rotated: bool = False

    def __post_init__(self):
        if self.grid_side < 1 or self.per_component < 1:
            raise InvalidInputError("grid_side and per_component must be at least 1")
        if not (np.isfinite(self.spacing) and self.spacing >= 0):
            raise InvalidInputError("spacing must be a nonnegative real")
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise InvalidInputError("eps must be positive")

    @property
    def ratio(self) -> float:
        return max(self.eps, 1.0 / self.eps)

    def centers(self) -> np.ndarray:
        offs = (np.arange(self.grid_side) - (self.grid_side - 1) / 2.0) * self.spacing
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


def gen_grid_mixture(spec: GridMixtureSpec, seed: int) -> np.ndarray:
    """Stratified sample: exactly ``per_component`` rows per component, in
    component order."""
    rng = np.random.default_rng(seed)
    centers = spec.centers()
    k = len(centers)
    angles = rng.uniform(0.0, math.pi, size=k) if spec.rotated else np.zeros(k)
    sd = np.array([spec.ratio**0.25, spec.ratio**-0.25])
    blocks = []
    for c in range(k):
        z = rng.standard_normal((spec.per_component, 2))
        if spec.rotated:
            a = angles[c]
            rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            z = (z * sd) @ rot.T
        blocks.append(centers[c] + z)
    return np.vstack(blocks)


LAPLACE_SCALE = math.sqrt(0.5)


def gen_normal_laplace(n: int, seed: int):
    """``n`` draws from N(0, 1) and ``n`` from Laplace(0, sqrt(0.5)), both
    with unit variance. Laplace draws use the inverse CDF."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    normal = rng.standard_normal(n)
    u = rng.uniform(-0.5, 0.5, size=n)
    laplace = -LAPLACE_SCALE * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return normal[:, None], laplace[:, None]
