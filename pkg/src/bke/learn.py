"""Kernel hyperparameter learning from the marginal pseudolikelihood.

Two routes: empirical Bayes (log-grid scan refined by golden-section
search) and random-walk Metropolis over ``(log theta, log tau2)`` with
Gamma(1, 1) priors on both hyperparameters.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BKEError, InvalidInputError, OptimizationFailedError
from .kernels import LEBESGUE_LIMIT, SEKernelParams, as_points
from .pseudolik import Landmarks, log_pseudolik_fast

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INIT_ATTEMPTS = 100


@dataclass(frozen=True)
class ThetaGrid:
    lo: float = 0.05
    hi: float = 50.0
    count: int = 60

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise InvalidInputError(f"grid needs 0 < lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.count < 2:
            raise InvalidInputError(f"grid count must be at least 2, got {self.count}")

    def values(self) -> np.ndarray:
        return np.exp(np.linspace(math.log(self.lo), math.log(self.hi), self.count))

    @classmethod
    def parse(cls, text: str) -> "ThetaGrid":
        lo, hi, count = text.split(":")
        return cls(float(lo), float(hi), int(count))


@dataclass
class BKLResult:
    theta_hat: float
    tau2: float
    curve: list  # (theta, total) on the grid
    local_optima: list
    refinement: list = field(default_factory=list)  # (theta, total) from the line search
    best_total: float = -math.inf

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "tau2": self.tau2,
            "best_total": self.best_total,
            "local_optima": list(self.local_optima),
            "curve": [{"theta": t, "loglik": v} for t, v in self.curve],
        }


def _objective(data, landmarks, eta, tau2):
    def f(theta: float) -> float:
        params = SEKernelParams(theta=theta, eta=eta, tau2=tau2)
        try:
            ev = log_pseudolik_fast(data, landmarks, params)
        except BKEError:
            return -math.inf
        return ev.total if np.isfinite(ev.total) else -math.inf

    return f


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float):
    """Maximize ``f`` on ``[a, b]`` until the bracket is narrower than ``tol``.

    Returns every ``(x, f(x))`` evaluated, in order.
    """
    evals = []

    def g(x):
        v = f(x)
        evals.append((x, v))
        return v

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
    return evals


def bkl_optimize(
    data,
    landmarks: Landmarks,
    tau2: float = 1.0,
    grid: ThetaGrid = ThetaGrid(),
    eta=LEBESGUE_LIMIT,
    refine: bool = True,
    rel_tol: float = 1e-3,
) -> BKLResult:
    """Empirical-Bayes lengthscale: argmax of the marginal pseudolikelihood.

    Scans a log-uniform grid, records interior local maxima, then refines the
    best grid bracket by golden-section search in log theta. Ties go to the
    smaller theta.
    """
    X = as_points(data, "data")
    f = _objective(X, landmarks, eta, tau2)
    thetas = grid.values()
    totals = np.array([f(float(t)) for t in thetas])
    if not np.any(np.isfinite(totals)):
        raise OptimizationFailedError("every grid evaluation was degenerate")
    curve = [(float(t), float(v)) for t, v in zip(thetas, totals)]
    local = [
        float(thetas[i])
        for i in range(1, len(thetas) - 1)
        if totals[i] > totals[i - 1] and totals[i] >= totals[i + 1]
    ]
    best = int(np.argmax(totals))  # first occurrence: smaller theta wins ties
    candidates = [(float(thetas[best]), float(totals[best]))]
    refinement = []
    if refine:
        lo = math.log(thetas[max(best - 1, 0)])
        hi = math.log(thetas[min(best + 1, len(thetas) - 1)])
        evals = golden_section_max(lambda u: f(math.exp(u)), lo, hi, math.log1p(rel_tol))
        refinement = [(math.exp(u), v) for u, v in evals]
        candidates += refinement
    # max total, then smallest theta
    theta_hat, best_total = min(candidates, key=lambda tv: (-tv[1], tv[0]))
    return BKLResult(
        theta_hat=float(theta_hat),
        tau2=float(tau2),
        curve=curve,
        local_optima=local,
        refinement=refinement,
        best_total=float(best_total),
    )


@dataclass
class HyperPosterior:
    """Pooled post-warmup draws; columns are (theta, tau2)."""

    draws: np.ndarray
    acceptance_rate: float
    warmup_discarded: int
    n_accepted: int = 0
    n_proposed: int = 0
    chains: int = 1
    rhat: dict = field(default_factory=dict)
    chain_draws: Optional[np.ndarray] = None  # (chains, kept, 2)

    @property
    def thetas(self) -> np.ndarray:
        return self.draws[:, 0]

    @property
    def tau2s(self) -> np.ndarray:
        return self.draws[:, 1]


def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat for an array of shape (chains, draws)."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    if n < 2:
        return math.nan
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else math.inf
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))


def log_gamma11(v: float) -> float:
    return -v


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("BKE_THREADS", "1")))
    except ValueError:
        return 1


def mh_sample(
    data,
    landmarks: Landmarks,
    iters: int = 400,
    warmup: int = 200,
    chains: int = 4,
    seed: int = 0,
    proposal_scale: float = 0.15,
    eta=LEBESGUE_LIMIT,
    fixed_tau2: Optional[float] = None,
    thin: int = 1,
    loglik: Optional[Callable[[float, float], float]] = None,
) -> HyperPosterior:
    """Random-walk Metropolis over ``(log theta, log tau2)``.

    The target is the total log-pseudolikelihood plus Gamma(1, 1) log-priors
    plus ``log theta + log tau2`` from the log transform. Chains start
    uniformly in ``[-2, 2]`` on the log scale (redrawn while the target is
    -inf) and chain ``c`` uses seed ``seed + c``. ``iters`` counts warmup iterations.

    ``fixed_tau2`` samples theta alone. ``loglik(theta, tau2)`` replaces the
    pseudolikelihood (used to check the sampler against known targets).
    """
    if not (iters > warmup >= 0):
        raise InvalidInputError(f"need iters > warmup >= 0, got iters={iters}, warmup={warmup}")
    if chains < 1 or thin < 1:
        raise InvalidInputError("chains and thin must be at least 1")
    if not proposal_scale > 0:
        raise InvalidInputError("proposal_scale must be positive")
    if loglik is None:
        X = as_points(data, "data")

        def loglik(theta, tau2):
            try:
                ev = log_pseudolik_fast(X, landmarks, SEKernelParams(theta, eta, tau2))
            except BKEError:
                return -math.inf
            return ev.total if np.isfinite(ev.total) else -math.inf

    dim = 1 if fixed_tau2 is not None else 2

    def log_target(u):
        theta = math.exp(u[0])
        tau2 = fixed_tau2 if dim == 1 else math.exp(u[1])
        if not (np.isfinite(theta) and np.isfinite(tau2)) or theta <= 0 or tau2 <= 0:
            return -math.inf
        lp = log_gamma11(theta) + u[0]
        if dim == 2:
            lp += log_gamma11(tau2) + u[1]
        if not np.isfinite(lp):
            return -math.inf
        return lp + loglik(theta, tau2)

    def run_chain(c):
        rng = np.random.default_rng(seed + c)
        # redraw starts that have zero density; a chain cannot leave one
        for _ in range(INIT_ATTEMPTS):
            u = rng.uniform(-2.0, 2.0, size=dim)
            cur = log_target(u)
            if np.isfinite(cur):
                break
        else:
            log.warning("chain %d: no finite starting point in %d attempts", c, INIT_ATTEMPTS)
        kept = []
        accepted = 0
        for it in range(iters):
            prop = u + proposal_scale * rng.standard_normal(dim)
            log_u = math.log(rng.uniform())
            new = log_target(prop)
            if np.isfinite(new) and (not np.isfinite(cur) or log_u < new - cur):
                u, cur = prop, new
                accepted += 1
            if it >= warmup and (it - warmup) % thin == 0:
                kept.append(u.copy())
        kept = np.exp(np.array(kept))
        if dim == 1:
            kept = np.column_stack([kept[:, 0], np.full(len(kept), fixed_tau2)])
        return kept, accepted

    with ThreadPoolExecutor(max_workers=min(chains, _thread_cap())) as pool:
        results = list(pool.map(run_chain, range(chains)))
    chain_draws = np.stack([r[0] for r in results])
    n_acc = sum(r[1] for r in results)
    n_prop = chains * iters
    rhat = {"theta": split_rhat(np.log(chain_draws[:, :, 0]))}
    if dim == 2:
        rhat["tau2"] = split_rhat(np.log(chain_draws[:, :, 1]))
    for name, value in rhat.items():
        if chains > 1 and not value <= 1.1:
            log.warning("split R-hat for %s is %.3f (> 1.1)", name, value)
    return HyperPosterior(
        draws=chain_draws.reshape(-1, 2),
        acceptance_rate=n_acc / n_prop,
        warmup_discarded=warmup,
        n_accepted=n_acc,
        n_proposed=n_prop,
        chains=chains,
        rhat=rhat,
        chain_draws=chain_draws,
    )
