"""Acquisition functions and their maximization over a box."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from bayesattack.gp import GPState, gp_posterior_grad

SIGMA_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class AcquisitionKind(str, enum.Enum):
    EI = "ei"
    PI = "pi"
    UCB = "ucb"
    POSTERIOR_MEAN = "mean"


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: AcquisitionKind = AcquisitionKind.EI
    best_value: float = 0.0
    ucb_beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AcquisitionKind(self.kind))
        if (self.kind is AcquisitionKind.UCB) != (self.ucb_beta is not None):
            raise ValueError("ucb_beta must be given exactly when kind is UCB")
        if self.ucb_beta is not None and not self.ucb_beta > 0:
            raise ValueError("ucb_beta must be positive")


@dataclass(frozen=True, eq=False)
class SearchBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).ravel()
        hi = np.asarray(self.upper, dtype=np.float64).ravel()
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("SearchBox needs lower < upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, half_width: float, dim: int) -> "SearchBox":
        return cls(np.full(dim, -half_width), np.full(dim, half_width))

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)


def _normpdf(z):
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def expected_improvement(mean: float, std: float, best: float) -> float:
    """E[max(f - best, 0)] for f ~ N(mean, std^2)."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if std <= SIGMA_FLOOR:
        return max(mean - best, 0.0)
    z = (mean - best) / std
    return max(std * (z * float(ndtr(z)) + _normpdf(z)), 0.0)


def probability_of_improvement(mean: float, std: float, best: float) -> float:
    if std <= SIGMA_FLOOR:
        return 1.0 if mean > best else 0.0
    return float(ndtr((mean - best) / std))


def upper_confidence_bound(mean: float, std: float, beta: float) -> float:
    return mean + math.sqrt(beta) * std


def acquisition_value_and_grad(gp: GPState, spec: AcquisitionSpec, x):
    """Acquisition value at ``x`` and its gradient with respect to ``x``."""
    mean, var, dmean, dvar = gp_posterior_grad(gp, x)
    kind = spec.kind
    if kind is AcquisitionKind.POSTERIOR_MEAN:
        return mean, dmean
    std = math.sqrt(var) if var > 0 else 0.0
    if std <= SIGMA_FLOOR:
        # deterministic branch: treat the posterior as a point mass
        if kind is AcquisitionKind.EI:
            return max(mean - spec.best_value, 0.0), np.zeros_like(dmean)
        if kind is AcquisitionKind.PI:
            return probability_of_improvement(mean, 0.0, spec.best_value), np.zeros_like(dmean)
        return mean, dmean
    dstd = dvar / (2.0 * std)
    if kind is AcquisitionKind.UCB:
        rb = math.sqrt(spec.ucb_beta)
        return mean + rb * std, dmean + rb * dstd
    z = (mean - spec.best_value) / std
    pdf = _normpdf(z)
    cdf = float(ndtr(z))
    if kind is AcquisitionKind.EI:
        value = std * (z * cdf + pdf)
        return max(value, 0.0), cdf * dmean + pdf * dstd
    # PI: dPhi(z) = pdf(z) * (dmean - z dstd) / std
    return cdf, pdf * (dmean - z * dstd) / std


def maximize_acquisition(
    gp: GPState,
    spec: AcquisitionSpec,
    box: SearchBox,
    restarts: int = 10,
    rng=None,
    incumbent=None,
    maxiter: int = 50,
    gtol: float = 1e-6,
):
    """Multi-start bounded L-BFGS ascent; returns the best point found.

    Starts are ``restarts`` uniform draws from the box plus ``incumbent``
    when given. The winner is taken over every trajectory end point and
    every start point.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(rng)
    starts = list(box.sample(rng, restarts))
    if incumbent is not None:
        starts.append(box.clip(np.asarray(incumbent, dtype=np.float64).ravel()))
    # argmax is invariant to a positive rescaling; keep gradients O(1)
    scale = 1.0 / math.sqrt(gp.hyper.signal_variance)
    if spec.kind is AcquisitionKind.PI:
        scale = 1.0

    def negative(x):
        value, grad = acquisition_value_and_grad(gp, spec, x)
        return -scale * value, -scale * grad

    bounds = list(zip(box.lower, box.upper))
    best_x, best_v = None, -np.inf
    for s in starts:
        v0 = -negative(s)[0]
        if v0 > best_v:
            best_x, best_v = s, v0
        res = optimize.minimize(
            negative, s, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": maxiter, "maxcor": 10, "gtol": gtol},
        )
        x = box.clip(res.x)
        v = -negative(x)[0]
        if v > best_v:
            best_x, best_v = x, v
    return box.clip(best_x)
