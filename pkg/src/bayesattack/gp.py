"""Gaussian-process regression with a Matern-5/2 ARD kernel.

The surrogate has a constant mean ``mean_const`` and covariance

    k(x, x') = s * (1 + sqrt(5) r + 5/3 r^2) * exp(-sqrt(5) r),
    r^2 = sum_i (x_i - x'_i)^2 / l_i^2,

plus a small diagonal ``noise_variance`` that acts purely as jitter.
Hyperparameters are fitted by maximizing the log marginal likelihood plus
log-normal priors (MAP), on log-transformed parameters.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from bayesattack._backend import kernels
from bayesattack.errors import NumericalError

DEFAULT_NOISE = 1e-6
MAX_NOISE = 1e-4
_LOG_2PI = math.log(2.0 * math.pi)


class FitWarning(UserWarning):
    """Hyperparameter fitting fell back to the prior defaults."""


@dataclass(frozen=True, eq=False)
class KernelHyper:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float = DEFAULT_NOISE

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=np.float64))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty vector")
        if not (self.signal_variance > 0 and self.noise_variance > 0 and np.all(ls > 0)):
            raise ValueError("kernel hyperparameters must be strictly positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def replace(self, **changes) -> "KernelHyper":
        fields = {
            "signal_variance": self.signal_variance,
            "lengthscales": self.lengthscales,
            "noise_variance": self.noise_variance,
        }
        fields.update(changes)
        return KernelHyper(**fields)


@dataclass(frozen=True, eq=False)
class GPState:
    """Immutable conditioned GP. ``chol`` is the lower factor of K + noise*I."""

    inputs: np.ndarray
    values: np.ndarray
    mean_const: float
    hyper: KernelHyper
    chol: np.ndarray
    alpha: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _as_points(x, dim=None) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {X.shape[1]}")
    return X


def matern52(x, x2, hyper: KernelHyper) -> float:
    """Matern-5/2 covariance between two single points."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x2, dtype=np.float64).ravel()
    if a.size != b.size or a.size != hyper.dim:
        raise ValueError(
            f"dimension mismatch: {a.size}, {b.size} vs {hyper.dim} lengthscales"
        )
    return float(kernel_matrix(a[None, :], b[None, :], hyper)[0, 0])


def kernel_matrix(X1, X2, hyper: KernelHyper) -> np.ndarray:
    """Noise-free cross-covariance matrix between two point sets."""
    A = _as_points(X1, hyper.dim)
    B = _as_points(X2, hyper.dim)
    return kernels.matern52_cov(A, B, hyper.lengthscales, hyper.signal_variance)


def gp_fit(inputs, values, hyper: KernelHyper, mean_const: float) -> GPState:
    """Condition the GP on ``(inputs, values)`` with fixed hyperparameters.

    The jitter is multiplied by 10 on each Cholesky failure until it
    exceeds ``MAX_NOISE``; the jitter actually used is recorded in
    ``state.hyper``.
    """
    X = _as_points(inputs, hyper.dim)
    y = np.asarray(values, dtype=np.float64).ravel()
    if X.shape[0] < 1 or y.size != X.shape[0]:
        raise ValueError("need n >= 1 inputs with one value each")
    K = kernels.matern52_cov(X, X, hyper.lengthscales, hyper.signal_variance)
    noise = hyper.noise_variance
    while True:
        try:
            L = linalg.cholesky(K + noise * np.eye(X.shape[0]), lower=True)
            break
        except linalg.LinAlgError:
            noise *= 10.0
            if noise > MAX_NOISE * (1 + 1e-9):
                raise NumericalError(
                    f"Cholesky failed for n={X.shape[0]} points even with jitter "
                    f"{MAX_NOISE:g}; min eigenvalue {np.linalg.eigvalsh(K)[0]:.3e}"
                ) from None
    if noise != hyper.noise_variance:
        hyper = hyper.replace(noise_variance=noise)
    alpha = linalg.cho_solve((L, True), y - mean_const)
    return GPState(X, y, float(mean_const), hyper, L, alpha)


def gp_append(state: GPState, x, value: float) -> GPState:
    """Add one observation by extending the Cholesky factor (fixed hyperparameters)."""
    xn = _as_points(x, state.dim)
    k = kernel_matrix(state.inputs, xn, state.hyper)[:, 0]
    kss = state.hyper.signal_variance + state.hyper.noise_variance
    l21 = linalg.solve_triangular(state.chol, k, lower=True)
    d2 = kss - l21 @ l21
    inputs = np.vstack([state.inputs, xn])
    values = np.append(state.values, float(value))
    if not d2 > 1e-12 * kss:
        return gp_fit(inputs, values, state.hyper, state.mean_const)
    n = state.n
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = state.chol
    L[n, :n] = l21
    L[n, n] = math.sqrt(d2)
    alpha = linalg.cho_solve((L, True), values - state.mean_const)
    return GPState(inputs, values, state.mean_const, state.hyper, L, alpha)


def gp_posterior(state: GPState, x) -> tuple[float, float]:
    """Posterior mean and (latent, noise-free) variance at a single point."""
    xs = _as_points(x, state.dim)
    if xs.shape[0] != 1:
        raise ValueError("gp_posterior takes a single point")
    k = kernels.matern52_cov(
        state.inputs, xs, state.hyper.lengthscales, state.hyper.signal_variance
    )[:, 0]
    mean = state.mean_const + k @ state.alpha
    v = linalg.solve_triangular(state.chol, k, lower=True)
    var = state.hyper.signal_variance - v @ v
    return float(mean), float(max(var, 0.0))


def gp_posterior_grad(state: GPState, x):
    """Posterior mean, variance and their gradients with respect to ``x``.

    The variance is returned unclamped so callers can detect the
    degenerate branch themselves.
    """
    xv = np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())
    if xv.size != state.dim:
        raise ValueError(f"expected a point of dimension {state.dim}, got {xv.size}")
    h = state.hyper
    k, dk = kernels.matern52_cross_grad(xv, state.inputs, h.lengthscales, h.signal_variance)
    mean = state.mean_const + k @ state.alpha
    dmean = dk.T @ state.alpha
    v = linalg.solve_triangular(state.chol, k, lower=True)
    w = linalg.solve_triangular(state.chol, v, lower=True, trans="T")
    var = h.signal_variance - v @ v
    dvar = -2.0 * (dk.T @ w)
    return float(mean), float(var), dmean, dvar


def log_marginal_likelihood(state: GPState) -> tuple[float, np.ndarray]:
    """Log evidence and its gradient.

    Gradient order: ``[log signal_variance, log lengthscale_1..d,
    log noise_variance, mean_const]``.
    """
    n = state.n
    h = state.hyper
    resid = state.values - state.mean_const
    value = (
        -0.5 * resid @ state.alpha
        - np.sum(np.log(np.diag(state.chol)))
        - 0.5 * n * _LOG_2PI
    )
    Kinv = linalg.cho_solve((state.chol, True), np.eye(n))
    W = np.outer(state.alpha, state.alpha) - Kinv
    Kf = kernels.matern52_cov(state.inputs, state.inputs, h.lengthscales, h.signal_variance)
    grad = np.empty(h.dim + 3)
    grad[0] = 0.5 * np.sum(W * Kf)
    grad[1 : h.dim + 1] = 0.5 * kernels.matern52_lengthscale_grad(
        state.inputs, h.lengthscales, h.signal_variance, np.ascontiguousarray(W)
    )
    grad[h.dim + 1] = 0.5 * h.noise_variance * np.trace(W)
    grad[h.dim + 2] = np.sum(state.alpha)
    return float(value), grad


@dataclass(frozen=True)
class HyperPrior:
    """Log-normal priors on the kernel amplitudes; flat prior on the mean.

    ``log(lengthscale / scale) ~ N(0, lengthscale_sd^2)`` and
    ``log(signal_variance) ~ N(signal_loc, signal_sd^2)``. The optimizer is
    confined to ``bound_sds`` standard deviations around each prior
    location. Use :meth:`for_box` to get the scale used by the attack.
    """

    scale: float = 1.0
    lengthscale_sd: float = 1.0
    signal_loc: float = 0.0
    signal_sd: float = 1.0
    bound_sds: float = 6.0

    @classmethod
    def for_box(cls, half_width: float, dim: int, **kwargs) -> "HyperPrior":
        """Prior for a ``[-half_width, half_width]^dim`` search box.

        The lengthscale location grows like ``sqrt(dim)``, the typical
        distance between points of the box. With a dimension-free location
        the kernel matrix is nearly diagonal once dim exceeds ~10, the
        posterior variance is flat, and the acquisition carries no signal.
        """
        return cls(scale=half_width * math.sqrt(dim), **kwargs)

    @property
    def lengthscale_loc(self) -> float:
        return math.log(self.scale)

    def signal_floor(self) -> float:
        return math.exp(self.signal_loc - self.bound_sds * self.signal_sd)

    def log_density(self, log_sv: float, log_ls: np.ndarray):
        """Log prior on the log-parameters and its gradient."""
        zs = (log_sv - self.signal_loc) / self.signal_sd
        zl = (log_ls - self.lengthscale_loc) / self.lengthscale_sd
        value = -0.5 * zs * zs - 0.5 * float(zl @ zl)
        return value, -zs / self.signal_sd, -zl / self.lengthscale_sd

    def bounds(self, dim: int):
        sb = self.bound_sds * self.signal_sd
        lb = self.bound_sds * self.lengthscale_sd
        return (
            [(self.signal_loc - sb, self.signal_loc + sb)]
            + [(self.lengthscale_loc - lb, self.lengthscale_loc + lb)] * dim
            + [(None, None)]
        )


def log_posterior(inputs, values, theta, prior: HyperPrior, noise_variance=DEFAULT_NOISE):
    """Unnormalized log posterior of packed ``theta = [log s, log l..., mean]``."""
    dim = len(theta) - 2
    hyper = KernelHyper(math.exp(theta[0]), np.exp(theta[1 : dim + 1]), noise_variance)
    state = gp_fit(inputs, values, hyper, theta[-1])
    lml, g = log_marginal_likelihood(state)
    lp, gs, gl = prior.log_density(theta[0], np.asarray(theta[1 : dim + 1]))
    grad = np.empty(dim + 2)
    grad[0] = g[0] + gs
    grad[1 : dim + 1] = g[1 : dim + 1] + gl
    grad[-1] = g[-1]
    return lml + lp, grad


def fit_hyperparameters(
    inputs,
    values,
    prior: HyperPrior | None = None,
    restarts: int = 1,
    rng=None,
    noise_variance: float = DEFAULT_NOISE,
    maxiter: int = 200,
) -> tuple[KernelHyper, float]:
    """MAP estimate of the kernel hyperparameters and constant mean.

    The first ascent starts from the prior mode; later restarts start from
    prior draws. The best point among all trajectories and their starting
    points is returned. If every restart fails, the prior mode is returned
    and a :class:`FitWarning` is issued.
    """
    X = _as_points(inputs)
    y = np.asarray(values, dtype=np.float64).ravel()
    if X.shape[0] < 2:
        raise ValueError("fit_hyperparameters needs at least 2 observations")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    prior = prior or HyperPrior()
    rng = np.random.default_rng(rng)
    dim = X.shape[1]
    bounds = prior.bounds(dim)

    mode = np.concatenate([[prior.signal_loc], np.full(dim, prior.lengthscale_loc), [y.mean()]])
    starts = [mode]
    for _ in range(restarts - 1):
        s = mode.copy()
        s[0] = rng.normal(prior.signal_loc, prior.signal_sd)
        s[1 : dim + 1] = rng.normal(prior.lengthscale_loc, prior.lengthscale_sd, size=dim)
        lo = np.array([b[0] for b in bounds[:-1]])
        hi = np.array([b[1] for b in bounds[:-1]])
        s[:-1] = np.clip(s[:-1], lo, hi)
        starts.append(s)

    def negative(theta):
        value, grad = log_posterior(X, y, theta, prior, noise_variance)
        return -value, -grad

    best_theta, best_value = None, -np.inf
    failures = 0
    for s in starts:
        try:
            start_value = -negative(s)[0]
            if start_value > best_value:
                best_theta, best_value = s, start_value
            res = optimize.minimize(
                negative, s, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": maxiter},
            )
        except NumericalError:
            failures += 1
            continue
        if not np.isfinite(res.fun):
            failures += 1
            continue
        if -res.fun > best_value:
            best_theta, best_value = res.x, -res.fun

    if failures == len(starts) or best_theta is None:
        warnings.warn("all hyperparameter restarts failed; using prior mode", FitWarning)
        best_theta = mode
    hyper = KernelHyper(
        math.exp(best_theta[0]), np.exp(best_theta[1 : dim + 1]), noise_variance
    )
    return hyper, float(best_theta[-1])
