"""Bayesian-optimization attack loop and a random-search baseline.

Both attacks search a low-dimensional coefficient vector ``c``, project it
onto the eps-ball of the configured norm, map it to image space and query
the oracle with ``clip(x0 + map(c), 0, 1)``. The Bayes attack fits a GP to
the failed queries and picks the next candidate by maximizing an
acquisition function; it stops at the first success or when the query
budget runs out.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from bayesattack.acquisition import (
    AcquisitionKind,
    AcquisitionSpec,
    SearchBox,
    maximize_acquisition,
)
from bayesattack.errors import AttackAborted, ProtocolError, TransportError
from bayesattack.gp import HyperPrior, KernelHyper, fit_hyperparameters, gp_append, gp_fit
from bayesattack.oracle import ObjectiveSpec, Oracle, QueryLedger, as_image, objective
from bayesattack.subspace import BasisMode, SubspaceSpec, embed, project_l2, project_linf

log = logging.getLogger(__name__)


class Norm(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"


class InitDist(str, enum.Enum):
    STD_NORMAL = "normal"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class AttackConfig:
    """Attack settings.

    ``basis_mode`` and ``init_dist`` default by norm: l-infinity uses NNI
    with standard-normal initial samples, l2 uses the full Fourier basis
    with Uniform(-1, 1) initial samples.
    """

    norm: Norm = Norm.LINF
    eps: float = 0.05
    budget: int = 200
    low_dim_side: int = 6
    basis_mode: BasisMode | None = None
    n_init: int = 5
    init_dist: InitDist | None = None
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    acquisition: AcquisitionKind = AcquisitionKind.EI
    ucb_beta: float | None = None
    seed: int = 0
    refit_every: int = 5
    hyper_restarts: int = 2
    acq_restarts: int = 10
    acq_maxiter: int = 50
    noise_variance: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "acquisition", AcquisitionKind(self.acquisition))
        if self.basis_mode is not None:
            object.__setattr__(self, "basis_mode", BasisMode(self.basis_mode))
        if self.init_dist is not None:
            object.__setattr__(self, "init_dist", InitDist(self.init_dist))
        if isinstance(self.objective, dict):
            object.__setattr__(self, "objective", ObjectiveSpec(**self.objective))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.budget < 1 or self.n_init < 1:
            raise ValueError("budget and n_init must be positive")
        if self.n_init >= self.budget:
            raise ValueError("n_init must be smaller than the query budget")
        if self.low_dim_side < 1:
            raise ValueError("low_dim_side must be >= 1")

    def resolved(self) -> "AttackConfig":
        changes = {}
        if self.basis_mode is None:
            changes["basis_mode"] = BasisMode.NNI if self.norm is Norm.LINF else BasisMode.FFT_FULL
        if self.init_dist is None:
            changes["init_dist"] = InitDist.STD_NORMAL if self.norm is Norm.LINF else InitDist.UNIFORM
        if self.acquisition is AcquisitionKind.UCB and self.ucb_beta is None:
            changes["ucb_beta"] = 2.0
        return dataclasses.replace(self, **changes) if changes else self

    def replace(self, **changes) -> "AttackConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ObjectiveSpec):
                v = {"goal": v.goal.value, "feedback": v.feedback.value, "target": v.target}
            elif isinstance(v, enum.Enum):
                v = v.value
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AttackConfig":
        return cls(**data)

    @property
    def cross_mode(self) -> bool:
        """True for the ablation pairings l2+NNI and l-infinity+Fourier."""
        mode = self.resolved().basis_mode
        return (self.norm is Norm.L2) == (mode is BasisMode.NNI)


@dataclass
class AttackResult:
    success: bool
    queries_used: int
    final_coeffs: np.ndarray
    final_delta: np.ndarray
    trace: list
    adversarial_label: int | None = None
    gp_rows: int = 0
    method: str = "bayes"

    def to_dict(self, include_delta: bool = False) -> dict:
        out = {
            "method": self.method,
            "success": self.success,
            "queries_used": self.queries_used,
            "adversarial_label": self.adversarial_label,
            "gp_rows": self.gp_rows,
            "final_coeffs": [float(v) for v in self.final_coeffs],
            "trace": [[int(q), float(v)] for q, v in self.trace],
        }
        if include_delta:
            out["final_delta"] = np.asarray(self.final_delta).tolist()
        return out


def subspace_for(config: AttackConfig, image_shape) -> SubspaceSpec:
    C, H, W = image_shape
    if H != W:
        raise ValueError(f"square images required, got {H}x{W}")
    cfg = config.resolved()
    return SubspaceSpec(cfg.basis_mode, min(cfg.low_dim_side, H), C, H)


def project(coeffs, config: AttackConfig) -> np.ndarray:
    if config.norm is Norm.LINF:
        return project_linf(coeffs, config.eps)
    return project_l2(coeffs, config.eps)


def _draw(config: AttackConfig, dim: int, rng, size=None) -> np.ndarray:
    shape = (dim,) if size is None else (size, dim)
    if config.resolved().init_dist is InitDist.STD_NORMAL:
        return rng.standard_normal(shape)
    return rng.uniform(-1.0, 1.0, shape)


def init_design(config: AttackConfig, dim: int, rng) -> list[np.ndarray]:
    """``n_init`` random coefficient vectors, each projected onto the eps-ball."""
    rng = np.random.default_rng(rng)
    return [project(c, config) for c in _draw(config, dim, rng, config.n_init)]


def _streams(seed: int):
    init_ss, acq_ss, hyp_ss, jit_ss = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(s) for s in (init_ss, acq_ss, hyp_ss, jit_ss))


class _Run:
    """Query bookkeeping shared by both attacks."""

    def __init__(self, x0, y0, config, oracle, spec, method):
        self.x0, self.y0 = x0, y0
        self.config, self.oracle, self.spec = config, oracle, spec
        self.ledger = QueryLedger(config.budget)
        self.trace = []
        self.method = method
        self.last = None
        self.gp_rows = 0

    def evaluate(self, coeffs):
        delta = embed(coeffs, self.spec)
        try:
            ev = objective(self.config.objective, self.oracle, self.x0, self.y0, delta, self.ledger)
        except (TransportError, ProtocolError) as exc:
            raise AttackAborted(f"oracle failed after {self.ledger.used} queries: {exc}",
                                self.result(False)) from exc
        self.trace.append((self.ledger.used, ev.value))
        self.last = (coeffs, delta, ev)
        return ev

    def result(self, success) -> AttackResult:
        if self.last is None:
            coeffs = np.zeros(self.spec.dim)
            delta, label = embed(coeffs, self.spec), None
        else:
            coeffs, delta, ev = self.last
            label = ev.label
        return AttackResult(
            success=success,
            queries_used=self.ledger.used,
            final_coeffs=np.asarray(coeffs, dtype=np.float64),
            final_delta=delta,
            trace=list(self.trace),
            adversarial_label=label if success else None,
            gp_rows=self.gp_rows,
            method=self.method,
        )


def _prepare(x0, y0, config):
    cfg = config.resolved()
    x0 = as_image(x0)
    cfg.objective.validate_for(int(y0))
    return x0, int(y0), cfg, subspace_for(cfg, x0.shape)


def bayes_attack(x0, y0, config: AttackConfig, oracle: Oracle) -> AttackResult:
    """Run the BO attack on one correctly classified image.

    The initial design is queried one point at a time and the attack
    returns as soon as any query succeeds. Only failed queries enter the
    GP training set.
    """
    x0, y0, cfg, spec = _prepare(x0, y0, config)
    run = _Run(x0, y0, cfg, oracle, spec, "bayes")
    init_rng, acq_rng, hyp_rng, jit_rng = _streams(cfg.seed)
    dim = spec.dim
    box = SearchBox.symmetric(cfg.eps, dim)
    prior = HyperPrior.for_box(cfg.eps, dim)

    X, V = [], []
    for c in init_design(cfg, dim, init_rng):
        ev = run.evaluate(c)
        if ev.success:
            return run.result(True)
        X.append(c)
        V.append(ev.value)
        run.gp_rows = len(X)
        if run.ledger.remaining == 0:
            return run.result(False)

    n0 = len(X)

    def refit():
        if len(X) >= 2:
            hyper, mean = fit_hyperparameters(
                X, V, prior, cfg.hyper_restarts, hyp_rng, cfg.noise_variance
            )
        else:
            hyper = KernelHyper(1.0, np.full(dim, cfg.eps), cfg.noise_variance)
            mean = float(V[0])
        return gp_fit(X, V, hyper, mean)

    gp = refit()
    while run.ledger.remaining > 0:
        best = int(np.argmax(V))
        acq = AcquisitionSpec(cfg.acquisition, float(V[best]), cfg.ucb_beta)
        cand = maximize_acquisition(
            gp, acq, box, cfg.acq_restarts, acq_rng, incumbent=X[best], maxiter=cfg.acq_maxiter
        )
        cand = project(cand, cfg)
        if np.min(np.max(np.abs(np.asarray(X) - cand), axis=1)) < 1e-10:
            cand = project(cand + jit_rng.uniform(-1.0, 1.0, dim) * 1e-6 * cfg.eps, cfg)
        ev = run.evaluate(cand)
        if ev.success:
            return run.result(True)
        X.append(cand)
        V.append(ev.value)
        run.gp_rows = len(X)
        n = len(X)
        if n <= n0 + 2 or (n - n0) % cfg.refit_every == 0:
            gp = refit()
        else:
            gp = gp_append(gp, cand, ev.value)
    return run.result(False)


def random_search_attack(x0, y0, config: AttackConfig, oracle: Oracle) -> AttackResult:
    """Baseline: fresh draws from the initial distribution, projected.

    Uses the same random stream as the Bayes attack's initial design, so
    the first ``n_init`` queries of the two attacks coincide for a seed.
    """
    x0, y0, cfg, spec = _prepare(x0, y0, config)
    run = _Run(x0, y0, cfg, oracle, spec, "random")
    init_rng = _streams(cfg.seed)[0]
    first = init_design(cfg, spec.dim, init_rng)
    while run.ledger.remaining > 0:
        c = first.pop(0) if first else project(_draw(cfg, spec.dim, init_rng), cfg)
        if run.evaluate(c).success:
            return run.result(True)
    return run.result(False)


ATTACKS = {"bayes": bayes_attack, "random": random_search_attack}
