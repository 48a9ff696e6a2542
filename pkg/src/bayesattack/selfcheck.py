"""Fast numerical self-checks behind ``bayesattack verify``."""
import math

import numpy as np

from bayesattack import gp, subspace
from bayesattack._backend import BACKEND, available_backends
from bayesattack.acquisition import expected_improvement


def _naive_dft(x):
    d = x.shape[0]
    i = np.arange(d)
    out = np.empty((d, d), dtype=complex)
    for u in range(d):
        for v in range(d):
            ph = np.exp(-2j * np.pi * (u * i[:, None] + v * i[None, :]) / d)
            out[u, v] = (x * ph).sum() / d
    return out


def check_dft(rng):
    worst = 0.0
    for d in (2, 5, 8, 12):
        x = rng.standard_normal((d, d))
        worst = max(worst, np.abs(subspace.dft2(x) - _naive_dft(x)).max())
    return worst < 1e-10, f"max deviation from naive DFT {worst:.2e}"


def check_isometry(rng):
    worst = 0.0
    for mode in ("fft_full", "fft_cos", "fft_sin"):
        spec = subspace.SubspaceSpec(mode, 4, 3, 16)
        c = rng.standard_normal(spec.dim)
        worst = max(worst, abs(np.linalg.norm(subspace.fft_embed(c, spec)) / np.linalg.norm(c) - 1))
    spec = subspace.SubspaceSpec("nni", 5, 2, 17)
    c = rng.standard_normal(spec.dim)
    nni_ok = np.abs(subspace.nni_upsample(c, spec)).max() == np.abs(c).max()
    return worst < 1e-9 and nni_ok, f"l2 isometry error {worst:.2e}, NNI linf exact: {nni_ok}"


def check_projections(rng):
    c = rng.standard_normal(20) * 3
    a = subspace.project_l2(c, 1.5)
    b = subspace.project_linf(c, 0.4)
    ok = (np.linalg.norm(a) <= 1.5 + 1e-12 and np.allclose(subspace.project_l2(a, 1.5), a)
          and np.abs(b).max() <= 0.4 and np.array_equal(subspace.project_linf(b, 0.4), b))
    return ok, "feasible and idempotent" if ok else "projection property violated"


def check_gp(rng):
    X = rng.uniform(-1, 1, (8, 3))
    y = rng.standard_normal(8)
    hyper = gp.KernelHyper(1.3, rng.uniform(0.5, 2, 3), 1e-4)
    state = gp.gp_fit(X, y, hyper, 0.2)
    xs = rng.uniform(-1, 1, 3)
    K = gp.kernel_matrix(X, X, hyper) + 1e-4 * np.eye(8)
    k = gp.kernel_matrix(X, xs[None], hyper)[:, 0]
    m_ref = 0.2 + k @ np.linalg.solve(K, y - 0.2)
    v_ref = 1.3 - k @ np.linalg.solve(K, k)
    m, v = gp.gp_posterior(state, xs)
    err = max(abs(m - m_ref), abs(v - v_ref))

    _, g = gp.log_marginal_likelihood(state)
    theta = np.concatenate([[math.log(1.3)], np.log(hyper.lengthscales), [math.log(1e-4), 0.2]])

    def lml(t):
        h = gp.KernelHyper(math.exp(t[0]), np.exp(t[1:4]), math.exp(t[4]))
        return gp.log_marginal_likelihood(gp.gp_fit(X, y, h, t[5]))[0]

    fd = np.array([(lml(theta + e) - lml(theta - e)) / 2e-5 for e in np.eye(6) * 1e-5])
    rel = np.abs(fd - g).max() / max(np.abs(fd).max(), 1e-12)
    return err < 1e-8 and rel < 1e-4, f"posterior error {err:.1e}, LML gradient rel. error {rel:.1e}"


def check_ei(rng):
    z = rng.standard_normal(200_000)
    worst = 0.0
    for mean, std, best in [(0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (-0.5, 2.0, 0.3)]:
        mc = np.maximum(mean + std * z - best, 0).mean()
        worst = max(worst, abs(mc - expected_improvement(mean, std, best)))
    return worst < 1e-2, f"max |closed form - Monte Carlo| {worst:.1e}"


def check_backends(rng):
    found = available_backends()
    if len(found) < 2:
        return True, "only the numpy backend is built"
    X = rng.standard_normal((12, 4))
    ls = rng.uniform(0.5, 2, 4)
    a, b = found["python"], found["cython"]
    diff = np.abs(a.matern52_cov(X, X, ls, 1.1) - b.matern52_cov(X, X, ls, 1.1)).max()
    return diff < 1e-12, f"compiled vs numpy kernel difference {diff:.1e}"


CHECKS = [check_dft, check_isometry, check_projections, check_gp, check_ei, check_backends]


def run_all(seed=0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    out(f"backend: {BACKEND}")
    ok_all = True
    for check in CHECKS:
        ok, detail = check(rng)
        ok_all &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {check.__name__[6:]:<12} {detail}")
    return ok_all
