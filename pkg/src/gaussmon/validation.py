"""Independent oracles: steady states, finite differences and Monte Carlo gates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import IntegratorConfig, integrate_means, riccati_pass, trajectory_rng, wiener_increments
from .errors import InvalidArgument, NoSteadyState
from .measurement import backaction

#: Default statistical gate ``|z| < Z_GATE``.
Z_GATE = 3.0


def solve_lyapunov(a, d):
    """Solve ``A X + X A^T + D = 0`` by a Kronecker-sum linear solve.

    Raises
    ------
    NoSteadyState
        If ``A`` has an eigenvalue with non-negative real part.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or d.shape != a.shape:
        raise InvalidArgument(f"A {a.shape} and D {d.shape} must be square and equal-sized")
    top = np.linalg.eigvals(a).real.max()
    if top >= 0:
        raise NoSteadyState(f"drift is not Hurwitz (max Re eig = {top:.3g})")
    n = a.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(A X) = (A kron I) vec X, vec(X A^T) = (I kron A) vec X
    x = np.linalg.solve(np.kron(a, eye) + np.kron(eye, a), -d.ravel()).reshape(n, n)
    return 0.5 * (x + x.T)


def riccati_residual(model, mm, sigma):
    """``||A sigma + sigma A^T + D - chi(sigma)||_inf`` (max-abs entry)."""
    a = model.drift
    r = a @ sigma + sigma @ a.T + model.diffusion - backaction(sigma, mm)
    return float(np.abs(r).max())


@dataclass(frozen=True, eq=False)
class SteadyStateReport:
    sigma_ss: np.ndarray
    residual: float
    horizon: float
    converged: bool
    residual_history: np.ndarray


def riccati_steady_state(model, mm, sigma0, tol=1e-8, dt=1e-2, max_time=1e5, check_every=1.0):
    """Run the Riccati flow until its residual falls below ``tol``.

    The residual is sampled every ``check_every`` time units; the history is
    returned so callers can inspect its decay. Hitting ``max_time`` first
    yields ``converged=False`` rather than an exception.
    """
    a = np.ascontiguousarray(model.drift)
    d = np.ascontiguousarray(model.diffusion)
    c = np.ascontiguousarray(mm.c_matrix)
    g = np.ascontiguousarray(mm.gamma_matrix)
    s = np.array(sigma0, dtype=float)
    steps = max(1, int(round(check_every / dt)))
    rec = np.empty((1,) + s.shape)
    no_gains = np.empty((0, s.shape[0], c.shape[0]))
    history = [riccati_residual(model, mm, s)]
    t = 0.0
    while history[-1] >= tol and t < max_time:
        if _kernels.riccati_block(s, a, d, c, g, dt, 1, steps, rec, no_gains) >= 0:
            break
        t += steps * dt
        history.append(riccati_residual(model, mm, s))
    res = history[-1]
    return SteadyStateReport(s, res, t, bool(res < tol), np.asarray(history))


def finite_difference(series, dt):
    """Second-order centred differences, one-sided second order at the ends."""
    y = np.asarray(series, dtype=float)
    if y.shape[0] < 3:
        raise InvalidArgument("finite differences need at least 3 samples")
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    return np.gradient(y, dt, axis=0, edge_order=2)


@dataclass(frozen=True)
class ZReport:
    mean: float
    se: float
    z: float
    target: float
    n: int
    passed: bool


def mc_tester(samples, target, gate=Z_GATE):
    """z-score of a sample mean against a target value.

    Zero sample variance passes only if the mean equals the target exactly.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise InvalidArgument(f"need at least 100 samples, got {x.size}")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size))
    diff = mean - float(target)
    if se == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    return ZReport(mean, se, z, float(target), x.size, abs(z) < gate)


def rk4_order(model, mm, state0, t_final=1.0, dts=(4e-3, 2e-3, 1e-3)):
    """Observed convergence order of the covariance flow from successive dt halvings.

    Uses differences between consecutive levels, so no exact solution is
    needed: ``log2(|s(h) - s(h/2)| / |s(h/2) - s(h/4)|)``.
    """
    if len(dts) != 3 or not np.allclose([dts[0] / dts[1], dts[1] / dts[2]], 2.0):
        raise InvalidArgument("need three step sizes, each half the previous one")
    finals = []
    for dt in dts:
        cfg = IntegratorConfig(dt=dt, t_final=t_final, record_every=int(round(t_final / dt)))
        covs, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
        finals.append(covs[-1])
    e1 = np.abs(finals[0] - finals[1]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    return float(np.log2(e1 / e2))


def em_weak_order(model, mm, state0, t_final=2.0, dts=(0.04, 0.02, 0.01), n_paths=10_000, seed=0):
    """Observed weak order of the filtered-mean scheme on ``E[x x^T](t_final)``.

    The three levels are driven by the same Brownian paths (fine increments
    summed pairwise), which removes most of the Monte Carlo noise from the
    level differences.
    """
    if len(dts) != 3 or not np.allclose([dts[0] / dts[1], dts[1] / dts[2]], 2.0):
        raise InvalidArgument("need three step sizes, each half the previous one")
    n_fine = int(round(t_final / dts[-1]))
    k = mm.c_matrix.shape[0]
    fine = wiener_increments(trajectory_rng(seed, 0), n_paths * n_fine, k, dts[-1]).reshape(n_paths, n_fine, k)
    moments = []
    for level, dt in enumerate(dts):
        f = 2 ** (2 - level)
        dw = fine.reshape(n_paths, n_fine // f, f, k).sum(axis=2)
        cfg = IntegratorConfig(dt=dt, t_final=t_final, record_every=n_fine // f)
        _, gains = riccati_pass(model, mm, state0, cfg)
        x = integrate_means(model, gains, state0.mean, dw, cfg)[:, -1]
        moments.append((x[:, :, None] * x[:, None, :]).mean(axis=0))
    e1 = np.abs(moments[0] - moments[1]).max()
    e2 = np.abs(moments[1] - moments[2]).max()
    return float(np.log2(e1 / e2))
