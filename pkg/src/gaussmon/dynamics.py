"""Fixed-step integration of conditional and unconditional moment dynamics.

Deterministic flows (the Riccati equation for the conditional covariance,
the Lyapunov equation for the unconditional one, the noise covariance ``V``
and the unconditional mean) use classical RK4. The filtered mean follows
the Ito SDE ``dx = (A x + b) dt + (sigma C^T + Gamma^T) dW`` and is advanced
by Euler-Maruyama with the gain frozen at the start of each step. The gain
depends only on the deterministic ``sigma``, so Euler-Maruyama already has
strong order 1 here.

Random numbers
--------------
Trajectory ``i`` of a run with seed ``seed`` draws from its own Philox-4x64
counter-based generator keyed by ``SeedSequence(seed, spawn_key=(i,))``.
Standard normals are produced by inverse-CDF sampling: each raw 64-bit
draw ``r`` gives the uniform ``u = ((r >> 12) + 1/2) / 2**52``, which lies
strictly inside (0, 1), and the variate is ``ndtri(u)``. Every variate
consumes exactly one draw. Streams are therefore independent
of how trajectories are grouped or scheduled; bit-exactness is promised
within one build of numpy/scipy/numba.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .errors import IntegrationFailure, InvalidArgument
from .gaussian_core import PHYSICALITY_TOL, GaussianState, physicality_margin
from .measurement import MonitoringMatrices

# Steps advanced per compiled call; bounds the size of per-chunk buffers.
_CHUNK_STEPS = 1 << 16
# Trajectories integrated per task in an ensemble.
_ENSEMBLE_BLOCK = 64


@dataclass(frozen=True)
class IntegratorConfig:
    """Uniform time grid, ensemble size and seed.

    ``record_every`` thins the stored output: states are kept at every
    ``record_every``-th step (and always at ``t = 0`` and ``t_final``).
    ``workers`` only affects scheduling of ensemble blocks, never results.
    """

    dt: float = 1e-3
    t_final: float = 1.0
    seed: int = 0
    n_traj: int = 1
    record_every: int = 1
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument(f"dt must be > 0, got {self.dt}")
        if not self.t_final >= self.dt:
            raise InvalidArgument(f"t_final must be >= dt, got {self.t_final}")
        if self.n_traj < 1:
            raise InvalidArgument(f"n_traj must be >= 1, got {self.n_traj}")
        if self.record_every < 1:
            raise InvalidArgument("record_every must be >= 1")
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise InvalidArgument("t_final must be an integer multiple of dt")
        if n % self.record_every:
            raise InvalidArgument("the step count must be a multiple of record_every")

    @property
    def n_steps(self):
        return round(self.t_final / self.dt)

    @property
    def n_records(self):
        return self.n_steps // self.record_every + 1

    @property
    def times(self):
        return np.arange(self.n_records) * (self.record_every * self.dt)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Recorded moments of one realization on the output grid.

    ``cov_series`` is deterministic and shared by every trajectory of a run.
    ``increments`` holds the per-step Wiener increments when requested.
    """

    times: np.ndarray
    cov_series: np.ndarray
    mean_series: np.ndarray
    increments: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class NoiseCov:
    """Covariance ``V(t)`` of the filtered means, with ``sigma + V = sigma_uc``."""

    times: np.ndarray
    v_series: np.ndarray


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Many trajectories sharing one covariance pass."""

    times: np.ndarray
    cov_series: np.ndarray
    means: np.ndarray
    failed: dict = field(default_factory=dict)

    @property
    def n_traj(self):
        return self.means.shape[0]

    @property
    def ok(self):
        mask = np.ones(self.n_traj, dtype=bool)
        mask[list(self.failed)] = False
        return mask

    @property
    def sample_mean(self):
        return self.means[self.ok].mean(axis=0)

    @property
    def sample_cov(self):
        x = self.means[self.ok]
        dev = x - x.mean(axis=0)
        return np.einsum("tri,trj->rij", dev, dev) / (x.shape[0] - 1)

    def trajectory(self, i):
        return TrajectoryRecord(self.times, self.cov_series, self.means[i])


def trajectory_rng(seed, index):
    """Independent generator for trajectory ``index`` of a run seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def wiener_increments(rng, n_steps, dim, dt):
    """``(n_steps, dim)`` Wiener increments of variance ``dt`` (inverse-CDF normals)."""
    raw = rng.bit_generator.random_raw(n_steps * dim)
    u = ((raw >> np.uint64(12)).astype(float) + 0.5) * 2.0**-52
    return np.sqrt(dt) * ndtri(u).reshape(n_steps, dim)


def _as_state(state0):
    if not isinstance(state0, GaussianState):
        raise InvalidArgument("initial state must be a GaussianState")
    if not state0.is_physical():
        raise InvalidArgument("initial state is not physical")
    return state0


def _check_shapes(model, mm, state0):
    dim = model.drift.shape[0]
    if state0.cov.shape != (dim, dim):
        raise InvalidArgument(f"state has dimension {state0.cov.shape[0]}, model {dim}")
    if mm is not None and mm.c_matrix.shape[1] != dim:
        raise InvalidArgument("monitoring matrices do not match the model dimension")


def _blocks(cfg):
    """Yield ``(first_record, n_rec)`` covering every record but the final one."""
    per = max(1, _CHUNK_STEPS // cfg.record_every)
    total = cfg.n_records - 1
    for start in range(0, total, per):
        yield start, min(per, total - start)


def _check_physical(rec, first_record, stride):
    nu = physicality_margin(rec)
    bad = np.flatnonzero(nu < 0.5 - PHYSICALITY_TOL)
    if bad.size:
        raise IntegrationFailure(
            f"covariance lost physicality (min symplectic eigenvalue {nu[bad[0]]:.3g})",
            (first_record + bad[0]) * stride,
        )


def _drive_start(model, t0, n, dt):
    return np.ascontiguousarray(model.drive_at(t0 + dt * np.arange(n)))


def _drive_stages(model, t0, n, dt):
    t = t0 + dt * np.arange(n)
    return np.ascontiguousarray(
        np.stack([model.drive_at(t), model.drive_at(t + 0.5 * dt), model.drive_at(t + dt)], axis=1)
    )


def _riccati_pass(model, mm, cov0, cfg, keep_gains=False):
    """Integrate the covariance flow; optionally return every start-of-step gain."""
    a = np.ascontiguousarray(model.drift)
    d = np.ascontiguousarray(model.diffusion)
    c = np.ascontiguousarray(mm.c_matrix)
    g = np.ascontiguousarray(mm.gamma_matrix)
    dim = a.shape[0]
    stride = cfg.record_every
    s = np.array(cov0, dtype=float)
    covs = np.empty((cfg.n_records, dim, dim))
    gains = np.empty((cfg.n_steps if keep_gains else 0, dim, c.shape[0]))
    empty = np.empty((0, dim, c.shape[0]))
    for first, n_rec in _blocks(cfg):
        lo = first * stride
        out = gains[lo : lo + n_rec * stride] if keep_gains else empty
        bad = _kernels.riccati_block(s, a, d, c, g, cfg.dt, n_rec, stride, covs[first : first + n_rec], out)
        if bad >= 0:
            raise IntegrationFailure("non-finite covariance", lo + bad)
        _check_physical(covs[first : first + n_rec], first, stride)
    covs[-1] = s
    _check_physical(covs[-1:], cfg.n_records - 1, stride)
    return covs, gains


def riccati_pass(model, mm, state0, cfg, keep_gains=True):
    """Conditional covariance on the output grid and, optionally, every start-of-step gain.

    Returns ``(cov_series, gains)``; ``gains`` is empty unless ``keep_gains``.
    """
    state0 = _as_state(state0)
    _check_shapes(model, mm, state0)
    return _riccati_pass(model, mm, state0.cov, cfg, keep_gains=keep_gains)


def integrate_means(model, gains, mean0, increments, cfg):
    """Euler-Maruyama for the filtered mean with explicit Wiener increments.

    ``gains`` has one entry per step of ``cfg``. ``increments`` is either
    ``(n_steps, 2l)`` for one path or ``(n_paths, n_steps, 2l)`` for a batch.
    Returns the mean on the output grid, with a leading path axis for a batch.
    """
    a = np.ascontiguousarray(model.drift)
    stride = cfg.record_every
    dw = np.ascontiguousarray(increments, dtype=float)
    single = dw.ndim == 2
    if single:
        dw = dw[None]
    if dw.shape[1] != cfg.n_steps or gains.shape[0] != cfg.n_steps:
        raise InvalidArgument("gains and increments need one entry per step")
    xs = np.tile(np.asarray(mean0, dtype=float), (dw.shape[0], 1))
    rec = np.empty((dw.shape[0], cfg.n_records, xs.shape[1]))
    fail = np.full(dw.shape[0], -1, dtype=np.int64)
    for first, n_rec in _blocks(cfg):
        lo = first * stride
        hi = lo + n_rec * stride
        b = _drive_start(model, lo * cfg.dt, hi - lo, cfg.dt)
        _kernels.em_ensemble(
            xs, a, b, gains[lo:hi], dw[:, lo:hi], cfg.dt, n_rec, stride, rec[:, first : first + n_rec], fail
        )
        if (fail >= 0).any():
            raise IntegrationFailure("non-finite mean", lo + int(fail[fail >= 0].min()))
    rec[:, -1] = xs
    return rec[0] if single else rec


def evolve_conditional(model, mm, state0, cfg, trajectory=0, keep_increments=False):
    """One realization of the monitored dynamics.

    Parameters
    ----------
    model : OpenModel
    mm : MonitoringMatrices
    state0 : GaussianState
        Physical initial state.
    cfg : IntegratorConfig
    trajectory : int
        Index selecting the random substream, see the module docstring.
    keep_increments : bool
        Store the ``(n_steps, 2l)`` Wiener increments in the record.

    Returns
    -------
    TrajectoryRecord

    Raises
    ------
    IntegrationFailure
        On a non-finite value or a covariance that stops being physical.
    """
    state0 = _as_state(state0)
    _check_shapes(model, mm, state0)
    a = np.ascontiguousarray(model.drift)
    d = np.ascontiguousarray(model.diffusion)
    c = np.ascontiguousarray(mm.c_matrix)
    g = np.ascontiguousarray(mm.gamma_matrix)
    dim, k = a.shape[0], c.shape[0]
    stride = cfg.record_every
    rng = trajectory_rng(cfg.seed, trajectory)
    s = np.array(state0.cov)
    x = np.array(state0.mean)
    covs = np.empty((cfg.n_records, dim, dim))
    means = np.empty((cfg.n_records, dim))
    kept = [] if keep_increments else None
    for first, n_rec in _blocks(cfg):
        lo = first * stride
        n = n_rec * stride
        gains = np.empty((n, dim, k))
        bad = _kernels.riccati_block(s, a, d, c, g, cfg.dt, n_rec, stride, covs[first : first + n_rec], gains)
        if bad >= 0:
            raise IntegrationFailure("non-finite covariance", lo + bad)
        _check_physical(covs[first : first + n_rec], first, stride)
        dw = wiener_increments(rng, n, k, cfg.dt)
        b = _drive_start(model, lo * cfg.dt, n, cfg.dt)
        bad = _kernels.em_block(x, a, b, gains, dw, cfg.dt, n_rec, stride, means[first : first + n_rec])
        if bad >= 0:
            raise IntegrationFailure("non-finite mean", lo + bad)
        if kept is not None:
            kept.append(dw)
    covs[-1] = s
    means[-1] = x
    _check_physical(covs[-1:], cfg.n_records - 1, stride)
    increments = np.concatenate(kept) if kept is not None else None
    return TrajectoryRecord(cfg.times, covs, means, increments)


def evolve_unconditional(model, state0, cfg):
    """Measurement-averaged dynamics: RK4 for both ``sigma_uc`` and ``x_uc``."""
    state0 = _as_state(state0)
    _check_shapes(model, None, state0)
    dim = model.drift.shape[0]
    covs, _ = _riccati_pass(model, MonitoringMatrices.unmonitored(dim // 2), state0.cov, cfg)
    a = np.ascontiguousarray(model.drift)
    x = np.array(state0.mean)
    means = np.empty((cfg.n_records, dim))
    stride = cfg.record_every
    for first, n_rec in _blocks(cfg):
        lo = first * stride
        b = _drive_stages(model, lo * cfg.dt, n_rec * stride, cfg.dt)
        bad = _kernels.linear_mean_block(x, a, b, cfg.dt, n_rec, stride, means[first : first + n_rec])
        if bad >= 0:
            raise IntegrationFailure("non-finite mean", lo + bad)
    means[-1] = x
    return TrajectoryRecord(cfg.times, covs, means)


def evolve_noise_cov(model, mm, cov_series, cfg):
    """Integrate ``dV/dt = A V + V A^T + chi(sigma)`` from ``V(0) = 0``.

    The Riccati stages are replayed from ``cov_series[0]`` so that ``chi`` is
    evaluated at the exact RK4 stage covariances instead of interpolated
    ones; the replay is checked against ``cov_series`` on every recorded
    point.

    Raises
    ------
    InvalidArgument
        If ``cov_series`` was not produced on the grid of ``cfg`` with the
        same model and monitoring.
    """
    cov_series = np.asarray(cov_series, dtype=float)
    dim = model.drift.shape[0]
    if cov_series.shape != (cfg.n_records, dim, dim):
        raise InvalidArgument(
            f"cov_series has shape {cov_series.shape}, grid expects {(cfg.n_records, dim, dim)}"
        )
    a = np.ascontiguousarray(model.drift)
    d = np.ascontiguousarray(model.diffusion)
    c = np.ascontiguousarray(mm.c_matrix)
    g = np.ascontiguousarray(mm.gamma_matrix)
    stride = cfg.record_every
    s = np.array(cov_series[0])
    v = np.zeros((dim, dim))
    replay = np.empty_like(cov_series)
    vs = np.empty_like(cov_series)
    for first, n_rec in _blocks(cfg):
        bad = _kernels.noise_cov_block(
            s, v, a, d, c, g, cfg.dt, n_rec, stride, replay[first : first + n_rec], vs[first : first + n_rec]
        )
        if bad >= 0:
            raise IntegrationFailure("non-finite noise covariance", first * stride + bad)
    replay[-1] = s
    vs[-1] = v
    scale = np.abs(cov_series).max()
    if np.abs(replay - cov_series).max() > 1e-12 * max(scale, 1.0):
        raise InvalidArgument("cov_series does not match this model, monitoring and grid")
    return NoiseCov(cfg.times, vs)


def _ensemble_block(model, gains, state0, cfg, indices):
    a = np.ascontiguousarray(model.drift)
    dim, k = gains.shape[1], gains.shape[2]
    stride = cfg.record_every
    m = len(indices)
    xs = np.tile(state0.mean, (m, 1))
    recs = np.empty((m, cfg.n_records, dim))
    fail = np.full(m, -1, dtype=np.int64)
    rngs = [trajectory_rng(cfg.seed, i) for i in indices]
    for first, n_rec in _blocks(cfg):
        lo = first * stride
        n = n_rec * stride
        dws = np.stack([wiener_increments(r, n, k, cfg.dt) for r in rngs])
        b = _drive_start(model, lo * cfg.dt, n, cfg.dt)
        local = np.where(fail >= 0, 0, -1).astype(np.int64)
        _kernels.em_ensemble(xs, a, b, gains[lo : lo + n], dws, cfg.dt, n_rec, stride, recs[:, first : first + n_rec], local)
        newly = (local >= 0) & (fail < 0)
        fail[newly] = lo + local[newly]
    recs[:, -1] = xs
    recs[fail >= 0] = np.nan
    return recs, {int(indices[i]): int(fail[i]) for i in np.flatnonzero(fail >= 0)}


def run_ensemble(model, mm, state0, cfg):
    """Integrate ``cfg.n_traj`` independent trajectories over one covariance pass.

    Trajectory ``i`` always uses substream ``(cfg.seed, i)`` and the
    per-trajectory arithmetic does not depend on grouping, so the output is
    identical for any ``cfg.workers``. Trajectories whose mean blows up are
    reported in :attr:`Ensemble.failed` (index -> step) and the run continues.
    """
    if cfg.n_traj < 2:
        raise InvalidArgument("an ensemble needs n_traj >= 2")
    state0 = _as_state(state0)
    _check_shapes(model, mm, state0)
    covs, gains = _riccati_pass(model, mm, state0.cov, cfg, keep_gains=True)
    blocks = [np.arange(i, min(i + _ENSEMBLE_BLOCK, cfg.n_traj)) for i in range(0, cfg.n_traj, _ENSEMBLE_BLOCK)]
    if cfg.workers == 1:
        results = [_ensemble_block(model, gains, state0, cfg, idx) for idx in blocks]
    else:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda idx: _ensemble_block(model, gains, state0, cfg, idx), blocks))
    means = np.concatenate([r[0] for r in results])
    failed = {}
    for _, f in results:
        failed.update(f)
    return Ensemble(cfg.times, covs, means, failed)
