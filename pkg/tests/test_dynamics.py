import numpy as np
import pytest

from gaussmon.dynamics import (
    IntegratorConfig,
    evolve_conditional,
    evolve_noise_cov,
    evolve_unconditional,
    integrate_means,
    riccati_pass,
    run_ensemble,
    trajectory_rng,
    wiener_increments,
)
from gaussmon.errors import InvalidArgument
from gaussmon.gaussian_core import GaussianState, physicality_margin, purity
from gaussmon.measurement import MonitoringMatrices
from gaussmon.scenario import opo_defaults, quench_defaults
from reference_values import OPO_LYAPUNOV, QUENCH_SIGMA_5, QUENCH_X_SS

PRESETS = ("homodyne_x", "homodyne_p", "heterodyne")


def _built(sc, preset="heterodyne"):
    return sc.replace(preset=preset).build()


def test_config_validation():
    with pytest.raises(InvalidArgument):
        IntegratorConfig(dt=0.0)
    with pytest.raises(InvalidArgument):
        IntegratorConfig(dt=0.3, t_final=1.0)
    with pytest.raises(InvalidArgument):
        IntegratorConfig(dt=0.1, t_final=1.0, record_every=3)
    cfg = IntegratorConfig(dt=0.1, t_final=1.0, record_every=5)
    assert cfg.n_steps == 10 and cfg.n_records == 3
    assert np.allclose(cfg.times, [0.0, 0.5, 1.0])


def test_zero_monitoring_matches_unconditional_exactly():
    model, _, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=10.0, record_every=10)
    cond = evolve_conditional(model, MonitoringMatrices.unmonitored(), state0, cfg)
    uncond = evolve_unconditional(model, state0, cfg)
    assert np.array_equal(cond.cov_series, uncond.cov_series)


@pytest.mark.parametrize("preset", PRESETS)
def test_quench_covariance_at_t5(preset):
    model, mm, state0 = _built(quench_defaults(), preset)
    cfg = IntegratorConfig(dt=1e-3, t_final=5.0, record_every=5000)
    covs, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
    assert np.allclose(covs[-1], QUENCH_SIGMA_5[preset], rtol=1e-9, atol=1e-9)


def test_unconditional_mean_relaxes_to_fixed_point():
    model, _, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=500.0, record_every=50000)
    rec = evolve_unconditional(model, state0, cfg)
    assert np.allclose(rec.mean_series[-1], QUENCH_X_SS, atol=1e-8)
    assert np.allclose(rec.cov_series[-1], 50.0 * np.eye(2), rtol=1e-9)


def test_opo_lyapunov_state_is_stationary():
    model, _, _ = _built(opo_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=50.0, record_every=5000)
    rec = evolve_unconditional(model, GaussianState(np.zeros(2), OPO_LYAPUNOV), cfg)
    assert np.allclose(rec.cov_series[-1], OPO_LYAPUNOV, rtol=1e-12)


def test_undriven_ensemble_mean_is_zero():
    model, mm, state0 = _built(opo_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=2.0, n_traj=1000, record_every=100)
    ens = run_ensemble(model, mm, state0, cfg)
    x = ens.means[:, -1]
    se = x.std(axis=0, ddof=1) / np.sqrt(len(x))
    assert np.all(np.abs(x.mean(axis=0)) < 3 * se)


def test_ensemble_independent_of_worker_count():
    model, mm, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=2.0, n_traj=150, record_every=20, seed=7)
    one = run_ensemble(model, mm, state0, cfg)
    two = run_ensemble(model, mm, state0, IntegratorConfig(**{**cfg.__dict__, "workers": 2}))
    assert np.array_equal(one.means, two.means)
    assert np.array_equal(one.cov_series, two.cov_series)


def test_single_trajectory_matches_ensemble_member():
    model, mm, state0 = _built(quench_defaults(), "homodyne_x")
    cfg = IntegratorConfig(dt=1e-2, t_final=3.0, n_traj=5, record_every=10, seed=3)
    ens = run_ensemble(model, mm, state0, cfg)
    rec = evolve_conditional(model, mm, state0, cfg, trajectory=4)
    assert np.allclose(rec.mean_series, ens.means[4], rtol=1e-12, atol=1e-12)


def test_recorded_increments_replay_the_mean():
    model, mm, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=3.0, record_every=10, seed=11)
    rec = evolve_conditional(model, mm, state0, cfg, keep_increments=True)
    _, gains = riccati_pass(model, mm, state0, cfg)
    replay = integrate_means(model, gains, state0.mean, rec.increments, cfg)
    assert np.allclose(replay, rec.mean_series, rtol=1e-12, atol=1e-12)


def test_seeds_change_paths():
    model, mm, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=1.0, record_every=10)
    a = evolve_conditional(model, mm, state0, cfg)
    b = evolve_conditional(model, mm, state0, IntegratorConfig(dt=1e-2, t_final=1.0, record_every=10, seed=1))
    assert not np.array_equal(a.mean_series, b.mean_series)
    assert np.array_equal(a.cov_series, b.cov_series)


def test_wiener_increments_statistics():
    dt = 0.01
    dw = wiener_increments(trajectory_rng(0, 0), 100_000, 2, dt)
    assert dw.shape == (100_000, 2)
    assert np.allclose(dw.mean(axis=0), 0.0, atol=4 * np.sqrt(dt / 1e5))
    assert np.allclose(dw.var(axis=0), dt, rtol=0.02)
    assert abs(np.corrcoef(dw.T)[0, 1]) < 0.015


def test_substreams_are_distinct():
    a = wiener_increments(trajectory_rng(5, 0), 10, 2, 1.0)
    b = wiener_increments(trajectory_rng(5, 1), 10, 2, 1.0)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, wiener_increments(trajectory_rng(5, 0), 10, 2, 1.0))


@pytest.mark.parametrize("kind", ["quench", "opo"])
@pytest.mark.parametrize("preset", PRESETS)
def test_noise_covariance_closes_the_balance(kind, preset):
    sc = quench_defaults() if kind == "quench" else opo_defaults()
    model, mm, state0 = _built(sc, preset)
    cfg = IntegratorConfig(dt=1e-3, t_final=5.0, record_every=100)
    covs, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
    v = evolve_noise_cov(model, mm, covs, cfg).v_series
    uncond = evolve_unconditional(model, state0, cfg).cov_series
    assert not v[0].any()
    assert np.linalg.eigvalsh(v).min() >= -1e-9 * np.abs(v).max()
    assert np.allclose(covs + v, uncond, rtol=1e-10, atol=1e-10)


def test_noise_covariance_rejects_other_grid():
    model, mm, state0 = _built(quench_defaults())
    cfg = IntegratorConfig(dt=1e-2, t_final=1.0, record_every=10)
    covs, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
    with pytest.raises(InvalidArgument):
        evolve_noise_cov(model, mm, covs[:-1], cfg)
    with pytest.raises(InvalidArgument):
        evolve_noise_cov(model, mm, covs, IntegratorConfig(dt=5e-3, t_final=1.0, record_every=20))


def test_ensemble_needs_two_trajectories():
    model, mm, state0 = _built(quench_defaults())
    with pytest.raises(InvalidArgument):
        run_ensemble(model, mm, state0, IntegratorConfig(dt=1e-2, t_final=1.0, n_traj=1))


def test_unphysical_initial_state_rejected():
    model, mm, _ = _built(quench_defaults())
    with pytest.raises(InvalidArgument):
        evolve_conditional(model, mm, GaussianState(np.zeros(2), 0.1 * np.eye(2)), IntegratorConfig())


@pytest.mark.parametrize("kind", ["quench", "opo"])
@pytest.mark.parametrize("preset", PRESETS)
def test_runs_stay_physical_and_purer_than_average(kind, preset):
    sc = quench_defaults() if kind == "quench" else opo_defaults()
    model, mm, state0 = _built(sc, preset)
    cfg = IntegratorConfig(dt=1e-2, t_final=20.0, record_every=10)
    covs, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
    uncond = evolve_unconditional(model, state0, cfg).cov_series
    assert physicality_margin(covs).min() >= 0.5 - 1e-8
    assert np.all(purity(covs) >= purity(uncond) * (1 - 1e-12))
