import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from gaussmon.errors import InvalidArgument, NoSteadyState
from gaussmon.measurement import MonitoringMatrices
from gaussmon.model import OpenModel, QuadraticHamiltonian
from gaussmon.scenario import opo_defaults, quench_defaults
from gaussmon.thermo import info_integrated
from gaussmon.validation import (
    finite_difference,
    mc_tester,
    riccati_residual,
    riccati_steady_state,
    solve_lyapunov,
)
from reference_values import OPO_I_SS, OPO_LYAPUNOV, OPO_SIGMA_SS

PRESETS = ("homodyne_x", "homodyne_p", "heterodyne")


def _built(sc, preset):
    return sc.replace(preset=preset).build()


def test_lyapunov_simple_cases():
    assert np.allclose(solve_lyapunov(-np.eye(2), 2 * np.eye(2)), np.eye(2), atol=1e-15)
    assert np.allclose(solve_lyapunov(-0.5 * np.eye(4), np.eye(4)), np.eye(4), atol=1e-15)


def test_lyapunov_rejects_unstable_drift():
    with pytest.raises(NoSteadyState):
        solve_lyapunov(np.diag([-1.0, 0.0]), np.eye(2))
    with pytest.raises(NoSteadyState):
        solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


def test_lyapunov_matches_scipy(rng):
    for _ in range(10):
        a = rng.standard_normal((4, 4))
        a -= (np.linalg.eigvals(a).real.max() + 0.3) * np.eye(4)
        b = rng.standard_normal((4, 4))
        d = b @ b.T
        assert np.allclose(solve_lyapunov(a, d), solve_continuous_lyapunov(a, -d), rtol=1e-10, atol=1e-12)


def _free_model(a, d):
    # drift with zero Hamiltonian part
    return OpenModel(QuadraticHamiltonian(np.zeros((2, 2)), None), drift=a, drift_irr=a, diffusion=d)


def test_unmonitored_flow_reaches_lyapunov_solution(rng):
    for _ in range(10):
        a = rng.standard_normal((2, 2))
        a -= (np.linalg.eigvals(a).real.max() + rng.uniform(0.3, 1.5)) * np.eye(2)
        b = rng.standard_normal((2, 2))
        d = b @ b.T + 0.1 * np.eye(2)
        model = _free_model(a, d)
        rep = riccati_steady_state(model, MonitoringMatrices.unmonitored(), np.eye(2), tol=1e-11)
        assert rep.converged
        assert np.allclose(rep.sigma_ss, solve_lyapunov(a, d), rtol=0, atol=1e-8)


@pytest.mark.parametrize("preset", PRESETS)
def test_opo_conditional_steady_state(preset):
    model, mm, _ = _built(opo_defaults(), preset)
    rep = riccati_steady_state(model, mm, np.eye(2), tol=1e-10, dt=0.05, max_time=2e4)
    assert rep.converged
    assert np.allclose(rep.sigma_ss, OPO_SIGMA_SS[preset], rtol=1e-6, atol=1e-9)
    assert info_integrated(rep.sigma_ss, OPO_LYAPUNOV) == pytest.approx(OPO_I_SS[preset], abs=1e-6)


def test_steady_state_independent_of_start():
    model, mm, _ = _built(opo_defaults(), "heterodyne")
    starts = [0.5 * np.eye(2), 10.0 * np.eye(2), np.array([[3.0, 1.0], [1.0, 0.8]])]
    finals = [riccati_steady_state(model, mm, s0, tol=1e-10, dt=0.05, max_time=2e4).sigma_ss for s0 in starts]
    for f in finals[1:]:
        assert np.allclose(f, finals[0], rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("preset", PRESETS)
def test_quench_monitoring_leaves_thermal_steady_state(preset):
    # the bath-temperature state carries no information, so sigma_ss = sigma_uc
    model, mm, _ = _built(quench_defaults(), preset)
    rep = riccati_steady_state(model, mm, 500 * np.eye(2), tol=1e-9, dt=0.01)
    assert rep.converged
    assert np.allclose(rep.sigma_ss, 50.0 * np.eye(2), rtol=1e-8)
    assert riccati_residual(model, mm, 50.0 * np.eye(2)) < 1e-8


def test_residual_history_decays_in_envelope():
    model, mm, _ = _built(quench_defaults(), "homodyne_x")
    hist = riccati_steady_state(model, mm, 500 * np.eye(2), tol=1e-9, dt=0.01).residual_history
    # the rotating frame makes the residual oscillate; its windowed maximum must fall
    window = 20
    env = [hist[i : i + window].max() for i in range(0, len(hist) - window, window)]
    assert np.all(np.diff(env) < 0)


def test_max_time_gives_unconverged_report():
    model, mm, _ = _built(opo_defaults(), "heterodyne")
    rep = riccati_steady_state(model, mm, np.eye(2), tol=1e-14, dt=0.05, max_time=1.0)
    assert not rep.converged
    assert rep.horizon == pytest.approx(1.0)


def test_finite_difference_constant_and_linear():
    assert np.allclose(finite_difference(np.full(7, 3.0), 0.1), 0.0)
    t = np.arange(9) * 0.25
    assert np.allclose(finite_difference(2.0 * t - 1.0, 0.25), 2.0)
    assert np.allclose(finite_difference(t**2, 0.25), 2 * t, atol=1e-12)


def test_finite_difference_needs_three_points():
    with pytest.raises(InvalidArgument):
        finite_difference([1.0, 2.0], 0.1)
    with pytest.raises(InvalidArgument):
        finite_difference([1.0, 2.0, 3.0], 0.0)


def test_mc_tester_on_target(rng):
    x = rng.standard_normal(10_000)
    rep = mc_tester(x - x.mean() + 1.5, 1.5)
    assert rep.passed and abs(rep.z) < 1e-9


def test_mc_tester_constant_samples():
    assert mc_tester(np.full(200, 2.0), 2.0).passed
    rep = mc_tester(np.full(200, 2.0), 2.5)
    assert not rep.passed and rep.z == -np.inf


def test_mc_tester_detects_offset(rng):
    x = rng.standard_normal(400)
    se = x.std(ddof=1) / 20
    rep = mc_tester(x, x.mean() - 10 * se)
    assert not rep.passed
    assert rep.z == pytest.approx(10.0)


def test_mc_tester_needs_samples():
    with pytest.raises(InvalidArgument):
        mc_tester(np.zeros(99), 0.0)
