import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaussmon.dynamics import IntegratorConfig, evolve_unconditional, riccati_pass
from gaussmon.errors import InvalidArgument, UnmonitoredLimit
from gaussmon.gaussian_core import GaussianState, symplectic_form
from gaussmon.measurement import (
    BathSpec,
    GeneralDyne,
    MonitoringMatrices,
    backaction,
    measurement_cm,
    monitor,
    monitoring_matrices,
    rotation,
)
from gaussmon.model import build_quench_model
from gaussmon.thermo import thermo_ledger
from reference_values import HET_VACUUM_CT, HET_VACUUM_GT

OMEGA = symplectic_form(1)


def test_measurement_cm_heterodyne():
    assert np.allclose(measurement_cm(GeneralDyne(1.0)), 0.5 * np.eye(2), atol=1e-15)


def test_measurement_cm_general_s():
    assert np.allclose(measurement_cm(GeneralDyne(2.0)), np.diag([1.0, 0.25]), atol=1e-15)


def test_measurement_cm_inefficient_noisy_heterodyne():
    cm = measurement_cm(GeneralDyne(1.0, efficiency=0.5, excess_noise=0.0))
    assert np.allclose(cm, 1.5 * np.eye(2), atol=1e-15)


def test_measurement_cm_homodyne_regularization():
    assert np.allclose(measurement_cm(GeneralDyne.homodyne_x()), np.diag([0.5e6, 0.5e-6]), rtol=1e-14)
    assert np.allclose(measurement_cm(GeneralDyne.homodyne_p()), np.diag([0.5e-6, 0.5e6]), rtol=1e-14)


def test_heterodyne_vacuum_matrices():
    mm = monitor(BathSpec.thermal(1.0, 0.0), GeneralDyne.heterodyne())
    assert np.allclose(mm.c_matrix.T, HET_VACUUM_CT, atol=1e-14)
    assert np.allclose(mm.gamma_matrix.T, HET_VACUUM_GT, atol=1e-14)
    assert np.allclose(backaction(0.5 * np.eye(2), mm), 0.0, atol=1e-15)


def test_sqrt2_variant_matrices():
    mm = monitor(BathSpec.thermal(1.0, 0.0), GeneralDyne.heterodyne(), form="sqrt2")
    assert np.allclose(mm.gamma_matrix.T, OMEGA / (2 * np.sqrt(2)), atol=1e-15)
    assert np.allclose(mm.c_matrix.T, -np.sqrt(2) * OMEGA, atol=1e-15)
    assert np.allclose(backaction(0.5 * np.eye(2), mm), np.eye(2) / 8, atol=1e-15)


def test_unknown_form_rejected():
    with pytest.raises(InvalidArgument):
        monitor(BathSpec.thermal(1.0, 0.0), GeneralDyne.heterodyne(), form="other")


def test_zero_coupling_gives_zero_matrices():
    mm = monitor(BathSpec.thermal(0.0, 3.0), GeneralDyne(0.7))
    assert mm.is_unmonitored


@pytest.mark.parametrize("n_th", [0.0, 2.0, 49.5])
@pytest.mark.parametrize("preset", ["homodyne_x", "homodyne_p", "heterodyne"])
def test_bath_state_is_fixed_point(n_th, preset):
    mm = monitor(BathSpec.thermal(0.3, n_th), GeneralDyne.preset(preset))
    chi = backaction((n_th + 0.5) * np.eye(2), mm)
    assert np.abs(chi).max() <= 1e-9 * (n_th + 1)


def test_homodyne_x_backaction_closed_form():
    gamma = 0.7
    mm = monitor(BathSpec.thermal(gamma, 0.0), GeneralDyne.homodyne_x())
    s = np.array([[2.0, 0.3], [0.3, 1.0]])
    e = (s - 0.5 * np.eye(2))[:, :1]
    assert np.allclose(backaction(s, mm), 2 * gamma * e @ e.T, atol=1e-5)


def test_heterodyne_backaction_closed_form():
    gamma = 0.7
    mm = monitor(BathSpec.thermal(gamma, 0.0), GeneralDyne.heterodyne())
    s = np.array([[2.0, 0.3], [0.3, 1.0]])
    e = s - 0.5 * np.eye(2)
    assert np.allclose(backaction(s, mm), gamma * e @ e, atol=1e-13)


def test_backaction_batched():
    mm = monitor(BathSpec.thermal(0.5, 1.0), GeneralDyne(0.3))
    ss = np.stack([np.eye(2), 3 * np.eye(2), np.diag([1.0, 5.0])])
    assert np.allclose(backaction(ss, mm), [backaction(s, mm) for s in ss])


@st.composite
def detectors(draw):
    s = draw(st.floats(1e-3, 1e3))
    return GeneralDyne(
        s,
        angle=draw(st.floats(0, np.pi)),
        efficiency=draw(st.floats(0.05, 1.0)),
        excess_noise=draw(st.floats(0.0, 2.0)),
    )


@given(detectors(), st.floats(0.01, 5.0), st.floats(0.0, 20.0), st.floats(0.5, 30.0), st.floats(-0.9, 0.9))
def test_backaction_is_psd(gd, gamma, n_th, scale, corr):
    mm = monitor(BathSpec.thermal(gamma, n_th), gd)
    s = scale * np.array([[1.0, corr], [corr, 1.0]]) + 0.5 * np.eye(2)
    chi = backaction(s, mm)
    assert np.allclose(chi, chi.T, atol=1e-12 * np.abs(chi).max())
    assert np.linalg.eigvalsh(chi).min() >= -1e-10 * max(1.0, np.abs(chi).max())


@given(detectors(), st.floats(0.0, 2 * np.pi))
def test_rotating_detector_and_state_together(gd, phi):
    # thermal bath is rotation invariant, so rotating both leaves chi covariant
    bath = BathSpec.thermal(0.8, 1.5)
    rotated = GeneralDyne(gd.s, angle=gd.angle + phi, efficiency=gd.efficiency, excess_noise=gd.excess_noise)
    s = np.array([[3.0, 0.4], [0.4, 2.0]])
    r = rotation(phi)
    lhs = backaction(r.T @ s @ r, monitor(bath, rotated))
    rhs = r.T @ backaction(s, monitor(bath, gd)) @ r
    assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.abs(rhs).max()))


def _norms(mm):
    return np.linalg.norm(mm.c_matrix), np.linalg.norm(mm.gamma_matrix)


def test_matrices_shrink_as_efficiency_drops():
    bath = BathSpec.thermal(0.1, 49.5)
    norms = np.array([_norms(monitor(bath, GeneralDyne(1.0, efficiency=e))) for e in (1.0, 0.5, 0.1, 1e-2, 1e-4)])
    assert np.all(np.diff(norms, axis=0) < 0)


def test_matrices_shrink_as_excess_noise_grows():
    bath = BathSpec.thermal(0.1, 49.5)
    norms = np.array([_norms(monitor(bath, GeneralDyne(1.0, excess_noise=x))) for x in (0.0, 1.0, 1e2, 1e4, 1e6)])
    assert np.all(np.diff(norms, axis=0) < 0)
    assert np.all(norms[-1] < 2e-2 * norms[0])


def test_zero_efficiency():
    with pytest.raises(UnmonitoredLimit):
        measurement_cm(GeneralDyne(1.0, efficiency=0.0))
    mm = monitor(BathSpec.thermal(0.1, 1.0), GeneralDyne(1.0, efficiency=0.0))
    assert mm.is_unmonitored


def test_negative_s_message():
    with pytest.raises(InvalidArgument, match="s > 0"):
        GeneralDyne(-1.0)


@pytest.mark.parametrize("kwargs", [{"efficiency": 1.5}, {"efficiency": -0.1}, {"excess_noise": -1.0}])
def test_detector_parameter_ranges(kwargs):
    with pytest.raises(InvalidArgument):
        GeneralDyne(1.0, **kwargs)


def test_unknown_preset():
    with pytest.raises(InvalidArgument, match="preset"):
        GeneralDyne.preset("photon_counting")


def test_infinite_and_zero_s_are_homodyne():
    assert math.isinf(GeneralDyne.homodyne_x().s)
    assert GeneralDyne.homodyne_p().s == 0.0


def test_monitoring_matrix_shape_check():
    with pytest.raises(InvalidArgument):
        MonitoringMatrices(np.zeros((2, 2)), np.zeros((2, 4)))


def test_sqrt2_variant_does_not_fix_bath_state():
    mm = monitoring_matrices(BathSpec.thermal(1.0, 2.0), measurement_cm(GeneralDyne(1.0)), form="sqrt2")
    assert np.abs(backaction(2.5 * np.eye(2), mm)).max() > 0.1


@pytest.mark.parametrize("preset", ["homodyne_x", "homodyne_p"])
def test_homodyne_regularization_is_converged(preset):
    # halving the regularization must not move the entropy ledger
    model = build_quench_model(1.0, 0.1, 49.5, amplitude=2.0)
    bath = BathSpec.thermal(0.1, 49.5)
    cfg = IntegratorConfig(dt=1e-2, t_final=20.0, record_every=10)
    state0 = GaussianState(np.zeros(2), 500 * np.eye(2))
    uncond = evolve_unconditional(model, state0, cfg)
    ledgers = []
    for eps in (1e-6, 5e-7):
        mm = monitor(bath, GeneralDyne.preset(preset), eps=eps)
        sigma, _ = riccati_pass(model, mm, state0, cfg, keep_gains=False)
        ledgers.append(thermo_ledger(model, mm, sigma, uncond).table())
    a, b = ledgers
    scale = np.abs(a).max(axis=0)
    assert np.all(np.abs(a - b).max(axis=0) <= 1e-4 * scale)
