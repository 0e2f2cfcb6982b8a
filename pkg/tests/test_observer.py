import numpy as np
import pytest
import scipy.linalg

from battbee import consts
from battbee.detect import observer, statespace, synthesis, thresholds
from battbee.detect.observer import DetectorState
from battbee.detect.thresholds import Thresholds
from battbee.errors import MeasurementError, PreconditionError, SegmentError
from battbee.model import BattBeeParams, FaultInputs, SimState, terminal_voltage
from battbee.pwl import piecewise_linearize

PARAMS = BattBeeParams.from_table("simulation")
Q_PROC = np.diag(consts.Q_PROC)
R_MEAS = np.diag(consts.R_MEAS)


def setup_module():
    global ss, pwl, submodels, certificate
    ss = statespace.assemble_state_space(PARAMS)
    pwl = piecewise_linearize(PARAMS.ocv, tol=0.01)
    submodels = synthesis.build_submodels(ss, pwl, Q_PROC, R_MEAS)
    certificate = synthesis.synthesize_certificate(ss, pwl, Q_PROC, R_MEAS)


def test_initial_state():
    det = DetectorState.initial([0.5, 0.5, 298.15, 298.15])
    assert det.j2 == 0.0
    assert det.jinf == 0.0
    assert not det.alarm
    assert det.x_hat.shape == (4,)
    with pytest.raises(PreconditionError):
        DetectorState.initial(np.zeros(4), eta=0.0)
    with pytest.raises(PreconditionError):
        DetectorState.initial(np.zeros(4), eta=1.5)


def test_exact_estimate_gives_zero_residual():
    s = SimState(0.6, 0.55, 300.0, 299.0)
    I = -12.5
    V = terminal_voltage(PARAMS, FaultInputs(), s, I)
    det = DetectorState.initial(s.as_array())
    u = ss.inputs(I, 298.15)
    _, r = observer.nonlinear_observer_step(PARAMS, certificate.L, det, [V, 299.0], u, 0.1, ss)
    assert np.abs(r).max() <= 1e-12


def test_output_collapse_shows_in_residual():
    s = SimState(0.6, 0.6, 298.15, 298.15)
    V = terminal_voltage(PARAMS, FaultInputs(), s, 0.0)
    det = DetectorState.initial(s.as_array())
    u = ss.inputs(0.0, 298.15)
    _, r = observer.nonlinear_observer_step(PARAMS, certificate.L, det, [V - 0.1, 298.15], u, 0.1, ss)
    assert r[0] == pytest.approx(-0.1, abs=1e-12)
    assert r[1] == 0.0


def test_linear_observer_matches_closed_form():
    m = submodels[len(submodels) // 2]
    mid = 0.5 * (pwl.segments[m.index].lo + pwl.segments[m.index].hi)
    x0 = np.array([mid, mid, 298.15, 298.15]) + np.array([1e-4, -1e-4, 0.05, -0.05])
    u = ss.inputs(0.0, 298.15)
    z = np.array([m.a * mid, 298.15])
    dt, steps = 0.05, 200
    det = DetectorState.initial(x0)
    for k in range(steps):
        det, r = observer.linear_observer_step(m, det, z, u, dt)
        if k == 0:
            np.testing.assert_allclose(r, z - m.C @ x0 - ss.D @ u, atol=1e-12)
    c = ss.B @ u + m.L @ (z - ss.D @ u)
    E = scipy.linalg.expm(m.A_tilde * dt * steps)
    expected = E @ x0 + np.linalg.solve(m.A_tilde, (E - np.eye(4)) @ c)
    np.testing.assert_allclose(det.x_hat, expected, rtol=1e-9, atol=1e-8)
    assert det.segment == m.index
    assert det.t == pytest.approx(dt * steps)


def test_linear_observer_rejects_wrong_segment():
    if len(submodels) < 2:
        pytest.skip("single segment covers every estimate")
    m = submodels[0]
    outside = m.hi + 0.05
    det = DetectorState.initial([outside, outside, 298.15, 298.15])
    with pytest.raises(SegmentError):
        observer.linear_observer_step(m, det, [0.0, 298.15], ss.inputs(0.0, 298.15), 1.0)


def test_non_finite_samples():
    det = DetectorState.initial([0.5, 0.5, 298.15, 298.15])
    u = ss.inputs(0.0, 298.15)
    with pytest.raises(MeasurementError):
        observer.nonlinear_observer_step(PARAMS, certificate.L, det, [np.nan, 298.15], u, 1.0, ss)
    with pytest.raises(MeasurementError):
        observer.nonlinear_observer_step(PARAMS, certificate.L, det, [3.9, 298.15], [np.inf, 298.15, 0.0], 1.0, ss)
    with pytest.raises(MeasurementError):
        observer.linear_observer_step(submodels[0], det._replace(x_hat=np.array([0.0, 0.0, 298.15, 298.15])), [np.nan, 0.0], u, 1.0)
    with pytest.raises(PreconditionError):
        observer.nonlinear_observer_step(PARAMS, certificate.L, det, [3.9, 298.15], u, 0.0, ss)


def test_j2_zero_residual():
    det = DetectorState.initial(np.zeros(4))
    for _ in range(100):
        det = observer.j2_update(det, [0.0, 0.0], 1.0)
    assert det.j2 == 0.0


def test_j2_without_forgetting():
    c = 0.3
    det = DetectorState.initial(np.zeros(4), eta=1.0)
    for _ in range(400):
        det = observer.j2_update(det, [c, 0.0], 0.5)
    assert det.j2 == pytest.approx(c * np.sqrt(200.0), rel=1e-12)


def test_j2_forgetting_limit():
    c = 0.2
    det = DetectorState.initial(np.zeros(4), eta=0.95)
    for _ in range(500):
        det = observer.j2_update(det, [0.0, c], 1.0, eta_period=1.0)
    assert det.j2 == pytest.approx(c * np.sqrt(1.0 / 0.05), abs=1e-3)
    assert det.j2 / c == pytest.approx(4.4721, abs=1e-3)


def test_j2_forgetting_scales_with_step():
    # same decay per second at any sample period
    a = DetectorState.initial(np.zeros(4), eta=0.9)._replace(j2_sq_accum=1.0)
    b = a
    a = observer.j2_update(a, [0.0, 0.0], 1.0)
    for _ in range(10):
        b = observer.j2_update(b, [0.0, 0.0], 0.1)
    assert a.j2_sq_accum == pytest.approx(0.9)
    assert b.j2_sq_accum == pytest.approx(0.9)


def test_jinf_running_max():
    det = DetectorState.initial(np.zeros(4))
    for r in ([1.0, 0.0], [0.0, 3.0], [2.0, 0.0]):
        det = observer.jinf_update(det, r)
    assert det.jinf == 3.0


def test_decide_latches_and_inflates():
    limits = Thresholds((1.0,), (1.0,), 1.0, 1.0, 0.1, 1.2)
    det = DetectorState.initial(np.zeros(4))._replace(jinf_running=1.1)
    decision = observer.decide(det, limits, t=5.0)
    assert not decision.alarm
    assert decision.message == observer.NO_FAULT

    decision = observer.decide(det._replace(jinf_running=1.3), limits, t=6.0)
    assert decision.alarm
    assert decision.message == observer.FAULT
    assert decision.state.alarm_time == 6.0

    later = decision.state._replace(jinf_running=0.0, j2_sq_accum=0.0)
    again = observer.decide(later, limits, t=7.0)
    assert again.alarm
    assert again.state.alarm_time == 6.0

    cleared = again.state.reset()
    assert not observer.decide(cleared, limits, t=8.0).alarm


def test_decide_on_j2():
    limits = Thresholds((0.5,), (10.0,), 0.5, 10.0, 0.1)
    det = DetectorState.initial(np.zeros(4))._replace(j2_sq_accum=0.3)
    assert observer.decide(det, limits).alarm


def test_error_energy_decays():
    """fault-free error e'Pe stays under exp(-epsilon t) times its start"""
    if not certificate.stability.stable:
        pytest.skip("stability certificate not verified for this OCV")
    P = certificate.P
    _, _, eps = thresholds.threshold_nonlinear(
        P, certificate.Q, pwl.psi_max, thresholds.delta_scalar(consts.DELTA), certificate.stability
    )
    assert eps > 0
    rng = np.random.default_rng(5)
    dt = 0.05
    n_steps = int(50 / dt)
    envelope = np.exp(-eps * dt * np.arange(n_steps + 1))
    u = ss.inputs(0.0, 298.15)
    for _ in range(20):
        v = rng.uniform(0.2, 0.8)
        x = np.array([v, v, 298.15, 298.15])
        e0 = rng.normal(size=4) * np.array([0.01, 0.01, 0.5, 0.5])
        det = DetectorState.initial(x - e0)
        energy = [e0 @ P @ e0]
        for _ in range(n_steps):
            y = observer.observer_output(PARAMS, x) + ss.D @ u
            det, _ = observer.nonlinear_observer_step(PARAMS, certificate.L, det, y, u, dt, ss)
            x = x + dt * (ss.A @ x + ss.B @ u)
            e = x - det.x_hat
            energy.append(e @ P @ e)
        energy = np.array(energy)
        assert np.all(energy <= envelope * energy[0] * (1 + 1e-6))
