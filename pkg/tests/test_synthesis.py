import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import quad_vec

from battbee.detect import statespace, synthesis
from battbee.detect.synthesis import output_matrix
from battbee.errors import ConditioningError, SynthesisError
from battbee.model import BattBeeParams, FaultInputs, OcvPolynomial, SimState, state_derivatives
from battbee.pwl import piecewise_linearize

PARAMS = BattBeeParams.from_table("simulation")
Q_PROC = np.diag([1e-8, 1e-8, 1e-4, 1e-4])
R_MEAS = np.diag([1e-4, 1e-2])


def setup_module():
    global ss, pwl, submodels
    ss = statespace.assemble_state_space(PARAMS)
    pwl = piecewise_linearize(PARAMS.ocv, tol=0.01)
    submodels = synthesis.build_submodels(ss, pwl, Q_PROC, R_MEAS)


def test_state_space_structure():
    A = ss.A
    assert A[0, 0] == pytest.approx(-1.0 / (PARAMS.R_b * PARAMS.C_b))
    assert A[0, 0] == pytest.approx(-1.0521e-2, rel=1e-4)
    # no coupling between the electrical and thermal chains
    assert np.all(A[:2, 2:] == 0)
    assert np.all(A[2:, :2] == 0)
    np.testing.assert_allclose(A[:2].sum(axis=1), 0.0, atol=1e-15)
    expected_af = np.zeros((4, 4))
    expected_af[1, 1] = -1.0 / PARAMS.C_s
    np.testing.assert_array_equal(ss.A_f, expected_af)
    np.testing.assert_array_equal(ss.B_f.ravel(), [0.0, 0.0, 1.0 / PARAMS.C_core, 0.0])
    np.testing.assert_array_equal(ss.D_f.ravel(), [1.0, 0.0])
    assert ss.B.shape == (4, 3)
    assert ss.D.shape == (2, 3)


def test_state_space_matches_model():
    """at T_surf = T_amb and negligible decomposition heat the linear form is exact"""
    p = PARAMS.replace(alpha=(1e-12, 0.1, 1e-4, 0.1))
    lin = statespace.assemble_state_space(p)
    s = SimState(0.7, 0.6, 300.0, 298.15)
    exact = state_derivatives(p, FaultInputs(), s, 12.0, 298.15)
    linear = lin.A @ s.as_array() + lin.B @ lin.inputs(12.0, 298.15)
    np.testing.assert_allclose(linear, exact, rtol=1e-9, atol=1e-12)


def test_fault_signals():
    cold = SimState(1.0, 1.0, PARAMS.T_onset - 100.0, PARAMS.T_onset - 100.0)
    f1, f2, f3 = statespace.fault_signals(PARAMS, FaultInputs(), cold, 0.0)
    assert f1 == 0.0
    assert f3 == 0.0
    assert 0 <= f2 <= PARAMS.alpha[0] * np.exp(-100 * PARAMS.alpha[1]) * (1 + 1e-12)

    s = SimState(1.0, 1.0, 298.15, 298.15)
    _, _, f3 = statespace.fault_signals(PARAMS, FaultInputs(0.0, 1e12), s, 5.0)
    assert f3 == pytest.approx(-(PARAMS.ocv(1.0) + PARAMS.R_o * 5.0), rel=1e-6)
    f1, f2, _ = statespace.fault_signals(PARAMS, FaultInputs(10.0, 0.0), s, 0.0)
    assert f1 == 10.0
    assert f2 == pytest.approx(PARAMS.h_ec * 10.0 / PARAMS.capacity, rel=1e-3)


def test_kalman_gain_scalar():
    L = synthesis.kalman_gain(np.array([[-1.0]]), [[1.0]], [[0.0]], [[1.0]])
    assert L[0, 0] == pytest.approx(0.0, abs=1e-12)
    L = synthesis.kalman_gain(np.array([[0.0]]), [[1.0]], [[1.0]], [[1.0]])
    assert L[0, 0] == pytest.approx(1.0, rel=1e-8)


def test_kalman_gain_riccati_residual():
    C = output_matrix(pwl.segments[0].a)
    A = ss.A
    R_inv = np.linalg.inv(R_MEAS)
    P = synthesis.filter_riccati(A, C, Q_PROC, R_MEAS)
    residual = A @ P + P @ A.T - P @ C.T @ R_inv @ C @ P + Q_PROC
    assert np.linalg.norm(residual, "fro") <= 1e-6 * np.linalg.norm(Q_PROC, "fro")
    np.testing.assert_allclose(P, P.T)
    assert np.linalg.eigvalsh(P).min() > 0
    L = synthesis.kalman_gain(ss, C, Q_PROC, R_MEAS)
    np.testing.assert_allclose(L, P @ C.T @ R_inv)


def test_kalman_gain_rejects_bad_inputs():
    # charge mode (eigenvalue 0) invisible when V_s is not measured
    C = np.array([[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    assert not synthesis.is_detectable(ss.A, C)
    with pytest.raises(SynthesisError):
        synthesis.kalman_gain(ss, C, Q_PROC, R_MEAS)
    with pytest.raises(SynthesisError):
        synthesis.kalman_gain(ss, output_matrix(1.0), Q_PROC, -R_MEAS)
    with pytest.raises(SynthesisError):
        synthesis.kalman_gain(ss, output_matrix(1.0), -Q_PROC, R_MEAS)


def test_submodels_hurwitz():
    assert len(submodels) == len(pwl)
    for m in submodels:
        assert synthesis.is_hurwitz(m.A_tilde)
        np.testing.assert_array_equal(m.C, output_matrix(m.a))
    assert submodels[0].contains(-1e-3)
    assert submodels[-1].contains(1.0 + 1e-3)


def test_solve_lyapunov_small_cases():
    W = synthesis.solve_lyapunov(-0.5 * np.eye(2), np.eye(2))
    np.testing.assert_allclose(W, np.eye(2), atol=1e-14)
    W = synthesis.solve_lyapunov(np.diag([-2.0, -3.0]), [[1.0, 0.0]])
    np.testing.assert_allclose(W, np.diag([0.25, 0.0]), atol=1e-14)


def test_solve_lyapunov_rejects_unstable():
    with pytest.raises(ConditioningError):
        synthesis.solve_lyapunov(np.diag([-1.0, 0.0]), np.eye(2))
    with pytest.raises(ConditioningError):
        synthesis.solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


def test_gramian_residual_and_quadrature():
    for m in submodels:
        W = synthesis.solve_lyapunov(m.A_tilde, m.C)
        CtC = m.C.T @ m.C
        residual = m.A_tilde.T @ W + W @ m.A_tilde + CtC
        assert np.linalg.norm(residual, "fro") / np.linalg.norm(CtC, "fro") <= 1e-10
        np.testing.assert_allclose(W, W.T)
        assert np.linalg.eigvalsh(W).min() >= -1e-12 * np.abs(W).max()
        reference = scipy.linalg.solve_continuous_lyapunov(m.A_tilde.T, -CtC)
        assert np.linalg.norm(reference - W, "fro") <= 1e-8 * np.linalg.norm(W, "fro")

        # integral of exp(A^T t) C^T C exp(A t) over 40 slowest time constants
        rates = np.abs(np.linalg.eigvals(m.A_tilde).real)
        horizon = 40.0 / rates.min()
        breaks = np.geomspace(1e-3 / rates.max(), horizon, 40)[:-1]

        def integrand(tau):
            E = scipy.linalg.expm(m.A_tilde * tau)
            return E.T @ CtC @ E

        quad, _ = quad_vec(integrand, 0.0, horizon, epsrel=1e-10, points=breaks)
        assert np.linalg.norm(quad - W, "fro") / np.linalg.norm(W, "fro") <= 1e-6


def test_verify_stability_open_loop():
    """L = 0 and A^T P + P A = -2Q leave M = -Q"""
    A = np.diag([-1.0, -2.0, -0.5, -0.3])
    Q = np.eye(4)
    P = synthesis.lyapunov_kron(A, 2 * Q)
    result = synthesis.verify_stability(ss._replace(A=A), np.zeros((4, 2)), P, Q, 0.5, 1.5)
    assert result.stable
    assert result.margin == pytest.approx(1.0)


def test_certificate_single_slope():
    affine = piecewise_linearize(OcvPolynomial((3.4, 0.8)), tol=1e-6)
    cert = synthesis.synthesize_certificate(ss, affine, Q_PROC, R_MEAS)
    assert cert.stability.stable
    assert cert.stability.margin == pytest.approx(0.5, rel=1e-6)
    np.testing.assert_allclose(cert.Q, 0.5 * np.eye(4), rtol=1e-6)


def test_verify_stability_without_gain_fails():
    """the charge mode is marginal, so L = 0 cannot be certified"""
    cert = synthesis.synthesize_certificate(ss, pwl, Q_PROC, R_MEAS)
    result = synthesis.verify_stability(ss, np.zeros((4, 2)), cert.P, np.eye(4), pwl.psi_min, pwl.psi_max)
    assert not result.stable


def test_verify_stability_vertices_bound_interior():
    cert = synthesis.synthesize_certificate(ss, pwl, Q_PROC, R_MEAS)
    assert np.linalg.eigvalsh(cert.P).min() > 0
    result = synthesis.verify_stability(ss, cert.L, cert.P, cert.Q, pwl.psi_min, pwl.psi_max)
    assert result.stable == cert.stability.stable
    scale = np.abs(cert.P).max() * max(1.0, np.abs(ss.A).max())
    rng = np.random.default_rng(2)
    for psi in rng.uniform(pwl.psi_min, pwl.psi_max, 10):
        H = output_matrix(psi)
        M = ss.A.T @ cert.P + cert.P @ ss.A - H.T @ cert.L.T @ cert.P - cert.P @ cert.L @ H + cert.Q
        assert np.linalg.eigvalsh(synthesis.sym(M)).max() <= -result.margin + 1e-9 * scale


def test_verify_stability_needs_positive_definite():
    result = synthesis.verify_stability(ss, np.zeros((4, 2)), -np.eye(4), np.eye(4), 0.5, 1.0)
    assert not result.stable
