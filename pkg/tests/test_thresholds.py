import numpy as np
import pytest
import scipy.linalg

from battbee import consts
from battbee.detect import statespace, synthesis, thresholds
from battbee.detect.synthesis import StabilityResult
from battbee.errors import PreconditionError
from battbee.model import BattBeeParams
from battbee.pwl import piecewise_linearize

PARAMS = BattBeeParams.from_table("simulation")
DELTA = thresholds.delta_scalar(consts.DELTA)
VERIFIED = StabilityResult(True, 1.0)
N_SAMPLES = 10_000


def setup_module():
    global submodels
    ss = statespace.assemble_state_space(PARAMS)
    pwl = piecewise_linearize(PARAMS.ocv, tol=0.01)
    submodels = synthesis.build_submodels(
        ss, pwl, np.diag(consts.Q_PROC), np.diag(consts.R_MEAS)
    )


def _ball(rng, n, radius):
    """n points uniform in the 4-ball of `radius`, as columns"""
    x = rng.normal(size=(4, n))
    x /= np.linalg.norm(x, axis=0)
    return x * radius * rng.uniform(size=n) ** 0.25


def test_delta_scalar():
    assert DELTA == pytest.approx(np.sqrt(0.0202))
    assert thresholds.delta_scalar(0.5) == 0.5


def test_threshold_nonlinear_identity():
    eps = 0.25
    j2, jinf, epsilon = thresholds.threshold_nonlinear(np.eye(4), eps * np.eye(4), 0.9, 0.1, VERIFIED)
    assert epsilon == pytest.approx(eps)
    assert jinf == pytest.approx(0.1)
    assert j2 == pytest.approx(0.1 / np.sqrt(eps))


def test_threshold_nonlinear_homogeneous():
    rng = np.random.default_rng(4)
    G = rng.normal(size=(4, 4))
    P = G @ G.T + np.eye(4)
    Q = 0.3 * np.eye(4)
    base = thresholds.threshold_nonlinear(P, Q, 1.2, 0.1, VERIFIED)
    scaled = thresholds.threshold_nonlinear(5.0 * P, 5.0 * Q, 1.2, 0.1, VERIFIED)
    assert scaled == pytest.approx(base)
    doubled = thresholds.threshold_nonlinear(P, Q, 1.2, 0.2, VERIFIED)
    assert doubled[0] == pytest.approx(2 * base[0])
    assert doubled[1] == pytest.approx(2 * base[1])


def test_threshold_nonlinear_preconditions():
    with pytest.raises(PreconditionError):
        thresholds.threshold_nonlinear(np.eye(4), np.eye(4), 1.0, 0.1, None)
    with pytest.raises(PreconditionError):
        thresholds.threshold_nonlinear(np.eye(4), np.eye(4), 1.0, 0.1, StabilityResult(False, -1.0))
    with pytest.raises(PreconditionError):
        thresholds.threshold_nonlinear(-np.eye(4), np.eye(4), 1.0, 0.1, VERIFIED)
    with pytest.raises(PreconditionError):
        thresholds.threshold_nonlinear(np.eye(4), -np.eye(4), 1.0, 0.1, VERIFIED)


def test_output_peak_scalar():
    # ||exp(-t)|| peaks at t = 0
    assert thresholds.output_peak(np.array([[-1.0]]), np.array([[2.0]])) == pytest.approx(2.0)
    # non-normal transient peaking near t = 0.99
    A = np.array([[-1.0, 10.0], [0.0, -1.0]])
    C = np.array([[1.0, 0.0]])
    peak = thresholds.output_peak(A, C)
    grid = np.linspace(0.0, 20.0, 20001)
    brute = max(np.linalg.norm(C @ scipy.linalg.expm(A * t), 2) for t in grid[::20])
    assert peak >= brute - 1e-9
    assert peak == pytest.approx(brute, rel=1e-3)


def test_threshold_linear_bounds():
    for m in submodels:
        j2, jinf = thresholds.threshold_linear(m, DELTA)
        W = synthesis.solve_lyapunov(m.A_tilde, m.C)
        assert j2 == pytest.approx(np.sqrt(np.linalg.eigvalsh(W).max()) * DELTA)
        assert jinf >= np.linalg.norm(m.C, 2) * DELTA * (1 - 1e-12)
        assert j2 > 0


def test_thresholds_sound_and_tight():
    """no fault-free initial error within delta exceeds either threshold"""
    rng = np.random.default_rng(11)
    for m in submodels:
        j2, jinf = thresholds.threshold_linear(m, DELTA)
        W = synthesis.solve_lyapunov(m.A_tilde, m.C)
        rates = np.abs(np.linalg.eigvals(m.A_tilde).real)
        taus = np.concatenate([[0.0], np.geomspace(1e-3 / rates.max(), 40.0 / rates.min(), 400)])
        outputs = [m.C @ scipy.linalg.expm(m.A_tilde * tau) for tau in taus]

        worst_j2 = 0.0
        worst_jinf = 0.0
        for chunk in range(N_SAMPLES // 1000):
            X = _ball(rng, 1000, DELTA)
            energy = np.einsum("in,ij,jn->n", X, W, X)
            worst_j2 = max(worst_j2, float(np.sqrt(energy.max())))
            for CE in outputs:
                worst_jinf = max(worst_jinf, float(np.linalg.norm(CE @ X, axis=0).max()))
        assert worst_j2 <= j2 * (1 + 1e-9)
        assert worst_jinf <= jinf * (1 + consts.JINF_RTOL)

        # worst-case directions reach the thresholds
        _, vecs = np.linalg.eigh(W)
        x = DELTA * vecs[:, -1]
        assert np.sqrt(x @ W @ x) >= 0.95 * j2
        peak_on_grid = max(np.linalg.norm(CE, 2) for CE in outputs) * DELTA
        assert peak_on_grid >= 0.95 * jinf


def test_conservative_threshold():
    t = thresholds.conservative_threshold([(0.1, 1.0), (0.3, 2.0), (0.2, 3.0)], 0.14, 1.2)
    assert t.j2 == 0.3
    assert t.jinf == 3.0
    assert t.j2_segments == (0.1, 0.3, 0.2)
    assert t.inflation == 1.2
    with pytest.raises(PreconditionError):
        thresholds.conservative_threshold([])
    with pytest.raises(PreconditionError):
        thresholds.conservative_threshold([(0.1, 1.0)], inflation=0.9)
