"""
Observer gain synthesis and stability verification.

Kalman gains per PWL segment, Lyapunov/Gramian solves in Kronecker form,
and the vertex check of the nonlinear observer's stability inequality.
"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np
import scipy.linalg

from battbee import consts
from battbee.detect.statespace import StateSpace
from battbee.errors import ConditioningError, SynthesisError
from battbee.pwl import PwlOcv


class StabilityResult(NamedTuple):
    stable: bool
    margin: float


class Certificate(NamedTuple):
    """Candidate (L, P, Q) for the nonlinear observer and its verdict"""

    L: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    stability: StabilityResult


@dataclass(frozen=True, eq=False)
class LinearSubmodel:
    index: int
    a: float
    b: float
    lo: float
    hi: float
    C: np.ndarray
    L: np.ndarray
    A_tilde: np.ndarray
    ss: StateSpace

    def contains(self, v_s: float) -> bool:
        return self.lo - 1e-12 <= v_s <= self.hi + 1e-12


def output_matrix(slope: float) -> np.ndarray:
    """C = [[0, slope, 0, 0], [0, 0, 0, 1]]"""
    return np.array([[0.0, slope, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]])


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def is_detectable(A: np.ndarray, C: np.ndarray) -> bool:
    """PBH rank test on every eigenvalue with nonnegative real part"""
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A, 2))
    for lam in np.linalg.eigvals(A):
        if lam.real < -1e-9 * scale:
            continue
        pencil = np.vstack([A - lam * np.eye(n), C])
        if np.linalg.matrix_rank(pencil, tol=1e-10 * scale) < n:
            return False
    return True


def _riccati_rate(A, C, Q, R_inv, P):
    return A @ P + P @ A.T - P @ C.T @ R_inv @ C @ P + Q


def _riccati_flow(A, C, Q, R_inv, P0, rtol=consts.RICCATI_RTOL, max_iter=200_000):
    """Integrate the filter differential Riccati equation to its fixed point (RK4)"""
    P = sym(P0)
    gain = np.linalg.norm(C.T @ R_inv @ C, 2)
    h = 0.5 / max(np.linalg.norm(A, 2) + gain * np.linalg.norm(P, 2), 1e-12)
    for i in range(max_iter):
        k1 = _riccati_rate(A, C, Q, R_inv, P)
        k2 = _riccati_rate(A, C, Q, R_inv, P + 0.5 * h * k1)
        k3 = _riccati_rate(A, C, Q, R_inv, P + 0.5 * h * k2)
        k4 = _riccati_rate(A, C, Q, R_inv, P + h * k3)
        P_next = sym(P + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if not np.all(np.isfinite(P_next)):
            raise SynthesisError("Riccati iteration diverged")
        change = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if change <= rtol * np.linalg.norm(P, "fro"):
            logging.debug("Riccati flow converged after %d steps", i + 1)
            return P
    raise SynthesisError(f"Riccati iteration did not converge in {max_iter} steps")


def kalman_gain(
    ss: StateSpace, C_i: np.ndarray, Q_proc: np.ndarray, R_meas: np.ndarray
) -> np.ndarray:
    """Steady-state estimator gain L = P C^T R^-1.

    P solves A P + P A^T - P C^T R^-1 C P + Q = 0. The algebraic solution
    from scipy seeds the differential Riccati equation, which is iterated
    until the relative Frobenius change is at most 1e-10.

    `ss` may also be a bare system matrix A.

    Raises
    ------
    SynthesisError
        (A, C_i) not detectable, or bad covariances
    """
    A = ss.A if isinstance(ss, StateSpace) else ss
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C_i, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q_proc, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R_meas, dtype=np.float64))
    if np.linalg.eigvalsh(sym(Q)).min() < -1e-14 * max(1.0, np.abs(Q).max()):
        raise SynthesisError("Q_proc must be positive semidefinite")
    if np.linalg.eigvalsh(sym(R)).min() <= 0:
        raise SynthesisError("R_meas must be positive definite")
    if not is_detectable(A, C):
        raise SynthesisError("(A, C) is not detectable")
    P = filter_riccati(A, C, Q, R)
    return P @ C.T @ np.linalg.inv(R)


def filter_riccati(A: np.ndarray, C: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """stabilising solution of the filter algebraic Riccati equation"""
    R_inv = np.linalg.inv(R)
    try:
        P0 = scipy.linalg.solve_continuous_are(A.T, C.T, Q, R)
    except (np.linalg.LinAlgError, ValueError) as err:
        logging.warning("algebraic Riccati solve failed (%s), iterating from Q", err)
        P0 = Q.copy()
    return _riccati_flow(A, C, Q, R_inv, P0)


def lyapunov_kron(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """X solving A^T X + X A = -S through the vectorised Kronecker system"""
    n = A.shape[0]
    eig = np.linalg.eigvals(A)
    pair_sums = np.abs(eig[:, None] + eig[None, :])
    scale = max(1.0, np.abs(eig).max())
    if pair_sums.min() <= 1e-12 * scale:
        raise ConditioningError("eigenvalue pair sums to ~0; Lyapunov system singular")
    K = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    if np.linalg.cond(K) > 1e14:
        raise ConditioningError(f"Kronecker system ill-conditioned (cond {np.linalg.cond(K):.3g})")
    x = np.linalg.solve(K, -np.asarray(S, dtype=np.float64).reshape(-1, order="F"))
    return sym(x.reshape((n, n), order="F"))


def solve_lyapunov(A_tilde: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Observability Gramian W: A^T W + W A = -C^T C.

    Raises
    ------
    ConditioningError
        A_tilde not Hurwitz, or the Kronecker system is singular
    """
    A_tilde = np.atleast_2d(np.asarray(A_tilde, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if not is_hurwitz(A_tilde):
        raise ConditioningError("closed-loop matrix is not Hurwitz")
    return lyapunov_kron(A_tilde, C.T @ C)


def _is_positive_definite(M: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(sym(M)).min() > 0)


def verify_stability(
    ss: StateSpace,
    L: np.ndarray,
    P: np.ndarray,
    Q: np.ndarray,
    psi_min: float,
    psi_max: float,
) -> StabilityResult:
    """Vertex check of (A - L H)^T P + P (A - L H) + Q <= 0.

    M is affine in the OCV slope, so passing at H(psi_min) and H(psi_max)
    covers every slope in between. Returns the verdict and margin = -(largest
    eigenvalue over both vertices).
    """
    if not (_is_positive_definite(P) and _is_positive_definite(Q)):
        logging.warning("stability check needs P > 0 and Q > 0")
        return StabilityResult(False, -np.inf)
    worst = -np.inf
    for psi in (psi_min, psi_max):
        H = output_matrix(psi)
        M = ss.A.T @ P + P @ ss.A - H.T @ L.T @ P - P @ L @ H + Q
        worst = max(worst, float(np.linalg.eigvalsh(sym(M)).max()))
    return StabilityResult(worst <= 0.0, -worst)


def build_submodels(
    ss: StateSpace, pwl: PwlOcv, Q_proc: np.ndarray, R_meas: np.ndarray
) -> List[LinearSubmodel]:
    """one Kalman-gain observer per PWL segment"""
    submodels = []
    for i, seg in enumerate(pwl.segments):
        C = output_matrix(seg.a)
        try:
            L = kalman_gain(ss, C, Q_proc, R_meas)
        except SynthesisError as err:
            raise SynthesisError(f"segment {i}: {err}") from err
        A_tilde = ss.A - L @ C
        if not is_hurwitz(A_tilde):
            raise SynthesisError(f"segment {i}: closed loop not Hurwitz")
        # outer segments also cover estimates that overshoot [0, 1]
        lo = -np.inf if i == 0 else seg.lo
        hi = np.inf if i == len(pwl) - 1 else seg.hi
        submodels.append(LinearSubmodel(i, seg.a, seg.b, lo, hi, C, L, A_tilde, ss))
    logging.info("synthesised %d segment observers", len(submodels))
    return submodels


def synthesize_certificate(
    ss: StateSpace, pwl: PwlOcv, Q_proc: np.ndarray, R_meas: np.ndarray
) -> Certificate:
    """Candidate (L, P, Q) for the nonlinear observer.

    L is the Kalman gain at the mid slope, P solves the mid-slope Lyapunov
    equation with right-hand side -I, and Q = q*I with q half the smallest
    decay rate of the vertex closed loops in the P metric.
    """
    psi_mid = 0.5 * (pwl.psi_min + pwl.psi_max)
    H_mid = output_matrix(psi_mid)
    L = kalman_gain(ss, H_mid, Q_proc, R_meas)
    A_mid = ss.A - L @ H_mid
    if not is_hurwitz(A_mid):
        raise SynthesisError("mid-slope closed loop not Hurwitz")
    n = ss.A.shape[0]
    P = lyapunov_kron(A_mid, np.eye(n))
    rates = []
    for psi in (pwl.psi_min, pwl.psi_max):
        A_v = ss.A - L @ output_matrix(psi)
        rates.append(float(np.linalg.eigvalsh(-sym(A_v.T @ P + P @ A_v)).min()))
    q = 0.5 * min(rates)
    if q <= 0:
        logging.warning("vertex closed loops not contractive in the mid-slope metric")
        return Certificate(L, P, np.eye(n) * 1e-12, StabilityResult(False, q))
    Q = q * np.eye(n)
    stability = verify_stability(ss, L, P, Q, pwl.psi_min, pwl.psi_max)
    logging.info("stability certificate: stable=%s margin=%.3g", stability.stable, stability.margin)
    return Certificate(L, P, Q, stability)
