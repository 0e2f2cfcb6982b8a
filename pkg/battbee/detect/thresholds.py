"""
Residual thresholds for fault-free operation.

Nonlinear path: Lyapunov-function bounds from a verified (P, Q).
Linear path: Gramian and output-peak bounds per PWL segment, combined
conservatively by taking the maximum.
"""

import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from battbee import consts
from battbee.detect.synthesis import LinearSubmodel, StabilityResult, solve_lyapunov
from battbee.errors import PreconditionError


class Thresholds(NamedTuple):
    j2_segments: Tuple[float, ...]
    jinf_segments: Tuple[float, ...]
    j2: float
    jinf: float
    delta: float
    inflation: float = 1.0


def delta_scalar(delta) -> float:
    """Euclidean norm of a component-wise initial-error bound"""
    return float(np.linalg.norm(np.atleast_1d(np.asarray(delta, dtype=np.float64))))


def threshold_nonlinear(
    P: np.ndarray,
    Q: np.ndarray,
    psi_max: float,
    delta: float,
    stability: Optional[StabilityResult],
) -> Tuple[float, float, float]:
    """(J2 threshold, Jinf threshold, epsilon) from a verified (P, Q).

    epsilon is the largest value with epsilon*P <= Q, the smallest
    generalised eigenvalue of (Q, P).

    Raises
    ------
    PreconditionError
        stability missing or not verified, or P, Q not positive definite
    """
    if stability is None or not stability.stable:
        raise PreconditionError("nonlinear thresholds need a verified stability certificate")
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    eig_P = np.linalg.eigvalsh(0.5 * (P + P.T))
    if eig_P.min() <= 0:
        raise PreconditionError("P must be positive definite")
    epsilon = float(scipy.linalg.eigh(0.5 * (Q + Q.T), 0.5 * (P + P.T), eigvals_only=True).min())
    if epsilon <= 0:
        raise PreconditionError("Q must be positive definite")
    ratio = max(psi_max ** 2, 1.0) * eig_P.max() / eig_P.min()
    jinf = float(np.sqrt(ratio) * delta)
    j2 = float(np.sqrt(ratio / epsilon) * delta)
    return j2, jinf, epsilon


def _output_norm(A: np.ndarray, C: np.ndarray, tau: float) -> float:
    return float(np.linalg.norm(C @ scipy.linalg.expm(A * tau), 2))


def output_peak(A_tilde: np.ndarray, C: np.ndarray, rtol: float = consts.JINF_RTOL) -> float:
    """sup over tau >= 0 of ||C exp(A tau)||.

    Log-spaced grid from well below the fastest to well beyond the slowest
    time constant, doubled until the sup moves by at most `rtol`, then
    polished with a bounded scalar search around the best grid point.
    """
    rates = np.abs(np.linalg.eigvals(A_tilde).real)
    t_lo = 1e-4 / rates.max()
    t_hi = 40.0 / rates.min()
    best_prev = None
    n = 64
    while True:
        taus = np.concatenate([[0.0], np.geomspace(t_lo, t_hi, n)])
        values = np.array([_output_norm(A_tilde, C, tau) for tau in taus])
        best = values.max()
        if best_prev is not None and abs(best - best_prev) <= rtol * best:
            break
        if n >= 2 ** 14:
            logging.warning("J_inf grid refinement stopped at %d points", n)
            break
        best_prev = best
        n *= 2
    k = int(np.argmax(values))
    if 0 < k < len(taus) - 1:
        res = scipy.optimize.minimize_scalar(
            lambda tau: -_output_norm(A_tilde, C, tau),
            bounds=(taus[k - 1], taus[k + 1]),
            method="bounded",
            options={"xatol": 1e-12 * max(taus[k], 1.0)},
        )
        best = max(best, -float(res.fun))
    return float(best)


def threshold_linear(m: LinearSubmodel, delta: float) -> Tuple[float, float]:
    """(J2, Jinf) thresholds of one segment observer.

    J2 = sqrt(lambda_max(W)) * delta with W the observability Gramian of
    (A_tilde, C); Jinf = sup ||C exp(A_tilde tau)|| * delta.
    """
    W = solve_lyapunov(m.A_tilde, m.C)
    j2 = float(np.sqrt(max(np.linalg.eigvalsh(W).max(), 0.0)) * delta)
    jinf = output_peak(m.A_tilde, m.C) * delta
    logging.debug("segment %d thresholds: J2=%.4g Jinf=%.4g", m.index, j2, jinf)
    return j2, jinf


def conservative_threshold(
    per_segment: Sequence[Tuple[float, float]],
    delta: float = float("nan"),
    inflation: float = 1.0,
) -> Thresholds:
    """maximum over segments of each threshold"""
    if not per_segment:
        raise PreconditionError("need at least one segment threshold")
    if inflation < 1.0:
        raise PreconditionError(f"inflation must be >= 1, got {inflation!r}")
    j2s = tuple(float(j2) for j2, _ in per_segment)
    jinfs = tuple(float(jinf) for _, jinf in per_segment)
    return Thresholds(j2s, jinfs, max(j2s), max(jinfs), float(delta), float(inflation))
