"""
Fault-detection observers and streaming residual evaluation.

DetectorState is immutable; every operation returns a new state.
"""

import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np

from battbee import consts
from battbee.detect.statespace import StateSpace, assemble_state_space
from battbee.detect.synthesis import LinearSubmodel
from battbee.detect.thresholds import Thresholds
from battbee.errors import MeasurementError, PreconditionError, SegmentError
from battbee.model import BattBeeParams

NO_FAULT = "no TR/ISC fault has occurred"
FAULT = "a TR/ISC fault has occurred"


class DetectorState(NamedTuple):
    x_hat: np.ndarray
    segment: int = 0
    j2_sq_accum: float = 0.0
    jinf_running: float = 0.0
    alarm: bool = False
    alarm_time: Optional[float] = None
    eta: float = consts.ETA
    t: float = 0.0

    @classmethod
    def initial(
        cls, x_hat, eta: float = consts.ETA, t: float = 0.0, segment: int = 0
    ) -> "DetectorState":
        if not 0.0 < eta <= 1.0:
            raise PreconditionError(f"forgetting factor must lie in (0, 1], got {eta!r}")
        x = np.array(x_hat, dtype=np.float64).reshape(4)
        return cls(x, segment, 0.0, 0.0, False, None, float(eta), float(t))

    @property
    def j2(self) -> float:
        return float(np.sqrt(self.j2_sq_accum))

    @property
    def jinf(self) -> float:
        return self.jinf_running

    def reset(self) -> "DetectorState":
        """clear the alarm and the residual statistics"""
        return self._replace(j2_sq_accum=0.0, jinf_running=0.0, alarm=False, alarm_time=None)


class Decision(NamedTuple):
    state: DetectorState
    alarm: bool
    message: str


def _rk4_affine(M: np.ndarray, c: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    """one RK4 step of dx/dt = M x + c"""
    k1 = M @ x + c
    k2 = M @ (x + 0.5 * dt * k1) + c
    k3 = M @ (x + 0.5 * dt * k2) + c
    k4 = M @ (x + dt * k3) + c
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(sample, name: str, size: int) -> np.ndarray:
    arr = np.asarray(sample, dtype=np.float64).reshape(size)
    if not np.all(np.isfinite(arr)):
        raise MeasurementError(f"non-finite {name}: {arr}")
    return arr


def observer_output(p: BattBeeParams, x_hat: np.ndarray) -> np.ndarray:
    """h(x) = [U(V_s), T_surf], with V_s clipped into the OCV domain"""
    v_s = min(max(float(x_hat[1]), 0.0), 1.0)
    return np.array([p.ocv.evaluate(v_s), x_hat[3]], dtype=np.float64)


def nonlinear_observer_step(
    p: BattBeeParams,
    L: np.ndarray,
    det: DetectorState,
    y,
    u,
    dt: float,
    ss: Optional[StateSpace] = None,
) -> Tuple[DetectorState, np.ndarray]:
    """Residual r = y - h(x_hat) - D u, then RK4 on A x + B u + L r with r held.

    Raises
    ------
    MeasurementError
        non-finite output or input sample
    """
    if dt <= 0:
        raise PreconditionError(f"dt must be > 0, got {dt!r}")
    y = _checked(y, "output", 2)
    u = _checked(u, "input", 3)
    ss = ss if ss is not None else assemble_state_space(p)
    r = y - observer_output(p, det.x_hat) - ss.D @ u
    x_next = _rk4_affine(ss.A, ss.B @ u + L @ r, det.x_hat, dt)
    return det._replace(x_hat=x_next, t=det.t + dt), r


def linear_observer_step(
    m: LinearSubmodel, det: DetectorState, z, u, dt: float
) -> Tuple[DetectorState, np.ndarray]:
    """Segment observer; z = [V - b_i, T_surf].

    r = z - C_i x_hat - D u and x_hat follows A x + B u + L_i(z - C_i x - D u),
    integrated exactly to fourth order since the right-hand side is affine.

    Raises
    ------
    SegmentError
        V_s estimate outside the segment; reselect and retry
    MeasurementError
        non-finite sample
    """
    if dt <= 0:
        raise PreconditionError(f"dt must be > 0, got {dt!r}")
    if not m.contains(det.x_hat[1]):
        raise SegmentError(m.index, float(det.x_hat[1]))
    z = _checked(z, "output", 2)
    u = _checked(u, "input", 3)
    feedthrough = m.ss.D @ u
    r = z - m.C @ det.x_hat - feedthrough
    c = m.ss.B @ u + m.L @ (z - feedthrough)
    x_next = _rk4_affine(m.A_tilde, c, det.x_hat, dt)
    return det._replace(x_hat=x_next, segment=m.index, t=det.t + dt), r


def j2_update(
    det: DetectorState, r, dt: float, eta_period: float = consts.ETA_PERIOD
) -> DetectorState:
    """J2^2 <- eta^(dt / eta_period) * J2^2 + ||r||^2 dt"""
    r = np.asarray(r, dtype=np.float64)
    decay = det.eta ** (dt / eta_period)
    return det._replace(j2_sq_accum=decay * det.j2_sq_accum + float(r @ r) * dt)


def jinf_update(det: DetectorState, r) -> DetectorState:
    return det._replace(jinf_running=max(det.jinf_running, float(np.linalg.norm(r))))


def decide(det: DetectorState, thresholds: Thresholds, t: Optional[float] = None) -> Decision:
    """Compare J2 and Jinf with the inflated thresholds; the alarm latches"""
    exceeded = (
        det.j2 > thresholds.j2 * thresholds.inflation
        or det.jinf > thresholds.jinf * thresholds.inflation
    )
    if exceeded and not det.alarm:
        when = det.t if t is None else float(t)
        det = det._replace(alarm=True, alarm_time=when)
        logging.info("alarm at t=%.3f s: J2=%.4g Jinf=%.4g", when, det.j2, det.jinf)
    return Decision(det, det.alarm, FAULT if det.alarm else NO_FAULT)
