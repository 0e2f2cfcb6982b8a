"""
Class to run the residual detector over a telemetry table.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from battbee import consts
from battbee.detect import observer, thresholds
from battbee.detect.statespace import assemble_state_space
from battbee.detect.synthesis import (
    Certificate,
    LinearSubmodel,
    build_submodels,
    synthesize_certificate,
)
from battbee.detect.thresholds import Thresholds
from battbee.errors import PreconditionError, TelemetryError
from battbee.model import BattBeeParams
from battbee.pwl import PwlOcv, piecewise_linearize, segment_select
from battbee.simulate import Trajectory


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    `delta` is a component-wise bound on the initial estimation error (or a
    single scalar); thresholds use its Euclidean norm. Give `pwl_segments`
    to linearise by segment count instead of `pwl_tol`.
    """

    eta: float = consts.ETA
    eta_period: float = consts.ETA_PERIOD
    delta: Tuple[float, ...] = consts.DELTA
    q_proc: Tuple[float, ...] = consts.Q_PROC
    r_meas: Tuple[float, ...] = consts.R_MEAS
    inflation: float = consts.INFLATION_SYNTHETIC
    pwl_tol: float = consts.PWL_TOL
    pwl_segments: Optional[int] = None
    mode: str = "linear"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise PreconditionError(f"eta must lie in (0, 1], got {self.eta!r}")
        if self.eta_period <= 0:
            raise PreconditionError("eta_period must be > 0")
        if self.inflation < 1.0:
            raise PreconditionError("inflation must be >= 1")
        if self.mode not in ("linear", "nonlinear"):
            raise PreconditionError(f"unknown detector mode {self.mode!r}")
        if len(self.q_proc) != 4 or len(self.r_meas) != 2:
            raise PreconditionError("q_proc needs 4 and r_meas 2 diagonal entries")
        object.__setattr__(self, "delta", tuple(float(d) for d in np.atleast_1d(self.delta)))

    @property
    def Q_proc(self) -> np.ndarray:
        return np.diag(self.q_proc)

    @property
    def R_meas(self) -> np.ndarray:
        return np.diag(self.r_meas)


class Detector:
    """ISC/TR detector for one parameter set.

    Builds the state-space form, the PWL segment observers and the
    thresholds on construction. In "nonlinear" mode a stability certificate
    is attempted first; when it cannot be verified the detector falls back
    to the segment observers.

    Parameters
    ----------
    params : BattBeeParams
    config : DetectorConfig, optional
    pwl : PwlOcv, optional
        linearised from `params.ocv` when not given

    Attributes
    -----------
    ss : StateSpace
    submodels : list of LinearSubmodel
    thresholds : Thresholds
        the set used by `decide`
    linear_thresholds : Thresholds
    certificate : Certificate or None
    mode : str
    """

    def __init__(
        self,
        params: BattBeeParams,
        config: Optional[DetectorConfig] = None,
        pwl: Optional[PwlOcv] = None,
    ):
        self.params = params
        self.config = config or DetectorConfig()
        self.ss = assemble_state_space(params)
        if pwl is None:
            if self.config.pwl_segments is not None:
                pwl = piecewise_linearize(params.ocv, m=self.config.pwl_segments)
            else:
                pwl = piecewise_linearize(params.ocv, tol=self.config.pwl_tol)
        self.pwl = pwl
        self.delta = thresholds.delta_scalar(self.config.delta)
        self.submodels: List[LinearSubmodel] = build_submodels(
            self.ss, pwl, self.config.Q_proc, self.config.R_meas
        )
        per_segment = [thresholds.threshold_linear(m, self.delta) for m in self.submodels]
        self.linear_thresholds = thresholds.conservative_threshold(
            per_segment, self.delta, self.config.inflation
        )
        self.certificate: Optional[Certificate] = None
        self.epsilon: Optional[float] = None
        self.mode = self.config.mode
        self.thresholds = self.linear_thresholds
        if self.mode == "nonlinear":
            self._use_certificate()
        logging.info(
            "detector ready (%s): J2 threshold %.4g, Jinf threshold %.4g, inflation %.2f",
            self.mode,
            self.thresholds.j2,
            self.thresholds.jinf,
            self.thresholds.inflation,
        )

    def _use_certificate(self) -> None:
        cert = synthesize_certificate(self.ss, self.pwl, self.config.Q_proc, self.config.R_meas)
        if not cert.stability.stable:
            logging.warning("stability certificate not verified, using segment observers")
            self.mode = "linear"
            return
        j2, jinf, eps = thresholds.threshold_nonlinear(
            cert.P, cert.Q, self.pwl.psi_max, self.delta, cert.stability
        )
        self.certificate = cert
        self.epsilon = eps
        self.thresholds = Thresholds((j2,), (jinf,), j2, jinf, self.delta, self.config.inflation)

    def initial_estimate(self, I: float, V: float, T_surf: float) -> np.ndarray:
        """relaxed-cell estimate from one sample: V_s from the inverted PWL OCV"""
        v_s = self.pwl.inverse(V - self.params.R_o * I)
        return np.array([v_s, v_s, T_surf, T_surf])

    def initial_state(self, x_hat0, t0: float = 0.0) -> observer.DetectorState:
        det = observer.DetectorState.initial(x_hat0, self.config.eta, t0)
        return det._replace(segment=segment_select(self.pwl, det.x_hat[1]))

    def step(
        self,
        det: observer.DetectorState,
        t: float,
        I: float,
        V: float,
        T_surf: float,
        T_amb: float,
        dt: float,
    ) -> Tuple[observer.DetectorState, np.ndarray]:
        """Process one telemetry sample: residual, estimate update, J update, decision"""
        u = np.array([I, T_amb, I * I])
        if self.mode == "nonlinear":
            segment = segment_select(self.pwl, det.x_hat[1])
            det, r = observer.nonlinear_observer_step(
                self.params, self.certificate.L, det, [V, T_surf], u, dt, self.ss
            )
            det = det._replace(segment=segment)
        else:
            segment = segment_select(self.pwl, det.x_hat[1])
            if segment != det.segment:
                logging.debug("t=%.1f s: segment %d -> %d", t, det.segment, segment)
            m = self.submodels[segment]
            det, r = observer.linear_observer_step(m, det, [V - m.b, T_surf], u, dt)
        det = observer.j2_update(det, r, dt, self.config.eta_period)
        det = observer.jinf_update(det, r)
        det = observer.decide(det, self.thresholds, t).state
        return det, r

    def run(self, telemetry: pd.DataFrame, x_hat0=None) -> pd.DataFrame:
        """Run over a TelemetryCsv-shaped table.

        Parameters
        ----------
        telemetry : pandas.DataFrame
            columns t_s, current_A, voltage_V, temp_surf_K, optional temp_amb_K
        x_hat0 : array-like, optional
            initial estimate, from the first sample when not given

        Returns
        -------
        pandas.DataFrame
            detection log, one row per sample
        """
        missing = [c for c in consts.TELEMETRY_COLUMNS if c not in telemetry.columns]
        if missing:
            raise TelemetryError(f"telemetry missing column {missing[0]!r}", missing[0])
        t = telemetry["t_s"].values.astype(np.float64)
        if len(t) < 2:
            raise TelemetryError("telemetry needs at least two samples")
        current = telemetry["current_A"].values.astype(np.float64)
        voltage = telemetry["voltage_V"].values.astype(np.float64)
        temp = telemetry["temp_surf_K"].values.astype(np.float64)
        if "temp_amb_K" in telemetry.columns:
            t_amb = telemetry["temp_amb_K"].values.astype(np.float64)
        else:
            t_amb = np.full(len(t), consts.T_AMB)
        steps = np.diff(t)
        steps = np.append(steps, steps[-1])
        if x_hat0 is None:
            x_hat0 = self.initial_estimate(current[0], voltage[0], temp[0])
        det = self.initial_state(x_hat0, t[0])
        rows = []
        for k in range(len(t)):
            det, r = self.step(det, t[k], current[k], voltage[k], temp[k], t_amb[k], steps[k])
            rows.append((t[k], r[0], r[1], det.j2, det.jinf, det.segment, det.alarm))
        self.final_state = det
        log = pd.DataFrame(rows, columns=list(consts.DETECTION_LOG_COLUMNS))
        alarm_time = self.first_alarm(log)
        if alarm_time is None:
            logging.info("%s", observer.NO_FAULT)
        else:
            logging.info("%s (first alarm at t=%.3f s)", observer.FAULT, alarm_time)
        return log

    @staticmethod
    def first_alarm(log: pd.DataFrame) -> Optional[float]:
        hits = np.flatnonzero(log["alarm"].values)
        return float(log["t"].values[hits[0]]) if len(hits) else None

    @staticmethod
    def lead_time(log: pd.DataFrame, trajectory: Trajectory, T_onset: float) -> Optional[float]:
        """seconds from the first alarm to T_core reaching T_onset"""
        alarm = Detector.first_alarm(log)
        onset = trajectory.first_crossing("T_core", T_onset)
        if alarm is None or onset is None:
            return None
        return onset - alarm
