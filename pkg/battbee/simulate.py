"""
Fixed-step integration of the BattBee ODE under a scenario.

Classical RK4 with inputs held over each step. After every step the node
voltages are clamped to [0, 1], temperatures to >= 0 K, and the
decomposition latch is updated.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from numba import jit

from battbee import consts, model
from battbee.errors import IntegrationError, ScenarioError, TrajectoryError
from battbee.model import BattBeeParams, FaultInputs, SimState


class CurrentProfile(NamedTuple):
    """Sampled applied current, A, at times t, s"""

    t: np.ndarray
    current: np.ndarray

    @classmethod
    def constant(cls, value: float) -> "CurrentProfile":
        return cls(np.array([0.0]), np.array([float(value)]))

    def sample(self, grid: np.ndarray, interpolation: str = "hold") -> np.ndarray:
        """current on `grid`, holding the first value before the first sample"""
        if interpolation == "linear":
            return np.interp(grid, self.t, self.current)
        # nudge so a grid point landing an ulp short of a sample time picks it up
        idx = np.searchsorted(self.t, grid * (1.0 + 1e-12) + 1e-12, side="right") - 1
        return self.current[np.clip(idx, 0, len(self.t) - 1)]


@dataclass(frozen=True)
class FaultEvent:
    t: float
    g_isc1: float = 0.0
    g_isc2: float = 0.0

    def __post_init__(self):
        FaultInputs(self.g_isc1, self.g_isc2).validate()
        if not np.isfinite(self.t) or self.t < 0:
            raise ScenarioError(f"fault event time must be finite and >= 0, got {self.t!r}")

    @property
    def inputs(self) -> FaultInputs:
        return FaultInputs(self.g_isc1, self.g_isc2)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Applied current, ambient temperature and scheduled faults.

    Parameters
    ----------
    dt : float
        fixed step, s
    t_end : float
        duration, s
    T_amb : float
        ambient temperature, K
    current : CurrentProfile
    interpolation : str
        "hold" (zero-order hold) or "linear"
    faults : sequence of FaultEvent
        strictly increasing in time
    initial : SimState
        defaults to a fully charged cell at T_amb
    T_peak : float, optional
        depletion cutoff, overrides the parameter set when given
    """

    dt: float
    t_end: float
    T_amb: float = consts.T_AMB
    current: CurrentProfile = field(default_factory=lambda: CurrentProfile.constant(0.0))
    interpolation: str = "hold"
    faults: Tuple[FaultEvent, ...] = ()
    initial: Optional[SimState] = None
    T_peak: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ScenarioError(f"dt must be > 0, got {self.dt!r}")
        if not np.isfinite(self.t_end) or self.t_end < 0:
            raise ScenarioError(f"t_end must be >= 0, got {self.t_end!r}")
        if self.interpolation not in ("hold", "linear"):
            raise ScenarioError(f"unknown interpolation {self.interpolation!r}")
        t = np.asarray(self.current.t, dtype=np.float64)
        current = np.asarray(self.current.current, dtype=np.float64)
        if t.shape != current.shape or t.size == 0:
            raise ScenarioError("current profile needs matching, non-empty t and current")
        if np.any(np.diff(t) <= 0):
            raise ScenarioError("current samples must be strictly time-sorted")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(current))):
            raise ScenarioError("current profile contains non-finite values")
        object.__setattr__(self, "current", CurrentProfile(t, current))
        faults = tuple(self.faults)
        times = [event.t for event in faults]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("fault events must be strictly increasing in time")
        object.__setattr__(self, "faults", faults)
        if self.initial is None:
            object.__setattr__(self, "initial", SimState.charged(1.0, self.T_amb))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def fault_schedule(self, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """g_isc1, g_isc2 on the grid; each event starts at the first point >= its time"""
        g1 = np.zeros(grid.shape)
        g2 = np.zeros(grid.shape)
        for event in self.faults:
            k = max(0, math.ceil(event.t / self.dt - 1e-9))
            g1[k:] = event.g_isc1
            g2[k:] = event.g_isc2
        return g1, g2

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


class Trajectory:
    """Simulated run on a uniform grid.

    Parameters
    ----------
    df : pandas.DataFrame
        one row per grid point, columns `consts.TRAJECTORY_COLUMNS`
    dt : float
    T_amb : float

    Attributes
    ----------
    clamp_events : int
        steps after which V_b or V_s had to be clamped
    depletion_time : float or None
        time the decomposition latch engaged
    """

    def __init__(
        self,
        df: pd.DataFrame,
        dt: float,
        T_amb: float,
        clamp_events: int = 0,
        depletion_time: Optional[float] = None,
    ):
        self.df = df
        self.dt = dt
        self.T_amb = T_amb
        self.clamp_events = clamp_events
        self.depletion_time = depletion_time

    def __len__(self) -> int:
        return len(self.df)

    @property
    def t(self) -> np.ndarray:
        return self.df["t"].values

    def state_at(self, i: int) -> SimState:
        row = self.df.iloc[i]
        depleted = self.depletion_time is not None and row["t"] >= self.depletion_time
        return SimState(row["V_b"], row["V_s"], row["T_core"], row["T_surf"], depleted)

    def first_crossing(self, column: str, level: float) -> Optional[float]:
        """first time `column` reaches `level` from below"""
        hits = np.flatnonzero(self.df[column].values >= level)
        if len(hits) == 0:
            return None
        return float(self.df["t"].values[hits[0]])

    @property
    def fault_free(self) -> bool:
        return not ((self.df["g_isc1"] != 0).any() or (self.df["g_isc2"] != 0).any())


def check_step(p: BattBeeParams, dt: float) -> None:
    """dt rule for the fixed-step integrator"""
    limit = min(p.R_b * p.C_s, p.R_core * p.C_surf) / consts.DT_RULE_DIVISOR
    if dt > limit:
        raise ScenarioError(
            f"dt={dt:g} s exceeds min(R_b*C_s, R_core*C_surf)/{consts.DT_RULE_DIVISOR:g}"
            f" = {limit:.4g} s"
        )


def max_step(p: BattBeeParams) -> float:
    return min(p.R_b * p.C_s, p.R_core * p.C_surf) / consts.DT_RULE_DIVISOR


def integrate_step(
    p: BattBeeParams,
    f: FaultInputs,
    s: SimState,
    I: float,
    T_amb: float,
    dt: float,
    T_peak: Optional[float] = None,
) -> SimState:
    """One RK4 step with I and faults held constant.

    Raises
    ------
    IntegrationError
        a derivative or heat term went non-finite; `term` names it
    """
    if dt <= 0:
        raise ScenarioError(f"dt must be > 0, got {dt!r}")
    f.validate()
    x = s.as_array()
    x_next, _ = rk4_step(p.theta, x, I, f.g_isc1, T_amb, s.decomp_depleted, dt)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationError(_failing_term(p.theta, x, I, f.g_isc1, T_amb, s.decomp_depleted, dt))
    if clamp_state(x_next):
        logging.debug("node voltages clamped to [0, 1] after step: %s", x_next[:2])
    peak = p.T_peak if T_peak is None else T_peak
    depleted = s.decomp_depleted or x_next[2] >= peak or x_next[3] >= peak
    return SimState.from_array(x_next, depleted)


def run_scenario(p: BattBeeParams, sc: Scenario) -> Trajectory:
    """Integrate a scenario on its uniform grid.

    Parameters
    ----------
    p : BattBeeParams
    sc : Scenario

    Returns
    -------
    Trajectory
        rows carry the state, SoC, terminal voltage and heat rates with the
        current and fault inputs in force at each grid point

    Raises
    ------
    ScenarioError
        dt violates the step rule
    ParameterError
        beta or alpha invalid over [T_amb, T_peak] of this scenario
    IntegrationError
        stamped with the failing time
    """
    check_step(p, sc.dt)
    T_peak = p.T_peak if sc.T_peak is None else sc.T_peak
    p.check_ambient(sc.T_amb, T_peak)
    span = p.beta * (T_peak - sc.T_amb)
    if span >= 1.0 - p.r_surf_min_fraction:
        logging.warning("R_surf floor can engage below T_peak: beta*(T_peak - T_amb) = %.3f", span)
    grid = sc.grid()
    current = sc.current.sample(grid, sc.interpolation)
    g1, g2 = sc.fault_schedule(grid)
    x0 = sc.initial.as_array()
    if clamp_state(x0):
        logging.warning("initial node voltages clamped to [0, 1]")
    depleted0 = sc.initial.decomp_depleted or x0[2] >= T_peak or x0[3] >= T_peak
    states, heat, latched, clamps, first_clamp, fail = integrate(
        p.theta, x0, depleted0, current, g1, sc.T_amb, sc.dt, T_peak
    )
    if fail >= 0:
        term = _failing_term(
            p.theta, states[fail], current[fail], g1[fail], sc.T_amb, bool(latched[fail]), sc.dt
        )
        raise IntegrationError(term, float(grid[fail]))
    if clamps:
        logging.warning(
            "node voltages clamped after %d steps, first at t=%.3f s", clamps, grid[first_clamp]
        )
    df = _assemble(p, grid, states, heat, current, g1, g2)
    bad = ~np.isfinite(df.values).all(axis=1)
    if bad.any():
        raise IntegrationError("output", float(grid[np.argmax(bad)]))
    depletion_time = None
    if latched.any():
        depletion_time = float(grid[np.argmax(latched)])
        logging.info("decomposition heat depleted at t=%.1f s", depletion_time)
    logging.info("scenario integrated: %d rows, dt=%g s", len(df), sc.dt)
    return Trajectory(df, sc.dt, sc.T_amb, clamps, depletion_time)


def coulomb_check(tr: Trajectory, p: BattBeeParams) -> float:
    """Largest SoC deviation from the current integral, as a fraction.

    The current of each row is the one held over the following step, so
    the charge integral is the left-rule sum.

    Raises
    ------
    TrajectoryError
        the trajectory has fault-active rows
    """
    if not tr.fault_free:
        raise TrajectoryError("coulomb check needs a fault-free trajectory")
    current = tr.df["I"].values
    charge = np.concatenate([[0.0], np.cumsum(current[:-1] * tr.dt)])
    soc_fraction = tr.df["SoC"].values / 100.0
    deviation = soc_fraction - soc_fraction[0] - charge / p.capacity
    return float(np.max(np.abs(deviation))) if len(deviation) else 0.0


def constant_profile(current: float) -> CurrentProfile:
    return CurrentProfile.constant(current)


def pulse_profile(amplitude: float, period: float, t_end: float, rest: bool = True) -> CurrentProfile:
    """Pulse train: +amplitude, rest, -amplitude, rest; each phase period/4 long

    Without `rest` the train alternates +amplitude / -amplitude in halves.
    """
    phases = [amplitude, 0.0, -amplitude, 0.0] if rest else [amplitude, -amplitude]
    width = period / len(phases)
    n = int(np.ceil(t_end / width)) + 1
    t = np.arange(n) * width
    values = np.array([phases[i % len(phases)] for i in range(n)], dtype=np.float64)
    return CurrentProfile(t, values)


def drive_profile(
    t_end: float, amplitude: float, seed: Optional[int] = None, step: float = 1.0, smoothing: float = 0.9
) -> CurrentProfile:
    """Random drive-cycle surrogate.

    AR(1)-smoothed Gaussian current held for `step` seconds, scaled to
    `amplitude` peak and re-centred to zero net charge.
    """
    rng = np.random.default_rng(seed)
    n = int(np.ceil(t_end / step)) + 1
    noise = rng.normal(size=n)
    values = np.empty(n)
    level = 0.0
    for i in range(n):
        level = smoothing * level + (1.0 - smoothing) * noise[i]
        values[i] = level
    values -= values.mean()
    peak = np.max(np.abs(values))
    if peak > 0:
        values *= amplitude / peak
    return CurrentProfile(np.arange(n) * step, values)


def ignition_threshold(
    p: BattBeeParams,
    sc: Scenario,
    onset: float,
    lo: float,
    hi: float,
    iterations: int = 30,
) -> float:
    """Smallest g_isc1 (bisection) whose ISC at `onset` drives T_core past T_onset.

    `lo` must stay below onset temperature over the scenario and `hi` must
    cross it.
    """

    def ignites(g: float) -> bool:
        faulted = sc.replace(faults=(FaultEvent(onset, g, 0.0),))
        tr = run_scenario(p, faulted)
        return bool(tr.df["T_core"].max() >= p.T_onset)

    if ignites(lo) or not ignites(hi):
        raise ScenarioError("ignition threshold is not bracketed by [lo, hi]")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ignites(mid):
            hi = mid
        else:
            lo = mid
    logging.info("ignition threshold g_isc1 in [%.6g, %.6g] S", lo, hi)
    return hi


def to_telemetry(
    tr: Trajectory,
    period: float = consts.SAMPLE_PERIOD,
    sigma_v: float = 0.0,
    sigma_T: float = 0.0,
    seed: Optional[int] = None,
) -> pd.DataFrame:
    """Decimate a trajectory to telemetry rows, with optional Gaussian noise"""
    stride = max(1, int(round(period / tr.dt)))
    rows = tr.df.iloc[::stride]
    rng = np.random.default_rng(seed)
    voltage = rows["V"].values.copy()
    temp = rows["T_surf"].values.copy()
    if sigma_v > 0:
        voltage += rng.normal(0.0, sigma_v, size=len(rows))
    if sigma_T > 0:
        temp += rng.normal(0.0, sigma_T, size=len(rows))
    return pd.DataFrame(
        {
            "t_s": rows["t"].values,
            "current_A": rows["I"].values,
            "voltage_V": voltage,
            "temp_surf_K": temp,
            "temp_amb_K": np.full(len(rows), tr.T_amb),
        }
    )


def _assemble(
    p: BattBeeParams,
    grid: np.ndarray,
    states: np.ndarray,
    heat: np.ndarray,
    current: np.ndarray,
    g1: np.ndarray,
    g2: np.ndarray,
) -> pd.DataFrame:
    v_b, v_s = states[:, 0], states[:, 1]
    soc = 100.0 * (p.C_b * v_b + p.C_s * v_s) / p.capacity
    voltage = (p.ocv.evaluate(v_s) + current * p.R_o) / (1.0 + p.R_o * g2)
    columns = {
        "t": grid,
        "V_b": v_b,
        "V_s": v_s,
        "SoC": soc,
        "V": voltage,
        "T_core": states[:, 2],
        "T_surf": states[:, 3],
        "q_ohm": heat[:, 0],
        "q_ec": heat[:, 1],
        "q_decomp": heat[:, 2],
        "q_exo": heat[:, 1] + heat[:, 2],
        "I": current,
        "g_isc1": g1,
        "g_isc2": g2,
    }
    return pd.DataFrame(columns, columns=list(consts.TRAJECTORY_COLUMNS))


def _failing_term(theta, x, I, g1, T_amb, depleted, dt) -> str:
    """name of the first non-finite term met while replaying an RK4 step"""
    stage = np.asarray(x, dtype=np.float64)
    increments = []
    for weight in (0.0, 0.5, 0.5, 1.0):
        point = stage if not increments else stage + weight * dt * increments[-1]
        out = model.derivatives(theta, point, I, g1, T_amb, depleted)
        for i in (4, 5, 6, 0, 1, 2, 3):
            if not np.isfinite(out[i]):
                return model.RATE_TERMS[i]
        increments.append(out[:4])
    return "state"


@jit(nopython=True)
def clamp_state(x):
    clamped = False
    for j in range(2):
        if x[j] < 0.0:
            x[j] = 0.0
            clamped = True
        elif x[j] > 1.0:
            x[j] = 1.0
            clamped = True
    for j in range(2, 4):
        if x[j] < 0.0:
            x[j] = 0.0
    return clamped


@jit(nopython=True)
def rk4_step(theta, x, I, g1, T_amb, depleted, dt):
    k1 = model.derivatives(theta, x, I, g1, T_amb, depleted)
    k2 = model.derivatives(theta, x + 0.5 * dt * k1[:4], I, g1, T_amb, depleted)
    k3 = model.derivatives(theta, x + 0.5 * dt * k2[:4], I, g1, T_amb, depleted)
    k4 = model.derivatives(theta, x + dt * k3[:4], I, g1, T_amb, depleted)
    x_next = x + dt / 6.0 * (k1[:4] + 2.0 * k2[:4] + 2.0 * k3[:4] + k4[:4])
    return x_next, k1


@jit(nopython=True)
def integrate(theta, x0, depleted0, current, g1, T_amb, dt, T_peak):
    n = current.shape[0]
    states = np.zeros((n, 4))
    heat = np.zeros((n, 3))
    latched = np.zeros(n, dtype=np.bool_)
    x = x0.copy()
    depleted = depleted0
    clamps = 0
    first_clamp = -1
    for k in range(n):
        states[k] = x
        latched[k] = depleted
        x_next, d = rk4_step(theta, x, current[k], g1[k], T_amb, depleted, dt)
        for j in range(3):
            heat[k, j] = d[4 + j]
        if not np.all(np.isfinite(d)):
            return states, heat, latched, clamps, first_clamp, k
        if k == n - 1:
            break
        if not np.all(np.isfinite(x_next)):
            return states, heat, latched, clamps, first_clamp, k
        if clamp_state(x_next):
            clamps += 1
            if first_clamp < 0:
                first_clamp = k + 1
        if x_next[2] >= T_peak or x_next[3] >= T_peak:
            depleted = True
        x = x_next
    return states, heat, latched, clamps, first_clamp, -1
