"""
Single-particle model with a separator short circuit.

Each electrode particle is split into an inner ball (radius r_b) and a shell
(r_b to r_s); the state is the average concentration of each element. The
shell average stands in for the surface concentration. Current is positive
on charge, as in the BattBee model: charging delithiates the positive
electrode and lithiates the negative one.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.optimize
from numpy.polynomial import Polynomial

from battbee.errors import IntegrationError, KineticsError, ParameterError
from battbee.simulate import CurrentProfile
from battbee.spm import consts


@dataclass(frozen=True)
class ElectrodeParams:
    """One electrode.

    Parameters
    ----------
    D_s : float
        solid diffusion coefficient, m^2/s
    r_s, r_b : float
        particle and inner-element radius, m
    a : float
        volume-specific interfacial area, 1/m
    L : float
        thickness, m
    i0 : float
        exchange current density, A/m^2
    R_f : float
        film resistance, ohm m^2
    R_e : float
        electrolyte resistance, ohm
    c_max : float
        maximum concentration, mol/m^3
    ocv : tuple of float
        open-circuit potential in ascending powers of stoichiometry
    theta_full, theta_empty : float
        stoichiometry at 100 % and 0 % state of charge
    """

    name: str
    D_s: float
    r_s: float
    r_b: float
    a: float
    L: float
    i0: float
    R_f: float
    R_e: float
    c_max: float
    ocv: Tuple[float, ...]
    theta_full: float
    theta_empty: float
    _U: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for key in ("D_s", "r_s", "r_b", "a", "L", "i0", "c_max"):
            value = getattr(self, key)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(f"{self.name}.{key}", f"must be finite and > 0, got {value!r}")
        for key in ("R_f", "R_e"):
            if not np.isfinite(getattr(self, key)) or getattr(self, key) < 0:
                raise ParameterError(f"{self.name}.{key}", "must be finite and >= 0")
        if not self.r_b < self.r_s:
            raise ParameterError(f"{self.name}.r_b", "inner radius must be below r_s")
        for key in ("theta_full", "theta_empty"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ParameterError(f"{self.name}.{key}", "stoichiometry must lie in [0, 1]")
        if self.theta_full == self.theta_empty:
            raise ParameterError(f"{self.name}.theta_full", "empty stoichiometry window")
        object.__setattr__(self, "ocv", tuple(float(c) for c in self.ocv))
        object.__setattr__(self, "_U", Polynomial(self.ocv))

    @property
    def S_b(self) -> float:
        return 4.0 * np.pi * self.r_b ** 2

    @property
    def S_s(self) -> float:
        return 4.0 * np.pi * self.r_s ** 2

    @property
    def dv_b(self) -> float:
        return 4.0 * np.pi * self.r_b ** 3 / 3.0

    @property
    def dv_s(self) -> float:
        return 4.0 * np.pi * (self.r_s ** 3 - self.r_b ** 3) / 3.0

    @property
    def eps(self) -> float:
        """active-material volume fraction implied by a = 3 eps / r_s"""
        return self.a * self.r_s / 3.0

    @property
    def window(self) -> float:
        """stoichiometry swing from empty to full, signed"""
        return self.theta_full - self.theta_empty

    def U(self, theta):
        return self._U(theta)

    def exchange_rates(self) -> Tuple[float, float]:
        """(inner, shell) rate constants of the interior exchange, 1/s"""
        k = 2.0 * self.D_s * self.S_b / self.r_s
        return k / self.dv_b, k / self.dv_s


def _electrode(name: str, values: dict, ocv, theta_empty: float) -> ElectrodeParams:
    return ElectrodeParams(
        name=name,
        D_s=values["D_s"],
        r_s=values["r_s"],
        r_b=values["r_s"] * consts.INNER_RADIUS_FRACTION,
        a=3.0 * values["eps"] / values["r_s"],
        L=values["L"],
        i0=values["i0"],
        R_f=values["R_f"],
        R_e=values["R_e"],
        c_max=values["c_max"],
        ocv=ocv,
        theta_full=values["theta_full"],
        theta_empty=theta_empty,
    )


@dataclass(frozen=True)
class SpmParams:
    """Full oracle parameter set; `g_sep` is the separator short-circuit conductance, S"""

    positive: ElectrodeParams
    negative: ElectrodeParams
    S: float = consts.AREA
    alpha_ct: float = consts.ALPHA_CT
    T: float = consts.T_REF
    g_sep: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.S) or self.S <= 0:
            raise ParameterError("S", "must be finite and > 0")
        if not 0.0 < self.alpha_ct <= 1.0:
            raise ParameterError("alpha_ct", "must lie in (0, 1]")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ParameterError("T", "must be finite and > 0")
        if not np.isfinite(self.g_sep) or self.g_sep < 0:
            raise ParameterError("g_sep", "must be finite and >= 0")

    @classmethod
    def default(cls, **overrides: Any) -> "SpmParams":
        """NMC/graphite cell; the negative window closes the charge balance"""
        pos = _electrode("positive", consts.POSITIVE, consts.U_POS, consts.POSITIVE["theta_empty"])
        neg_values = consts.NEGATIVE
        q_pos = window_charge(pos, overrides.get("S", consts.AREA))
        neg_full = _electrode("negative", neg_values, consts.U_NEG, 0.0)
        theta_empty = neg_values["theta_full"] - q_pos / full_charge(
            neg_full, overrides.get("S", consts.AREA)
        )
        neg = replace(neg_full, theta_empty=theta_empty)
        return cls(positive=pos, negative=neg, **overrides)

    def electrode(self, name: str) -> ElectrodeParams:
        return self.positive if name == "positive" else self.negative

    @property
    def capacity(self) -> float:
        """usable charge of the positive window, C"""
        return window_charge(self.positive, self.S)

    @property
    def thermal_voltage(self) -> float:
        """R T / (alpha F)"""
        return consts.GAS_CONSTANT * self.T / (self.alpha_ct * consts.FARADAY)

    def replace(self, **changes: Any) -> "SpmParams":
        return replace(self, **changes)


def full_charge(e: ElectrodeParams, S: float) -> float:
    """charge of the whole stoichiometry range 0..1, C"""
    return consts.FARADAY * e.eps * e.L * S * e.c_max


def window_charge(e: ElectrodeParams, S: float) -> float:
    return full_charge(e, S) * abs(e.window)


class SpmState(NamedTuple):
    """average concentrations (mol/m^3) of the inner and shell elements"""

    cb_pos: float
    cs_pos: float
    cb_neg: float
    cs_neg: float

    @classmethod
    def at_soc(cls, p: SpmParams, soc_fraction: float = 1.0) -> "SpmState":
        """relaxed particles at a state of charge in [0, 1]"""
        c_pos = p.positive.c_max * (p.positive.theta_empty + soc_fraction * p.positive.window)
        c_neg = p.negative.c_max * (p.negative.theta_empty + soc_fraction * p.negative.window)
        return cls(c_pos, c_pos, c_neg, c_neg)

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)

    @classmethod
    def from_array(cls, x) -> "SpmState":
        return cls(*(float(v) for v in x))

    def validate(self, p: SpmParams) -> "SpmState":
        for key, c_max in zip(self._fields, (p.positive.c_max,) * 2 + (p.negative.c_max,) * 2):
            value = getattr(self, key)
            if not np.isfinite(value) or value < 0 or value > c_max:
                raise ParameterError(key, f"concentration {value!r} outside [0, {c_max}]")
        return self


def surface_stoichiometry(p: SpmParams, s: SpmState) -> Tuple[float, float]:
    return s.cs_pos / p.positive.c_max, s.cs_neg / p.negative.c_max


def open_circuit_voltage(p: SpmParams, s: SpmState) -> float:
    theta_pos, theta_neg = surface_stoichiometry(p, s)
    return float(p.positive.U(theta_pos) - p.negative.U(theta_neg))


def kinetic_resistance(p: SpmParams, electrode: str) -> float:
    """slope of the overpotential at zero current, ohm"""
    e = p.electrode(electrode)
    return p.thermal_voltage / (2.0 * e.i0 * e.a * e.L * p.S)


def overpotential(p: SpmParams, electrode: str, net_current: float) -> float:
    """Butler-Volmer overpotential for the reacting current I - I_ISC.

    Raises
    ------
    KineticsError
        non-finite asinh argument
    """
    e = p.electrode(electrode)
    sign = 1.0 if electrode == "positive" else -1.0
    arg = sign * net_current / (2.0 * e.i0 * e.a * e.L * p.S)
    if not np.isfinite(arg):
        raise KineticsError(electrode)
    return p.thermal_voltage * float(np.arcsinh(arg))


def _overpotential_difference(p: SpmParams, net_current: float) -> float:
    return overpotential(p, "positive", net_current) - overpotential(p, "negative", net_current)


def film_resistance(p: SpmParams) -> float:
    """aggregated film resistance seen by the reacting current, ohm"""
    return sum(e.R_f / (e.a * e.L * p.S) for e in (p.positive, p.negative))


def separator_current(delta_u: float, g_sep: float) -> float:
    """Ohm's law across the separator"""
    return g_sep * delta_u


def spm_isc_current(p: SpmParams, s: SpmState, I: float) -> float:
    """Short-circuit current through the separator, A.

    The separator sees the internal potential U+ - U- + eta+ - eta-, and the
    overpotentials depend on I - I_ISC, so I_ISC is the root of

        x = g_sep * (OCV + eta(I - x))

    The right-hand side is nonincreasing in x, so the root is unique and
    lies between 0 and g_sep * (OCV + eta(I)).
    """
    if p.g_sep == 0:
        return 0.0
    ocv = open_circuit_voltage(p, s)

    def residual(x):
        return x - separator_current(ocv + _overpotential_difference(p, I - x), p.g_sep)

    guess = separator_current(ocv + _overpotential_difference(p, I), p.g_sep)
    if guess == 0:
        return 0.0
    lo, hi = min(0.0, guess), max(0.0, guess)
    return float(scipy.optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=1e-13))


def cbar_derivatives(
    p: SpmParams, s: SpmState, I: float, I_isc: Optional[float] = None
) -> np.ndarray:
    """d/dt of [cb_pos, cs_pos, cb_neg, cs_neg]"""
    if I_isc is None:
        I_isc = spm_isc_current(p, s, I)
    net = I - I_isc
    out = np.empty(4)
    for j, (e, sign, c_b, c_s) in enumerate(
        ((p.positive, 1.0, s.cb_pos, s.cs_pos), (p.negative, -1.0, s.cb_neg, s.cs_neg))
    ):
        k_b, k_s = e.exchange_rates()
        flux = e.S_s / (e.dv_s * consts.FARADAY * e.a * e.L * p.S)
        out[2 * j] = k_b * (c_s - c_b)
        out[2 * j + 1] = -k_s * (c_s - c_b) - sign * flux * net
    return out


def spm_terminal_voltage(
    p: SpmParams, s: SpmState, I: float, I_isc: Optional[float] = None
) -> float:
    """V = U+ - U- + eta+ - eta- + (R_e+ + R_e-) I + R_film (I - I_ISC).

    Both electrolyte drops carry I in the same direction and add; the
    difference form (R_e+ - R_e-) is not used. The separator drop is not
    subtracted a second time: I_ISC already enters through the reacting
    current.
    """
    if I_isc is None:
        I_isc = spm_isc_current(p, s, I)
    net = I - I_isc
    electrolyte = (p.positive.R_e + p.negative.R_e) * I
    return (
        open_circuit_voltage(p, s)
        + _overpotential_difference(p, net)
        + electrolyte
        + film_resistance(p) * net
    )


def lithium_inventory(p: SpmParams, s: SpmState) -> Tuple[float, float]:
    """moles of lithium in the (positive, negative) solid phase"""
    out = []
    for e, c_b, c_s in ((p.positive, s.cb_pos, s.cs_pos), (p.negative, s.cb_neg, s.cs_neg)):
        mean = (e.dv_b * c_b + e.dv_s * c_s) / (e.dv_b + e.dv_s)
        out.append(e.eps * e.L * p.S * mean)
    return out[0], out[1]


def _stage(p: SpmParams, x: np.ndarray, I: float) -> Tuple[np.ndarray, float]:
    s = SpmState.from_array(x)
    I_isc = spm_isc_current(p, s, I)
    return cbar_derivatives(p, s, I, I_isc), I_isc


def rk4_step(p: SpmParams, x: np.ndarray, I: float, dt: float) -> np.ndarray:
    k1, _ = _stage(p, x, I)
    k2, _ = _stage(p, x + 0.5 * dt * k1, I)
    k3, _ = _stage(p, x + 0.5 * dt * k2, I)
    k4, _ = _stage(p, x + dt * k3, I)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    p: SpmParams,
    profile: CurrentProfile,
    t_end: float,
    dt: float = 1.0,
    initial: Optional[SpmState] = None,
    interpolation: str = "hold",
) -> pd.DataFrame:
    """Fixed-step RK4 run of the oracle.

    Returns
    -------
    pandas.DataFrame
        columns t_s, current_A, voltage_V, I_isc_A, cb_pos, cs_pos, cb_neg,
        cs_neg, soc
    """
    if dt <= 0 or t_end <= 0:
        raise ParameterError("dt", "dt and t_end must be > 0")
    n = int(round(t_end / dt))
    grid = np.arange(n + 1) * dt
    current = profile.sample(grid, interpolation)
    x = (initial or SpmState.at_soc(p, 1.0)).validate(p).as_array()
    states = np.empty((n + 1, 4))
    voltage = np.empty(n + 1)
    isc = np.empty(n + 1)
    c_max = np.array([p.positive.c_max] * 2 + [p.negative.c_max] * 2)
    for k in range(n + 1):
        s = SpmState.from_array(x)
        isc[k] = spm_isc_current(p, s, current[k])
        voltage[k] = spm_terminal_voltage(p, s, current[k], isc[k])
        states[k] = x
        if k == n:
            break
        x = rk4_step(p, x, current[k], dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("cbar", grid[k + 1])
        if np.any(x < 0) or np.any(x > c_max):
            raise IntegrationError("stoichiometry", grid[k + 1])
    theta_pos = states[:, 1] / p.positive.c_max
    df = pd.DataFrame(states, columns=list(SpmState._fields))
    df.insert(0, "t_s", grid)
    df.insert(1, "current_A", current)
    df.insert(2, "voltage_V", voltage)
    df.insert(3, "I_isc_A", isc)
    df["soc"] = (theta_pos - p.positive.theta_empty) / p.positive.window
    logging.info("oracle run: %d steps of %.3g s", n, dt)
    return df


def ocv_sweep(
    p: SpmParams,
    c_rate: float = consts.OCV_SWEEP_C_RATE,
    dt: float = 10.0,
    depth: float = 0.99,
    sample_period: float = 60.0,
    T: Optional[float] = None,
) -> pd.DataFrame:
    """Low-rate discharge from full charge through `depth` of the capacity.

    Returns a telemetry-shaped table (t_s, current_A, voltage_V, temp_surf_K)
    suitable for OCV fitting.
    """
    if not 0.0 < depth <= 1.0:
        raise ParameterError("depth", "must lie in (0, 1]")
    I = -c_rate * p.capacity / 3600.0
    t_end = depth * p.capacity / abs(I)
    run = simulate(p, CurrentProfile.constant(I), t_end, dt)
    stride = max(int(round(sample_period / dt)), 1)
    run = run.iloc[::stride].reset_index(drop=True)
    return pd.DataFrame(
        {
            "t_s": run["t_s"],
            "current_A": run["current_A"],
            "voltage_V": run["voltage_V"],
            "temp_surf_K": p.T if T is None else T,
        }
    )
