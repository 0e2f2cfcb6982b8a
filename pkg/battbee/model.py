"""
BattBee governing equations.

State x = [V_b, V_s, T_core, T_surf]. The two node voltages are normalised
to [0, 1], so the cell capacity in coulombs is C_b + C_s. Current is
positive on charge.

The scalar numba kernels at the bottom of this module are the single source
of the equations: the public functions below wrap them for one-off
evaluation and `battbee.simulate` calls them inside its integration loop.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numba import jit
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from battbee import consts
from battbee.errors import OcvDomainError, ParameterError

# packed parameter vector layout read by the kernels
I_C_B = 0
I_C_S = 1
I_R_B = 2
I_R_O = 3
I_C_CORE = 4
I_C_SURF = 5
I_R_CORE = 6
I_R_SURF0 = 7
I_BETA = 8
I_R_SURF_MIN = 9
I_H_EC = 10
I_A1 = 11
I_A2 = 12
I_A3 = 13
I_A4 = 14
I_T_ONSET = 15
I_Q_MAX = 16
I_ATTRIBUTE = 17
THETA_SIZE = 18

# names of the kernel outputs, in order
RATE_TERMS = (
    "dV_b/dt",
    "dV_s/dt",
    "dT_core/dt",
    "dT_surf/dt",
    "q_ohm",
    "q_ec",
    "q_decomp",
)


@dataclass(frozen=True)
class OcvPolynomial:
    """Open-circuit voltage U(V_s) = sum(lambda_i * V_s**i).

    Parameters
    ----------
    coefficients : sequence of float
        lambda_0 .. lambda_N in volts, lowest order first.

    Raises
    ------
    ParameterError
        if U is not monotonically nondecreasing on [0, 1]
    """

    coefficients: Tuple[float, ...]
    _lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        if not coeffs:
            raise ParameterError("ocv", "empty coefficient vector")
        if not np.all(np.isfinite(coeffs)):
            raise ParameterError("ocv", "non-finite coefficient")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "_lam", np.array(coeffs, dtype=np.float64))
        grid = np.linspace(0.0, 1.0, consts.OCV_MONOTONE_GRID)
        u = P.polyval(grid, self._lam)
        slack = 1e-12 * max(1.0, float(np.abs(u).max()))
        if np.any(np.diff(u) < -slack):
            raise ParameterError("ocv", "U(V_s) is not monotonically nondecreasing on [0, 1]")

    @classmethod
    def default(cls) -> "OcvPolynomial":
        return cls(consts.DEFAULT_OCV)

    @property
    def lam(self) -> np.ndarray:
        return self._lam

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, v_s: float) -> float:
        return ocv_eval(self, v_s)

    def evaluate(self, v_s: np.ndarray) -> np.ndarray:
        """vectorised U over an array already inside [0, 1]"""
        return P.polyval(np.asarray(v_s, dtype=np.float64), self._lam)

    def as_polynomial(self) -> Polynomial:
        return Polynomial(self._lam)

    def slope(self, v_s: np.ndarray) -> np.ndarray:
        """dU/dV_s"""
        return self.as_polynomial().deriv()(np.asarray(v_s, dtype=np.float64))


class FaultInputs(NamedTuple):
    """ISC conductances, 1/R_ISC,1 and 1/R_ISC,2. Zero means no fault."""

    g_isc1: float = 0.0
    g_isc2: float = 0.0

    def validate(self) -> "FaultInputs":
        for name, value in zip(self._fields, self):
            if not np.isfinite(value) or value < 0:
                raise ParameterError(name, f"conductance must be finite and >= 0, got {value!r}")
        return self

    @property
    def active(self) -> bool:
        return self.g_isc1 > 0 or self.g_isc2 > 0


class SimState(NamedTuple):
    V_b: float
    V_s: float
    T_core: float
    T_surf: float
    decomp_depleted: bool = False

    @classmethod
    def charged(cls, soc_fraction: float = 1.0, T: float = consts.T_AMB) -> "SimState":
        """relaxed cell (V_b = V_s) at uniform temperature"""
        return cls(soc_fraction, soc_fraction, T, T)

    def as_array(self) -> np.ndarray:
        return np.array([self.V_b, self.V_s, self.T_core, self.T_surf], dtype=np.float64)

    @classmethod
    def from_array(cls, x: Sequence[float], decomp_depleted: bool = False) -> "SimState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), bool(decomp_depleted))


class HeatRates(NamedTuple):
    q_ohm: float
    q_ec: float
    q_decomp: float
    q_exo: float
    q_total: float


@dataclass(frozen=True)
class BattBeeParams:
    """Complete BattBee parameter set.

    Circuit and thermal values are SI (F, ohm, J/K, K/W). `alpha` holds the
    decomposition coefficients (W, 1/K, -, 1/K). `attribute_current` selects
    the literal enthalpy-heat formula that also charges the external current
    to the ISC heat term.
    """

    C_b: float
    C_s: float
    R_b: float
    R_o: float
    C_core: float
    C_surf: float
    R_core: float
    R_surf0: float
    beta: float = consts.BETA
    h_ec: float = consts.H_EC
    alpha: Tuple[float, float, float, float] = consts.ALPHA
    T_onset: float = consts.T_ONSET
    T_peak: float = consts.T_PEAK
    ocv: OcvPolynomial = field(default_factory=OcvPolynomial.default)
    q_max: float = consts.Q_MAX
    r_surf_min_fraction: float = consts.R_SURF_MIN_FRACTION
    attribute_current: bool = False
    _theta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in consts.ELECTRICAL_FIELDS + consts.THERMAL_FIELDS + ("q_max",):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(name, f"must be finite and > 0, got {value!r}")
        if not isinstance(self.ocv, OcvPolynomial):
            object.__setattr__(self, "ocv", OcvPolynomial(self.ocv))
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != 4 or not np.all(np.isfinite(alpha)):
            raise ParameterError("alpha", "need 4 finite coefficients")
        if alpha[0] <= 0 or alpha[2] <= 0:
            raise ParameterError("alpha", "alpha_1 and alpha_3 must be > 0")
        object.__setattr__(self, "alpha", alpha)
        if not 0.0 < self.r_surf_min_fraction <= 1.0:
            raise ParameterError("r_surf_min_fraction", "must lie in (0, 1]")
        if not np.isfinite(self.h_ec) or self.h_ec < 0:
            raise ParameterError("h_ec", "must be finite and >= 0")
        object.__setattr__(self, "_theta", self._pack())
        self.check_ambient(consts.T_AMB)

    def check_ambient(self, T_amb: float, T_peak: Optional[float] = None) -> None:
        """R_surf and Q_decomp conditions over [T_amb, T_peak].

        Construction checks the reference ambient in `consts`; simulations
        re-check with their own ambient and depletion cutoff.

        Raises
        ------
        ParameterError
            beta*(T_peak - T_amb) outside (0, 1), or Q_decomp not finite and
            nonnegative on the range
        """
        T_peak = self.T_peak if T_peak is None else T_peak
        span = self.beta * (T_peak - T_amb)
        if not 0.0 < span < 1.0:
            raise ParameterError(
                "beta", f"beta*(T_peak - T_amb) = {span:.4g} must lie in (0, 1) at T_amb={T_amb:g} K"
            )
        temps = np.linspace(T_amb, T_peak, consts.DECOMP_CHECK_GRID)
        q = np.array([decomp_rate(self._theta, t) for t in temps])
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ParameterError("alpha", "Q_decomp not finite and nonnegative on [T_amb, T_peak]")

    def _pack(self) -> np.ndarray:
        theta = np.zeros(THETA_SIZE, dtype=np.float64)
        theta[I_C_B] = self.C_b
        theta[I_C_S] = self.C_s
        theta[I_R_B] = self.R_b
        theta[I_R_O] = self.R_o
        theta[I_C_CORE] = self.C_core
        theta[I_C_SURF] = self.C_surf
        theta[I_R_CORE] = self.R_core
        theta[I_R_SURF0] = self.R_surf0
        theta[I_BETA] = self.beta
        theta[I_R_SURF_MIN] = self.r_surf_min_fraction * self.R_surf0
        theta[I_H_EC] = self.h_ec
        theta[I_A1:I_A4 + 1] = self.alpha
        theta[I_T_ONSET] = self.T_onset
        theta[I_Q_MAX] = self.q_max
        theta[I_ATTRIBUTE] = 1.0 if self.attribute_current else 0.0
        return theta

    @classmethod
    def from_table(cls, name: str = "simulation", **overrides: Any) -> "BattBeeParams":
        """parameter set from one of the identified tables in `consts`"""
        try:
            table = consts.PARAMETER_TABLES[name]
        except KeyError:
            raise ParameterError("preset", f"unknown table {name!r}") from None
        values = dict(table)
        values.update(overrides)
        return cls(**values)

    @property
    def theta(self) -> np.ndarray:
        return self._theta

    @property
    def capacity(self) -> float:
        """capacity in coulombs"""
        return self.C_b + self.C_s

    @property
    def r_surf_min(self) -> float:
        return self.r_surf_min_fraction * self.R_surf0

    def replace(self, **changes: Any) -> "BattBeeParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("_theta")
        values["ocv"] = list(self.ocv.coefficients)
        values["alpha"] = list(self.alpha)
        return values


def ocv_eval(p: OcvPolynomial, V_s: float) -> float:
    """Open-circuit voltage by Horner evaluation.

    Raises
    ------
    OcvDomainError
        V_s outside [0, 1] by more than 1e-9
    """
    if not (-consts.OCV_DOMAIN_TOL <= V_s <= 1.0 + consts.OCV_DOMAIN_TOL):
        raise OcvDomainError(V_s)
    return float(horner(p.lam, min(max(V_s, 0.0), 1.0)))


def soc(p: BattBeeParams, s: SimState) -> float:
    """state of charge in percent"""
    return 100.0 * (p.C_b * s.V_b + p.C_s * s.V_s) / (p.C_b + p.C_s)


def electrical_derivatives(
    p: BattBeeParams, f: FaultInputs, s: SimState, I: float
) -> Tuple[float, float]:
    d_vb, d_vs = electrical_rhs(p.theta, s.V_b, s.V_s, I, f.g_isc1)
    return float(d_vb), float(d_vs)


def terminal_voltage(p: BattBeeParams, f: FaultInputs, s: SimState, I: float) -> float:
    return (ocv_eval(p.ocv, s.V_s) + I * p.R_o) / (1.0 + p.R_o * f.g_isc2)


def q_ohm(p: BattBeeParams, I: float) -> float:
    return I * I * p.R_o


def q_ec(p: BattBeeParams, f: FaultInputs, s: SimState, I: float) -> float:
    """ISC enthalpy heat, -h_ec * dSoC/dt restricted to the ISC drain"""
    return float(enthalpy_heat(p.theta, s.V_s, I, f.g_isc1))


def q_decomp(p: BattBeeParams, s: SimState) -> float:
    if s.decomp_depleted:
        return 0.0
    return float(decomp_rate(p.theta, s.T_core))


def r_surf(p: BattBeeParams, T_surf: float, T_amb: float) -> float:
    """surface-to-ambient resistance, linear in the gradient with a floor"""
    value = float(surface_resistance(p.theta, T_surf, T_amb))
    if value == p.r_surf_min:
        logging.debug(
            "R_surf clamped to floor %.4g K/W at T_surf - T_amb = %.2f K",
            value,
            T_surf - T_amb,
        )
    return value


def thermal_derivatives(
    p: BattBeeParams, s: SimState, q_total: float, T_amb: float
) -> Tuple[float, float]:
    d_core, d_surf = thermal_rhs(p.theta, s.T_core, s.T_surf, q_total, T_amb)
    return float(d_core), float(d_surf)


def heat_rates(p: BattBeeParams, f: FaultInputs, s: SimState, I: float) -> HeatRates:
    ohm = q_ohm(p, I)
    ec = q_ec(p, f, s, I)
    decomp = q_decomp(p, s)
    exo = ec + decomp
    return HeatRates(ohm, ec, decomp, exo, ohm + exo)


def state_derivatives(
    p: BattBeeParams, f: FaultInputs, s: SimState, I: float, T_amb: float
) -> np.ndarray:
    """full right-hand side dx/dt"""
    out = derivatives(p.theta, s.as_array(), I, f.g_isc1, T_amb, s.decomp_depleted)
    return out[:4].copy()


@jit(nopython=True)
def horner(lam, v):
    acc = 0.0
    for i in range(lam.shape[0] - 1, -1, -1):
        acc = acc * v + lam[i]
    return acc


@jit(nopython=True)
def decomp_rate(theta, T_core):
    z = T_core - theta[I_T_ONSET]
    log_num = np.log(theta[I_A1]) + theta[I_A2] * z
    u = np.log(theta[I_A3]) + theta[I_A4] * z
    # log(1 + e^u)
    if u > 0.0:
        log_den = u + np.log1p(np.exp(-u))
    else:
        log_den = np.log1p(np.exp(u))
    log_q = log_num - log_den
    if log_q >= np.log(theta[I_Q_MAX]):
        return theta[I_Q_MAX]
    return np.exp(log_q)


@jit(nopython=True)
def surface_resistance(theta, T_surf, T_amb):
    r = theta[I_R_SURF0] * (1.0 - theta[I_BETA] * (T_surf - T_amb))
    if r < theta[I_R_SURF_MIN]:
        return theta[I_R_SURF_MIN]
    return r


@jit(nopython=True)
def enthalpy_heat(theta, v_s, I, g1):
    return theta[I_H_EC] * (g1 * v_s - theta[I_ATTRIBUTE] * I) / (theta[I_C_B] + theta[I_C_S])


@jit(nopython=True)
def electrical_rhs(theta, v_b, v_s, I, g1):
    d_vb = (v_s - v_b) / (theta[I_R_B] * theta[I_C_B])
    d_vs = (v_b - v_s) / (theta[I_R_B] * theta[I_C_S]) - g1 * v_s / theta[I_C_S] + I / theta[I_C_S]
    return d_vb, d_vs


@jit(nopython=True)
def thermal_rhs(theta, t_core, t_surf, q_total, T_amb):
    r_core = theta[I_R_CORE]
    d_core = (t_surf - t_core) / (r_core * theta[I_C_CORE]) + q_total / theta[I_C_CORE]
    d_surf = (t_core - t_surf) / (r_core * theta[I_C_SURF]) - (t_surf - T_amb) / (
        surface_resistance(theta, t_surf, T_amb) * theta[I_C_SURF]
    )
    return d_core, d_surf


@jit(nopython=True)
def derivatives(theta, x, I, g1, T_amb, depleted):
    """dx/dt in slots 0-3 followed by q_ohm, q_ec, q_decomp"""
    out = np.empty(7)
    d_vb, d_vs = electrical_rhs(theta, x[0], x[1], I, g1)
    out[0] = d_vb
    out[1] = d_vs
    out[4] = I * I * theta[I_R_O]
    out[5] = enthalpy_heat(theta, x[1], I, g1)
    out[6] = 0.0 if depleted else decomp_rate(theta, x[2])
    d_core, d_surf = thermal_rhs(theta, x[2], x[3], out[4] + out[5] + out[6], T_amb)
    out[2] = d_core
    out[3] = d_surf
    return out
