"""
Parameter identification from charge/discharge data.

OCV from low-rate data by Coulomb counting and polynomial least squares;
circuit and thermal parameters by seeded, bounded Nelder-Mead over
log-scaled parameters; ISC/TR parameters by the same optimizer over a
labelled fault window with everything else frozen.
"""

import logging
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.optimize
from numpy.polynomial import polynomial as P

from battbee import consts
from battbee.errors import (
    BattBeeError,
    CoverageError,
    ParameterError,
    PreconditionError,
    TelemetryError,
)
from battbee.model import BattBeeParams, OcvPolynomial, SimState
from battbee.simulate import CurrentProfile, FaultEvent, Scenario, max_step, run_scenario
from battbee.utils import is_strictly_increasing, rmse

FAULT_FIELDS = ("g_isc1", "g_isc2", "h_ec", "alpha", "T_onset")


class DataSet:
    """One measured (or synthesised) run.

    Parameters
    ----------
    df : pandas.DataFrame
        columns t_s, current_A, voltage_V, temp_surf_K
    T_amb : float
        ambient temperature, K
    capacity : float, optional
        capacity hint, C
    initial_soc : float
        state of charge at the first row, as a fraction; the cell is taken
        as relaxed there
    fault_window : (float, float), optional
        labelled interval, s, during which an ISC is active
    name : str
    """

    def __init__(
        self,
        df: pd.DataFrame,
        T_amb: float = consts.T_AMB,
        capacity: Optional[float] = None,
        initial_soc: float = 1.0,
        fault_window: Optional[Tuple[float, float]] = None,
        name: str = "",
    ):
        for column in consts.TELEMETRY_COLUMNS:
            if column not in df.columns:
                raise TelemetryError(f"data set missing column {column!r}", column)
        values = df[list(consts.TELEMETRY_COLUMNS)].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise TelemetryError("data set contains non-finite values")
        if len(df) < 2 or not is_strictly_increasing(df["t_s"].values):
            raise TelemetryError("time must be strictly increasing over at least two rows")
        if not 0.0 <= initial_soc <= 1.0:
            raise ParameterError("initial_soc", "must lie in [0, 1]")
        if fault_window is not None and not fault_window[0] < fault_window[1]:
            raise PreconditionError(f"empty fault window {fault_window!r}")
        self.df = df.reset_index(drop=True)
        self.T_amb = float(T_amb)
        self.capacity = capacity
        self.initial_soc = float(initial_soc)
        self.fault_window = fault_window
        self.name = name

    def __len__(self) -> int:
        return len(self.df)

    @property
    def t(self) -> np.ndarray:
        return self.df["t_s"].values.astype(np.float64)

    @property
    def current(self) -> np.ndarray:
        return self.df["current_A"].values.astype(np.float64)

    @property
    def voltage(self) -> np.ndarray:
        return self.df["voltage_V"].values.astype(np.float64)

    @property
    def temp_surf(self) -> np.ndarray:
        return self.df["temp_surf_K"].values.astype(np.float64)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def sample_step(self) -> float:
        """smallest sampling interval"""
        return float(np.min(np.diff(self.t)))

    def coulomb_soc(self, capacity: Optional[float] = None) -> np.ndarray:
        """state of charge fraction by left-rule Coulomb counting"""
        capacity = capacity or self.capacity
        if capacity is None or capacity <= 0:
            raise PreconditionError("Coulomb counting needs a positive capacity")
        charge = np.concatenate([[0.0], np.cumsum(self.current[:-1] * np.diff(self.t))])
        return self.initial_soc + charge / capacity

    def profile(self) -> CurrentProfile:
        return CurrentProfile(self.t - self.t[0], self.current)

    def initial_state(self, T_core: Optional[float] = None) -> SimState:
        T_surf = float(self.temp_surf[0])
        return SimState(self.initial_soc, self.initial_soc, T_core or T_surf, T_surf)


class Bounds(NamedTuple):
    """Per-field lower and upper bounds"""

    lower: Dict[str, float]
    upper: Dict[str, float]

    @classmethod
    def relative(cls, init: BattBeeParams, factor: float = 2.0, fields: Optional[Iterable[str]] = None):
        """[value / factor, value * factor] around `init`"""
        if factor <= 1.0:
            raise ParameterError("bounds", "relative factor must exceed 1")
        fields = tuple(fields or consts.ELECTRICAL_FIELDS + consts.THERMAL_FIELDS)
        lower = {f: getattr(init, f) / factor for f in fields}
        upper = {f: getattr(init, f) * factor for f in fields}
        return cls(lower, upper)

    def validate(self, init: BattBeeParams) -> "Bounds":
        for f, lo in self.lower.items():
            hi = self.upper.get(f)
            if hi is None:
                raise ParameterError(f, "missing upper bound")
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo < hi):
                raise ParameterError(f, f"bounds must be positive, finite and ordered: {lo!r}, {hi!r}")
            if not lo <= getattr(init, f) <= hi:
                raise ParameterError(f, "initial value outside bounds")
        return self


class FitReport(NamedTuple):
    params: BattBeeParams
    rmse_v: float
    rmse_T: float
    iterations: int
    trace: Tuple[float, ...]
    objective: float


class FaultFitReport(NamedTuple):
    params: BattBeeParams
    g_isc1: float
    g_isc2: float
    rmse_v: float
    rmse_T: float
    iterations: int
    trace: Tuple[float, ...]
    objective: float

    @property
    def values(self) -> Dict[str, object]:
        return {
            "g_isc1": self.g_isc1,
            "g_isc2": self.g_isc2,
            "h_ec": self.params.h_ec,
            "alpha": self.params.alpha,
            "T_onset": self.params.T_onset,
        }


def fit_ocv(
    data: Union[DataSet, Sequence[DataSet]],
    N: int = consts.OCV_ORDER,
    max_c_rate: float = consts.OCV_MAX_C_RATE,
    min_coverage: float = consts.OCV_MIN_COVERAGE,
) -> OcvPolynomial:
    """Least-squares OCV polynomial of V against Coulomb-counted SoC.

    Only rows with |I| at or below `max_c_rate` are used. When the fit is
    not monotone the order is lowered until it is.

    Raises
    ------
    CoverageError
        the low-rate rows span less than `min_coverage` of [0, 1]
    """
    datasets = [data] if isinstance(data, DataSet) else list(data)
    if not datasets:
        raise PreconditionError("fit_ocv needs at least one data set")
    socs, volts = [], []
    for d in datasets:
        if d.capacity is None:
            raise PreconditionError(f"data set {d.name!r} has no capacity hint")
        limit = max_c_rate * d.capacity / 3600.0
        keep = np.abs(d.current) <= limit * (1.0 + 1e-12)
        socs.append(d.coulomb_soc()[keep])
        volts.append(d.voltage[keep])
    soc_all = np.concatenate(socs)
    v_all = np.concatenate(volts)
    inside = (soc_all >= -1e-9) & (soc_all <= 1.0 + 1e-9)
    soc_all, v_all = np.clip(soc_all[inside], 0.0, 1.0), v_all[inside]
    coverage = float(soc_all.max() - soc_all.min()) if len(soc_all) else 0.0
    if N > 0 and coverage < min_coverage:
        raise CoverageError(coverage, min_coverage)
    if len(soc_all) == 0:
        raise CoverageError(0.0, min_coverage)
    for order in range(N, -1, -1):
        lam = P.polyfit(soc_all, v_all, order)
        try:
            ocv = OcvPolynomial(tuple(lam))
        except ParameterError:
            logging.warning("order-%d OCV fit is not monotone, refitting at order %d", order, order - 1)
            continue
        residual = rmse(ocv.evaluate(soc_all), v_all)
        logging.info("OCV fit: order %d, %d rows, RMSE %.3g V", order, len(soc_all), residual)
        return ocv
    raise ParameterError("ocv", "no monotone fit found")


def simulate_outputs(p: BattBeeParams, data: DataSet, faults: Sequence[FaultEvent] = ()):
    """model (V, T_surf) at the data times"""
    t = data.t - data.t[0]
    step = data.sample_step
    step = step / np.ceil(step / max_step(p) * (1.0 + 1e-12))
    scenario = Scenario(
        dt=step,
        t_end=float(np.ceil(t[-1] / step - 1e-9) * step),
        T_amb=data.T_amb,
        current=data.profile(),
        faults=tuple(faults),
        initial=data.initial_state(),
    )
    tr = run_scenario(p, scenario)
    return np.interp(t, tr.t, tr.df["V"].values), np.interp(t, tr.t, tr.df["T_surf"].values)


class _Objective:
    """w_V RMSE(V) + w_T RMSE(T_surf) averaged over data sets; +inf on failure"""

    def __init__(self, build, datasets, weights, mask=None, faults=None):
        self.build = build
        self.datasets = datasets
        self.w_v, self.w_T = weights
        self.mask = mask
        self.faults = faults
        self.trace: List[float] = []
        self.best = (np.inf, None)

    def errors(self, p: BattBeeParams) -> Tuple[float, float]:
        ev, eT = [], []
        for i, d in enumerate(self.datasets):
            faults = self.faults(p) if self.faults else ()
            v, T = simulate_outputs(p, d, faults)
            keep = self.mask[i] if self.mask is not None else slice(None)
            ev.append(rmse(v[keep], d.voltage[keep]))
            eT.append(rmse(T[keep], d.temp_surf[keep]))
        return float(np.mean(ev)), float(np.mean(eT))

    def __call__(self, x: np.ndarray) -> float:
        try:
            p = self.build(x)
            ev, eT = self.errors(p)
            value = self.w_v * ev + self.w_T * eT
        except (BattBeeError, FloatingPointError, ValueError) as err:
            logging.warning("candidate rejected (%s), objective set to +inf", err)
            value = np.inf
        if not np.isfinite(value):
            value = np.inf
        self.trace.append(value)
        if value < self.best[0]:
            self.best = (value, np.array(x, copy=True))
        return value


def _minimize(objective, x0, bounds, seed, restarts, maxiter, step=0.1) -> Tuple[np.ndarray, int]:
    """bounded Nelder-Mead from x0, then seeded restarts from the best point"""
    rng = np.random.default_rng(seed)
    n = len(x0)
    x_best = np.array(x0, dtype=np.float64)
    iterations = 0
    for attempt in range(restarts + 1):
        if attempt == 0:
            signs = np.ones(n)
        else:
            signs = rng.choice([-1.0, 1.0], size=n)
        simplex = np.vstack([x_best, x_best + step * np.diag(signs)])
        if bounds is not None:
            lo = np.array([b[0] for b in bounds])
            hi = np.array([b[1] for b in bounds])
            simplex = np.clip(simplex, lo, hi)
        res = scipy.optimize.minimize(
            objective,
            x_best,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "initial_simplex": simplex,
                "maxiter": maxiter,
                "maxfev": 2 * maxiter,
                "xatol": 1e-7,
                "fatol": 1e-12,
                "adaptive": n > 4,
            },
        )
        iterations += int(res.nit)
        x_best = objective.best[1] if objective.best[1] is not None else res.x
        step *= 0.5
    return x_best, iterations


def fit_parameters(
    data: Union[DataSet, Sequence[DataSet]],
    init: BattBeeParams,
    bounds: Optional[Bounds] = None,
    weights: Tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
    restarts: int = consts.NM_RESTARTS,
    maxiter: int = consts.NM_MAXITER,
) -> FitReport:
    """Fit circuit and thermal parameters to measured V and T_surf.

    Stages: electrical fields, then thermal fields, then all free fields
    jointly. A channel with zero weight leaves its fields at `init`.

    Parameters
    ----------
    data : DataSet or list of DataSet
    init : BattBeeParams
        starting point; the OCV and the ISC/TR fields stay fixed
    bounds : Bounds, optional
        defaults to a factor of 2 around `init`
    weights : (float, float)
        (w_V, w_T)
    seed : int
        restart seed; a fixed seed gives an identical report

    Returns
    -------
    FitReport
    """
    datasets = [data] if isinstance(data, DataSet) else list(data)
    if not datasets:
        raise PreconditionError("fit_parameters needs at least one data set")
    w_v, w_T = (float(w) for w in weights)
    if w_v < 0 or w_T < 0 or w_v + w_T == 0:
        raise ParameterError("weights", "need nonnegative weights, not both zero")
    bounds = (bounds or Bounds.relative(init)).validate(init)
    electrical = tuple(f for f in consts.ELECTRICAL_FIELDS if w_v > 0 and f in bounds.lower)
    thermal = tuple(f for f in consts.THERMAL_FIELDS if w_T > 0 and f in bounds.lower)
    stages = [s for s in (electrical, thermal) if s]
    if electrical and thermal:
        stages.append(electrical + thermal)
    current = init
    trace: List[float] = []
    iterations = 0
    for k, free in enumerate(stages):
        scale = np.array([getattr(current, f) for f in free])

        def build(x, free=free, scale=scale, base=current):
            return base.replace(**dict(zip(free, (scale * np.exp(x)).tolist())))

        log_bounds = [
            (np.log(bounds.lower[f] / s), np.log(bounds.upper[f] / s)) for f, s in zip(free, scale)
        ]
        objective = _Objective(build, datasets, (w_v, w_T))
        x, nit = _minimize(objective, np.zeros(len(free)), log_bounds, seed + k, restarts, maxiter)
        current = build(x)
        trace.extend(objective.trace)
        iterations += nit
        logging.info("fit stage %s: objective %.6g after %d iterations", free, objective.best[0], nit)
    final = _Objective(lambda x: current, datasets, (w_v, w_T))
    ev, eT = final.errors(current)
    return FitReport(current, ev, eT, iterations, tuple(trace), w_v * ev + w_T * eT)


def fit_fault_parameters(
    data: DataSet,
    base: BattBeeParams,
    free: Sequence[str] = FAULT_FIELDS,
    guess: Optional[Dict[str, float]] = None,
    weights: Tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
    restarts: int = consts.NM_RESTARTS,
    maxiter: int = consts.NM_MAXITER,
) -> FaultFitReport:
    """Fine-tune ISC and TR parameters over the labelled fault window.

    The ISC (g_isc1, g_isc2) starts at the window start; residuals count
    only rows inside the window. Conductances are optimised as g = x**2 so
    zero is reachable; the remaining fault fields are log-scaled.

    Raises
    ------
    PreconditionError
        the data set has no labelled fault window
    """
    if data.fault_window is None:
        raise PreconditionError("fault fit needs a data set with a labelled fault window")
    unknown = [f for f in free if f not in FAULT_FIELDS]
    if unknown or not free:
        raise ParameterError("free", f"unknown or empty fault fields {unknown!r}")
    guess = dict(guess or {})
    t0, t1 = data.fault_window
    window = (data.t >= t0) & (data.t <= t1)
    if not window.any():
        raise PreconditionError("fault window contains no samples")

    names: List[str] = []
    x0: List[float] = []
    kinds: List[str] = []
    for f in free:
        if f in ("g_isc1", "g_isc2"):
            names.append(f)
            x0.append(float(np.sqrt(max(guess.get(f, 1.0), 0.0))))
            kinds.append("square")
        elif f == "alpha":
            start = guess.get("alpha", base.alpha)
            for i in range(4):
                names.append(f"alpha{i}")
                x0.append(0.0)
                kinds.append("log" if start[i] > 0 else "linear")
        else:
            names.append(f)
            x0.append(0.0)
            kinds.append("log")
    alpha0 = np.array(guess.get("alpha", base.alpha), dtype=np.float64)
    scalar0 = {f: float(guess.get(f, getattr(base, f))) for f in ("h_ec", "T_onset")}

    def decode(x) -> Dict[str, float]:
        values: Dict[str, float] = {g: float(guess.get(g, 0.0)) for g in ("g_isc1", "g_isc2")}
        alpha = alpha0.copy()
        for name, kind, xi in zip(names, kinds, x):
            if kind == "square":
                values[name] = float(xi * xi)
            elif name.startswith("alpha"):
                i = int(name[-1])
                alpha[i] = alpha0[i] * np.exp(xi) if kind == "log" else alpha0[i] + xi
            else:
                values[name] = scalar0[name] * float(np.exp(xi))
        values["alpha"] = tuple(alpha.tolist())
        return values

    def build(x) -> BattBeeParams:
        values = decode(x)
        changes = {k: v for k, v in values.items() if k in ("h_ec", "T_onset", "alpha")}
        return base.replace(**changes)

    conductances = {"g": (0.0, 0.0)}

    def faults(p: BattBeeParams):
        g1, g2 = conductances["g"]
        return (FaultEvent(t0 - data.t[0], g1, g2),)

    class _FaultObjective(_Objective):
        def __call__(self, x):
            values = decode(x)
            conductances["g"] = (values["g_isc1"], values["g_isc2"])
            return super().__call__(x)

    objective = _FaultObjective(build, [data], weights, mask=[window], faults=faults)
    x, iterations = _minimize(objective, np.array(x0), None, seed, restarts, maxiter)
    values = decode(x)
    conductances["g"] = (values["g_isc1"], values["g_isc2"])
    params = build(x)
    ev, eT = objective.errors(params)
    logging.info(
        "fault fit: g_isc1=%.4g S, g_isc2=%.4g S, RMSE_V %.3g V, RMSE_T %.3g K",
        values["g_isc1"],
        values["g_isc2"],
        ev,
        eT,
    )
    w_v, w_T = weights
    return FaultFitReport(
        params,
        values["g_isc1"],
        values["g_isc2"],
        ev,
        eT,
        iterations,
        tuple(objective.trace),
        w_v * ev + w_T * eT,
    )
