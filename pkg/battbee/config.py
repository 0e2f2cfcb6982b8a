"""
Scenario files.

INI dialect, four sections:

    [params]    BattBee parameters, optionally on top of a preset table
    [scenario]  step, horizon, ambient, current source, initial state
    [faults]    one key per event: t, g_isc1, g_isc2
    [detector]  forgetting factor, error bound, covariances, inflation, PWL

Each section is validated by a pydantic model that forbids unknown keys.
Validation failures are reported as ConfigError with the line number of the
offending key, or of the section header when a key is missing.
"""

import configparser
import logging
import os
import re
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PositiveFloat,
    ValidationError,
    model_validator,
)

from battbee import consts
from battbee.detect.detector import DetectorConfig
from battbee.errors import ConfigError
from battbee.ingest import read_current_csv
from battbee.model import BattBeeParams, SimState
from battbee.simulate import (
    CurrentProfile,
    FaultEvent,
    Scenario,
    constant_profile,
    drive_profile,
    pulse_profile,
)

SECTIONS = ("params", "scenario", "faults", "detector")


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[Tuple[float, ...], BeforeValidator(_split)]
Quad = Annotated[Tuple[float, float, float, float], BeforeValidator(_split)]
Pair = Annotated[Tuple[float, float], BeforeValidator(_split)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsSection(_Section):
    preset: Optional[Literal["simulation", "experiment"]] = None
    C_b: Optional[PositiveFloat] = None
    C_s: Optional[PositiveFloat] = None
    R_b: Optional[PositiveFloat] = None
    R_o: Optional[PositiveFloat] = None
    C_core: Optional[PositiveFloat] = None
    C_surf: Optional[PositiveFloat] = None
    R_core: Optional[PositiveFloat] = None
    R_surf0: Optional[PositiveFloat] = None
    beta: Optional[float] = None
    h_ec: Optional[float] = None
    alpha: Optional[Quad] = None
    T_onset: Optional[float] = None
    T_peak: Optional[float] = None
    ocv: Optional[FloatList] = None
    attribute_current: Optional[bool] = None
    q_max: Optional[PositiveFloat] = None
    r_surf_min_fraction: Optional[float] = None

    @model_validator(mode="after")
    def _circuit_complete(self):
        if self.preset is None:
            missing = [
                f
                for f in consts.ELECTRICAL_FIELDS + consts.THERMAL_FIELDS
                if getattr(self, f) is None
            ]
            if missing:
                raise ValueError(f"missing {', '.join(missing)} (or give a preset)")
        return self

    def build(self) -> BattBeeParams:
        values = self.model_dump(exclude_none=True)
        preset = values.pop("preset", None)
        if preset is not None:
            return BattBeeParams.from_table(preset, **values)
        return BattBeeParams(**values)


class ScenarioSection(_Section):
    dt: PositiveFloat = consts.DEFAULT_DT
    t_end: float = Field(ge=0)
    T_amb: PositiveFloat = consts.T_AMB
    current: Optional[float] = None
    current_csv: Optional[str] = None
    profile: Optional[Literal["constant", "pulse", "drive"]] = None
    amplitude: Optional[float] = None
    period: Optional[PositiveFloat] = None
    seed: Optional[int] = None
    interpolation: Literal["hold", "linear"] = "hold"
    initial: Optional[Quad] = None
    T_peak: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _one_current_source(self):
        sources = [k for k in ("current", "current_csv", "profile") if getattr(self, k) is not None]
        if len(sources) > 1:
            raise ValueError(f"give only one of current, current_csv, profile (got {sources})")
        if self.profile in ("pulse", "drive") and self.amplitude is None:
            raise ValueError(f"profile {self.profile} needs amplitude")
        if self.profile == "pulse" and self.period is None:
            raise ValueError("profile pulse needs period")
        return self


class FaultEntry(_Section):
    t: float = Field(ge=0)
    g_isc1: float = Field(ge=0)
    g_isc2: float = Field(ge=0)


class DetectorSection(_Section):
    eta: float = Field(default=consts.ETA, gt=0, le=1)
    eta_period: PositiveFloat = consts.ETA_PERIOD
    delta: FloatList = consts.DELTA
    q_proc: Quad = consts.Q_PROC
    r_meas: Pair = consts.R_MEAS
    inflation: Optional[float] = Field(default=None, ge=1)
    pwl_tol: Optional[PositiveFloat] = None
    pwl_segments: Optional[int] = Field(default=None, ge=1, le=consts.PWL_MAX_SEGMENTS)
    mode: Literal["linear", "nonlinear"] = "linear"
    sample_period: PositiveFloat = consts.SAMPLE_PERIOD

    @model_validator(mode="after")
    def _delta_size(self):
        if len(self.delta) not in (1, 4):
            raise ValueError("delta takes 1 or 4 values")
        if self.pwl_tol is not None and self.pwl_segments is not None:
            raise ValueError("give pwl_tol or pwl_segments, not both")
        return self

    def build(
        self,
        eta: Optional[float] = None,
        inflation: Optional[float] = None,
        experimental: bool = False,
    ) -> DetectorConfig:
        """DetectorConfig with optional command-line overrides"""
        if inflation is None:
            inflation = self.inflation
        if inflation is None:
            inflation = consts.INFLATION_EXPERIMENTAL if experimental else consts.INFLATION_SYNTHETIC
        return DetectorConfig(
            eta=self.eta if eta is None else eta,
            eta_period=self.eta_period,
            delta=self.delta,
            q_proc=self.q_proc,
            r_meas=self.r_meas,
            inflation=inflation,
            pwl_tol=self.pwl_tol if self.pwl_tol is not None else consts.PWL_TOL,
            pwl_segments=self.pwl_segments,
            mode=self.mode,
        )


class ScenarioFile(BaseModel):
    """In-memory scenario file; every section is optional"""

    model_config = ConfigDict(frozen=True)

    params: Optional[ParamsSection] = None
    scenario: Optional[ScenarioSection] = None
    faults: Dict[str, FaultEntry] = Field(default_factory=dict)
    detector: Optional[DetectorSection] = None
    base_dir: str = Field(default=".", exclude=True)

    def build_params(self) -> BattBeeParams:
        if self.params is None:
            raise ConfigError("scenario file has no [params] section")
        return self.params.build()

    def fault_events(self) -> Tuple[FaultEvent, ...]:
        events = [FaultEvent(e.t, e.g_isc1, e.g_isc2) for e in self.faults.values()]
        return tuple(sorted(events, key=lambda e: e.t))

    def current_profile(self, seed: Optional[int] = None) -> CurrentProfile:
        sc = self.scenario
        if sc.current_csv is not None:
            path = sc.current_csv
            if not os.path.isabs(path):
                path = os.path.join(self.base_dir, path)
            return read_current_csv(path)
        if sc.profile == "pulse":
            return pulse_profile(sc.amplitude, sc.period, sc.t_end)
        if sc.profile == "drive":
            return drive_profile(sc.t_end, sc.amplitude, sc.seed if seed is None else seed)
        if sc.profile == "constant":
            return constant_profile(sc.amplitude or 0.0)
        return constant_profile(sc.current or 0.0)

    def build_scenario(self, dt: Optional[float] = None, seed: Optional[int] = None) -> Scenario:
        if self.scenario is None:
            raise ConfigError("scenario file has no [scenario] section")
        sc = self.scenario
        initial = SimState(*sc.initial) if sc.initial is not None else None
        return Scenario(
            dt=sc.dt if dt is None else dt,
            t_end=sc.t_end,
            T_amb=sc.T_amb,
            current=self.current_profile(seed),
            interpolation=sc.interpolation,
            faults=self.fault_events(),
            initial=initial,
            T_peak=sc.T_peak,
        )

    def build_detector(self, **overrides) -> DetectorConfig:
        section = self.detector or DetectorSection()
        return section.build(**overrides)


def _line_index(text: str) -> Tuple[Dict[str, int], Dict[Tuple[str, str], int]]:
    """1-based line numbers of section headers and keys"""
    headers: Dict[str, int] = {}
    keys: Dict[Tuple[str, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        match = re.match(r"^\[([^\]]+)\]", stripped)
        if match:
            section = match.group(1).strip()
            headers.setdefault(section, lineno)
            continue
        match = re.match(r"^([^=:\s][^=:]*?)\s*[=:]", stripped)
        if match and section is not None:
            keys.setdefault((section, match.group(1)), lineno)
    return headers, keys


def _first_error(err: ValidationError) -> Tuple[str, str]:
    first = err.errors()[0]
    loc = first.get("loc", ())
    key = str(loc[0]) if loc else ""
    return key, first.get("msg", str(err))


def parse_string(text: str, base_dir: str = ".") -> ScenarioFile:
    """Parse scenario-file text.

    Raises
    ------
    ConfigError
        syntax error, unknown section or key, invalid or missing value
    """
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError("key outside any section", err.lineno) from err
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as err:
        raise ConfigError(err.message.split(": ", 1)[-1], err.lineno or 0) from err
    except configparser.ParsingError as err:
        lineno = err.errors[0][0] if err.errors else 0
        raise ConfigError("cannot parse line", lineno) from err
    headers, keys = _line_index(text)
    sections: Dict[str, Any] = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]", headers.get(name, 0))
        values = dict(parser.items(name))
        if name == "faults":
            events = {}
            for key, raw in values.items():
                parts = _split(raw)
                if len(parts) != 3:
                    raise ConfigError(f"fault {key!r} needs t, g_isc1, g_isc2", keys.get((name, key), 0))
                try:
                    events[key] = FaultEntry(t=parts[0], g_isc1=parts[1], g_isc2=parts[2])
                except ValidationError as err:
                    raise ConfigError(f"fault {key!r}: {_first_error(err)[1]}", keys.get((name, key), 0)) from None
            sections[name] = events
            continue
        model = {"params": ParamsSection, "scenario": ScenarioSection, "detector": DetectorSection}[name]
        try:
            sections[name] = model(**values)
        except ValidationError as err:
            key, msg = _first_error(err)
            lineno = keys.get((name, key), headers.get(name, 0))
            where = f"[{name}] {key}: " if key else f"[{name}]: "
            raise ConfigError(where + msg, lineno) from None
    config = ScenarioFile(base_dir=base_dir, **sections)
    logging.info("parsed scenario file sections: %s", ", ".join(parser.sections()))
    return config


def parse_file(path: str) -> ScenarioFile:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    return parse_string(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize(config: ScenarioFile) -> str:
    """Scenario-file text; parsing it gives back an equal ScenarioFile"""
    lines: List[str] = []
    for name in SECTIONS:
        section = getattr(config, name)
        if name == "faults":
            if not section:
                continue
            lines.append("[faults]")
            for key, e in section.items():
                lines.append(f"{key} = {_format((e.t, e.g_isc1, e.g_isc2))}")
            lines.append("")
            continue
        if section is None:
            continue
        lines.append(f"[{name}]")
        dumped = section.model_dump()
        for key in type(section).model_fields:
            value = dumped[key]
            if value is None:
                continue
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def write_file(config: ScenarioFile, path: str) -> None:
    with open(path, "w") as f:
        f.write(serialize(config))


def params_section(p: BattBeeParams) -> ParamsSection:
    """[params] section reproducing a parameter set exactly"""
    return ParamsSection(**p.to_dict())
