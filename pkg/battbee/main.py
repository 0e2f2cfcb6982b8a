"""
Workflow functions and the `battbee` command line.

Each `run_*` function takes plain arguments, writes its outputs plus a run
report next to them, and returns an exit code. `cli()` parses arguments,
dispatches and maps package errors to exit codes.
"""

import argparse
import logging
import sys
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from battbee import config, consts, errors, identify, ingest
from battbee.detect.detector import Detector
from battbee.pwl import piecewise_linearize
from battbee.report import RunReport, report_path
from battbee.simulate import pulse_profile, run_scenario, to_telemetry
from battbee.spm.model import SpmParams
from battbee.spm.reduction import compare_with_battbee
from battbee.utils import configure_logging

EXIT_CODES = (
    ((errors.ConfigError, errors.TelemetryError, errors.ScenarioError, errors.ParameterError), consts.EXIT_PARSE),
    ((errors.SynthesisError,), consts.EXIT_DETECTABILITY),
    ((errors.BattBeeError,), consts.EXIT_NUMERIC),
)

DETECT_EPILOG = """\
The default [detector] delta ({default}) bounds the initial estimation
error of noise-free synthetic telemetry. Measured telemetry with sensor
noise raises false alarms at that bound; widen it to noise level, e.g.

  [detector]
  delta = {measured}
  inflation = {inflation}
""".format(
    default=", ".join(f"{v:g}" for v in consts.DELTA),
    measured=", ".join(f"{v:g}" for v in consts.DELTA_MEASURED),
    inflation=consts.INFLATION_EXPERIMENTAL,
)


def exit_code(err: errors.BattBeeError) -> int:
    for classes, code in EXIT_CODES:
        if isinstance(err, classes):
            return code
    return consts.EXIT_NUMERIC


def _load(config_path: str) -> config.ScenarioFile:
    return config.parse_file(config_path)


def run_simulate(config_path: str, out: str, dt: Optional[float] = None, seed: Optional[int] = None) -> int:
    """Integrate the scenario of a scenario file and write the trajectory CSV"""
    cfg = _load(config_path)
    params = cfg.build_params()
    scenario = cfg.build_scenario(dt=dt, seed=seed)
    tr = run_scenario(params, scenario)
    ingest.write_csv(tr.df, out)
    report = RunReport("simulate", cfg.model_dump())
    report.add_input("config", config_path)
    report.update(
        {
            "rows": len(tr),
            "dt": scenario.dt,
            "clamp_events": tr.clamp_events,
            "depletion_time": tr.depletion_time,
            "T_core_max": float(tr.df["T_core"].max()),
            "onset_time": tr.first_crossing("T_core", params.T_onset),
        }
    )
    report.write(report_path(out))
    return consts.EXIT_OK


def _telemetry(
    cfg: config.ScenarioFile, telemetry_path: Optional[str], dt: Optional[float], seed: Optional[int]
) -> Tuple[pd.DataFrame, bool, object]:
    """telemetry table, whether it was read from a file, and the trajectory if synthesised"""
    if telemetry_path is not None:
        return ingest.read_telemetry(telemetry_path), True, None
    detector = cfg.detector or config.DetectorSection()
    tr = run_scenario(cfg.build_params(), cfg.build_scenario(dt=dt, seed=seed))
    return to_telemetry(tr, detector.sample_period), False, tr


def run_detect(
    config_path: str,
    out: str,
    telemetry_path: Optional[str] = None,
    eta: Optional[float] = None,
    inflation: Optional[float] = None,
    dt: Optional[float] = None,
    seed: Optional[int] = None,
) -> int:
    """Run the detector over telemetry (a file, or synthesised from the scenario).

    Returns EXIT_ALARM when an alarm was raised, EXIT_OK otherwise.
    """
    cfg = _load(config_path)
    params = cfg.build_params()
    telemetry, from_file, tr = _telemetry(cfg, telemetry_path, dt, seed)
    det_config = cfg.build_detector(eta=eta, inflation=inflation, experimental=from_file)
    detector = Detector(params, det_config)
    log = detector.run(telemetry)
    ingest.write_csv(log, out)
    alarm = detector.first_alarm(log)
    report = RunReport("detect", {"scenario": cfg.model_dump(), "detector": vars(det_config)})
    report.add_input("config", config_path)
    if telemetry_path is not None:
        report.add_input("telemetry", telemetry_path)
    report.update(
        {
            "mode": detector.mode,
            "segments": len(detector.pwl),
            "j2_threshold": detector.thresholds.j2,
            "jinf_threshold": detector.thresholds.jinf,
            "inflation": detector.thresholds.inflation,
            "alarm_time": alarm,
        }
    )
    if tr is not None and alarm is not None:
        report.add_result("lead_time", detector.lead_time(log, tr, params.T_onset))
    report.write(report_path(out))
    if alarm is None:
        print("no alarm")
        return consts.EXIT_OK
    print(f"alarm at t={alarm:.9g} s")
    return consts.EXIT_ALARM


def run_linearize(
    config_path: str, out: str, tol: Optional[float] = None, segments: Optional[int] = None
) -> int:
    """Piecewise-linearise the OCV of a parameter set; writes the segment table"""
    cfg = _load(config_path)
    params = cfg.build_params()
    if segments is not None:
        pwl = piecewise_linearize(params.ocv, m=segments)
    else:
        pwl = piecewise_linearize(params.ocv, tol=consts.PWL_TOL if tol is None else tol)
    ingest.write_csv(pwl.to_dataframe(), out)
    report = RunReport("linearize", {"tol": tol, "segments": segments, "ocv": params.ocv.coefficients})
    report.add_input("config", config_path)
    report.update({"segments": len(pwl), "psi_min": pwl.psi_min, "psi_max": pwl.psi_max})
    report.write(report_path(out))
    return consts.EXIT_OK


def threshold_table(detector: Detector) -> pd.DataFrame:
    """per-segment thresholds plus a final conservative row (segment -1)"""
    th = detector.linear_thresholds
    df = pd.DataFrame(
        {
            "segment": np.arange(len(th.j2_segments)),
            "J2": th.j2_segments,
            "Jinf": th.jinf_segments,
        }
    )
    conservative = pd.DataFrame({"segment": [-1], "J2": [th.j2], "Jinf": [th.jinf]})
    return pd.concat([df, conservative], ignore_index=True)


def run_threshold(
    config_path: str, out: str, eta: Optional[float] = None, inflation: Optional[float] = None
) -> int:
    """Synthesise the segment observers and write their J2/Jinf thresholds"""
    cfg = _load(config_path)
    params = cfg.build_params()
    det_config = cfg.build_detector(eta=eta, inflation=inflation)
    detector = Detector(params, det_config)
    table = threshold_table(detector)
    ingest.write_csv(table, out)
    for row in table.itertuples(index=False):
        label = "conservative" if row.segment < 0 else f"segment {row.segment}"
        print(f"{label}: J2={row.J2!r} Jinf={row.Jinf!r}")
    report = RunReport("threshold", {"detector": vars(det_config)})
    report.add_input("config", config_path)
    report.update(
        {
            "j2_segments": detector.linear_thresholds.j2_segments,
            "jinf_segments": detector.linear_thresholds.jinf_segments,
            "j2": detector.linear_thresholds.j2,
            "jinf": detector.linear_thresholds.jinf,
        }
    )
    if detector.certificate is not None:
        report.update(
            {"nonlinear_j2": detector.thresholds.j2, "nonlinear_jinf": detector.thresholds.jinf}
        )
    report.write(report_path(out))
    return consts.EXIT_OK


def run_identify(
    config_path: str,
    data_paths: List[str],
    out: str,
    ocv_paths: Optional[List[str]] = None,
    order: int = consts.OCV_ORDER,
    fault_path: Optional[str] = None,
    fault_window: Optional[Tuple[float, float]] = None,
    weights: Tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
) -> int:
    """Identify parameters starting from the [params] of a scenario file.

    Writes the fitted parameter set as a scenario file with one [params]
    section.
    """
    cfg = _load(config_path)
    init = cfg.build_params()
    report = RunReport(
        "identify", {"order": order, "weights": weights, "seed": seed, "fault_window": fault_window}
    )
    report.add_input("config", config_path)
    if ocv_paths:
        ocv_sets = [ingest.read_dataset(p, capacity=init.capacity) for p in ocv_paths]
        init = init.replace(ocv=identify.fit_ocv(ocv_sets, order))
        for p in ocv_paths:
            report.add_input(f"ocv:{p}", p)
        report.add_result("ocv", init.ocv.coefficients)
    datasets = [ingest.read_dataset(p, capacity=init.capacity) for p in data_paths]
    for p in data_paths:
        report.add_input(f"data:{p}", p)
    fit = identify.fit_parameters(datasets, init, weights=weights, seed=seed)
    params = fit.params
    report.update({"rmse_v": fit.rmse_v, "rmse_T": fit.rmse_T, "iterations": fit.iterations})
    if fault_path is not None:
        if fault_window is None:
            raise errors.PreconditionError("--fault-data needs --fault-window")
        fault_set = ingest.read_dataset(fault_path, capacity=params.capacity, fault_window=fault_window)
        report.add_input("fault", fault_path)
        fault_fit = identify.fit_fault_parameters(fault_set, params, seed=seed)
        params = fault_fit.params
        report.update({"fault": fault_fit.values, "fault_rmse_v": fault_fit.rmse_v})
    config.write_file(config.ScenarioFile(params=config.params_section(params)), out)
    report.add_result("params", params.to_dict())
    report.write(report_path(out))
    return consts.EXIT_OK


def run_oracle_compare(
    out: str,
    t_end: float = 3600.0,
    amplitude: Optional[float] = None,
    period: float = 120.0,
    dt: float = 1.0,
    gate: float = consts.ORACLE_RMSE_GATE,
) -> int:
    """Compare the single-particle oracle with its reduced BattBee model.

    The profile is a discharge pulse train (1C by default). Returns EXIT_GATE
    when the RMSE exceeds `gate` times the oracle voltage swing.
    """
    spm = SpmParams.default()
    if amplitude is None:
        amplitude = spm.capacity / 3600.0
    pulses = pulse_profile(amplitude, period, t_end, rest=True)
    # discharge-only train: keep the -amplitude and rest phases
    profile = pulses._replace(current=-np.abs(pulses.current))
    result = compare_with_battbee(spm, profile, t_end, dt)
    table = result.oracle[["t_s", "current_A", "voltage_V"]].rename(columns={"voltage_V": "V_oracle"})
    table["V_battbee"] = result.reduced["voltage_V"].values
    ingest.write_csv(table, out)
    report = RunReport(
        "oracle-compare", {"t_end": t_end, "amplitude": amplitude, "period": period, "dt": dt, "gate": gate}
    )
    report.update({"rmse": result.rmse, "swing": result.swing, "relative": result.relative})
    report.write(report_path(out))
    print(f"RMSE {result.rmse:.6g} V ({100 * result.relative:.3g} % of swing)")
    return consts.EXIT_OK if result.relative <= gate else consts.EXIT_GATE


def _pair(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="battbee", description="BattBee ISC/TR toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--eta", type=float, help="forgetting factor override")
    common.add_argument("--inflation", type=float, help="threshold inflation override")
    common.add_argument("--dt", type=float, help="integration step override, s")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="integrate a scenario")
    p.add_argument("--config", required=True)

    p = sub.add_parser(
        "detect",
        parents=[common],
        help="run the ISC/TR detector",
        epilog=DETECT_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", required=True)
    p.add_argument("--telemetry", help="telemetry CSV; synthesised from the scenario if omitted")

    p = sub.add_parser("linearize", parents=[common], help="piecewise-linearise the OCV")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tol", type=float, help="max deviation, V")
    group.add_argument("--segments", type=int, help="segment count")

    p = sub.add_parser("threshold", parents=[common], help="fault-free residual thresholds")
    p.add_argument("--config", required=True)

    p = sub.add_parser("identify", parents=[common], help="fit parameters to data")
    p.add_argument("--config", required=True, help="scenario file with the initial [params]")
    p.add_argument("--data", action="append", required=True, help="telemetry CSV, repeatable")
    p.add_argument("--ocv-data", action="append", help="low-rate telemetry CSV for the OCV fit")
    p.add_argument("--order", type=int, default=consts.OCV_ORDER, help="OCV polynomial order")
    p.add_argument("--fault-data", help="telemetry CSV with a labelled ISC window")
    p.add_argument("--fault-window", type=_pair, help="t0,t1 of the ISC window, s")
    p.add_argument("--weights", type=_pair, default=(1.0, 1.0), help="w_V,w_T")

    p = sub.add_parser("oracle-compare", parents=[common], help="single-particle oracle vs BattBee")
    p.add_argument("--t-end", type=float, default=3600.0)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--period", type=float, default=120.0)
    p.add_argument("--gate", type=float, default=consts.ORACLE_RMSE_GATE, help="RMSE gate, fraction of swing")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "simulate":
        return run_simulate(args.config, args.out, dt=args.dt, seed=args.seed)
    if args.command == "detect":
        return run_detect(
            args.config,
            args.out,
            telemetry_path=args.telemetry,
            eta=args.eta,
            inflation=args.inflation,
            dt=args.dt,
            seed=args.seed,
        )
    if args.command == "linearize":
        return run_linearize(args.config, args.out, tol=args.tol, segments=args.segments)
    if args.command == "threshold":
        return run_threshold(args.config, args.out, eta=args.eta, inflation=args.inflation)
    if args.command == "identify":
        return run_identify(
            args.config,
            args.data,
            args.out,
            ocv_paths=args.ocv_data,
            order=args.order,
            fault_path=args.fault_data,
            fault_window=args.fault_window,
            weights=args.weights,
            seed=args.seed or 0,
        )
    return run_oracle_compare(
        args.out,
        t_end=args.t_end,
        amplitude=args.amplitude,
        period=args.period,
        dt=args.dt or 1.0,
        gate=args.gate,
    )


def cli(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the exit code"""
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except errors.BattBeeError as err:
        code = exit_code(err)
        logging.error("%s failed: %s", args.command, err)
        print(f"error: {err}", file=sys.stderr)
        return code


def main() -> None:
    sys.exit(cli())
