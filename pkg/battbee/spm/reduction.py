"""
Map the single-particle oracle onto BattBee parameters and compare the two.

Concentrations map to node voltages through the positive-electrode
stoichiometry window, v = (theta - theta_empty) / (theta_full - theta_empty),
so v = 1 is a full cell. With kappa = F a L S c_max |window| / S_s the
two-element diffusion equations become the BattBee two-node chain with

    C_b = kappa dv_b,   C_s = kappa dv_s,   R_b = r_s / (2 kappa D_s S_b)
"""

import logging
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from battbee import consts as battbee_consts
from battbee.model import BattBeeParams, OcvPolynomial, SimState
from battbee.simulate import CurrentProfile, Scenario, max_step, run_scenario
from battbee.spm import consts
from battbee.spm.model import (
    ElectrodeParams,
    SpmParams,
    SpmState,
    film_resistance,
    kinetic_resistance,
    simulate,
)
from battbee.utils import rmse


class OracleComparison(NamedTuple):
    rmse: float
    swing: float
    relative: float
    oracle: pd.DataFrame
    reduced: pd.DataFrame


def storage_scale(p: SpmParams, e: ElectrodeParams) -> float:
    """kappa, coulombs per unit node voltage per m^3 of element volume"""
    return consts.FARADAY * e.a * e.L * p.S * e.c_max * abs(e.window) / e.S_s


def _chain(p: SpmParams, e: ElectrodeParams):
    kappa = storage_scale(p, e)
    return kappa * e.dv_b, kappa * e.dv_s, e.r_s / (2.0 * kappa * e.D_s * e.S_b)


def composite_ocv(p: SpmParams) -> OcvPolynomial:
    """U(v) = U+(theta+(v)) - U-(theta-(v)), exact polynomial composition"""
    pos, neg = p.positive, p.negative
    theta_pos = Polynomial([pos.theta_empty, pos.window])
    theta_neg = Polynomial([neg.theta_empty, neg.window])
    u = Polynomial(pos.ocv)(theta_pos) - Polynomial(neg.ocv)(theta_neg)
    return OcvPolynomial(tuple(u.coef))


def series_resistance(p: SpmParams) -> float:
    """R_o: linearised kinetics, electrolyte and film"""
    kinetic = kinetic_resistance(p, "positive") + kinetic_resistance(p, "negative")
    return kinetic + p.positive.R_e + p.negative.R_e + film_resistance(p)


def reduce_to_battbee(p: SpmParams, thermal: str = "simulation") -> BattBeeParams:
    """Electrical BattBee fields from the oracle; thermal fields from a preset table.

    The positive electrode defines the chain. The negative electrode gives
    the same chain when both electrodes cycle equal charge and share one
    diffusion time constant; a mismatch is logged.
    """
    C_b, C_s, R_b = _chain(p, p.positive)
    neg = np.array(_chain(p, p.negative))
    mismatch = np.max(np.abs(neg / np.array([C_b, C_s, R_b]) - 1.0))
    if mismatch > 1e-6:
        logging.warning("negative electrode maps to a different chain (%.2g relative)", mismatch)
    R_o = series_resistance(p)
    params = BattBeeParams.from_table(
        thermal, C_b=C_b, C_s=C_s, R_b=R_b, R_o=R_o, ocv=composite_ocv(p)
    )
    logging.info(
        "reduced oracle: C_b=%.4g F, C_s=%.4g F, R_b=%.4g ohm, R_o=%.4g ohm",
        C_b,
        C_s,
        R_b,
        R_o,
    )
    return params


def node_voltages(p: SpmParams, s: SpmState):
    """(V_b, V_s) of an oracle state"""
    pos = p.positive
    v_b = (s.cb_pos / pos.c_max - pos.theta_empty) / pos.window
    v_s = (s.cs_pos / pos.c_max - pos.theta_empty) / pos.window
    return float(v_b), float(v_s)


def compare_with_battbee(
    p: SpmParams,
    profile: CurrentProfile,
    t_end: float,
    dt: float = 1.0,
    initial_soc: float = 1.0,
    thermal: str = "simulation",
) -> OracleComparison:
    """Run the oracle and its reduced BattBee model on one current profile.

    The reduced model runs at the finer of `dt` and its own step limit and is
    read back at the oracle grid. Returns the terminal-voltage RMSE and the
    oracle voltage swing.
    """
    oracle = simulate(p, profile, t_end, dt, SpmState.at_soc(p, initial_soc))
    params = reduce_to_battbee(p, thermal)
    step = min(dt, max_step(params))
    step = dt / np.ceil(dt / step)
    v_b, v_s = node_voltages(p, SpmState.from_array(oracle.iloc[0][list(SpmState._fields)]))
    scenario = Scenario(
        dt=step,
        t_end=t_end,
        T_amb=battbee_consts.T_AMB,
        current=profile,
        initial=SimState(v_b, v_s, battbee_consts.T_AMB, battbee_consts.T_AMB),
    )
    tr = run_scenario(params, scenario)
    reduced = pd.DataFrame(
        {
            "t_s": oracle["t_s"].values,
            "voltage_V": np.interp(oracle["t_s"].values, tr.t, tr.df["V"].values),
        }
    )
    error = rmse(oracle["voltage_V"].values, reduced["voltage_V"].values)
    swing = float(oracle["voltage_V"].max() - oracle["voltage_V"].min())
    relative = error / swing if swing > 0 else float("inf")
    logging.info("oracle comparison: RMSE %.4g V over a %.4g V swing", error, swing)
    return OracleComparison(error, swing, relative, oracle, reduced)
