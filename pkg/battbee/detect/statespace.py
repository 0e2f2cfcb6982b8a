"""
Fault-explicit linear state-space form of the BattBee model.

    dx/dt = A x + A_f f1 x + B u + B_f f2
        y = h(x) + D u + D_f f3

u = [I, T_amb, I**2], y = [V, T_surf], h(x) = [U(V_s), T_surf], with R_surf
frozen at R_surf0.
"""

from typing import NamedTuple, Tuple

import numpy as np

from battbee.model import BattBeeParams, FaultInputs, SimState, heat_rates, ocv_eval


class StateSpace(NamedTuple):
    A: np.ndarray
    A_f: np.ndarray
    B: np.ndarray
    B_f: np.ndarray
    D: np.ndarray
    D_f: np.ndarray

    def inputs(self, I: float, T_amb: float) -> np.ndarray:
        return np.array([I, T_amb, I * I])


def assemble_state_space(p: BattBeeParams) -> StateSpace:
    k_b = 1.0 / (p.R_b * p.C_b)
    k_s = 1.0 / (p.R_b * p.C_s)
    k_core = 1.0 / (p.R_core * p.C_core)
    k_surf = 1.0 / (p.R_core * p.C_surf)
    k_amb = 1.0 / (p.R_surf0 * p.C_surf)
    A = np.array(
        [
            [-k_b, k_b, 0.0, 0.0],
            [k_s, -k_s, 0.0, 0.0],
            [0.0, 0.0, -k_core, k_core],
            [0.0, 0.0, k_surf, -k_surf - k_amb],
        ]
    )
    A_f = np.zeros((4, 4))
    A_f[1, 1] = -1.0 / p.C_s
    B = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0 / p.C_s, 0.0, 0.0],
            [0.0, 0.0, p.R_o / p.C_core],
            [0.0, k_amb, 0.0],
        ]
    )
    B_f = np.array([[0.0], [0.0], [1.0 / p.C_core], [0.0]])
    D = np.array([[p.R_o, 0.0, 0.0], [0.0, 0.0, 0.0]])
    D_f = np.array([[1.0], [0.0]])
    return StateSpace(A, A_f, B, B_f, D, D_f)


def fault_signals(
    p: BattBeeParams, f: FaultInputs, s: SimState, I: float
) -> Tuple[float, float, float]:
    """(f1, f2, f3): ISC conductance, exothermic heat, output collapse"""
    f1 = f.g_isc1
    f2 = heat_rates(p, f, s, I).q_exo
    gain = p.R_o * f.g_isc2
    f3 = -gain / (1.0 + gain) * (ocv_eval(p.ocv, s.V_s) + p.R_o * I)
    return f1, f2, f3
