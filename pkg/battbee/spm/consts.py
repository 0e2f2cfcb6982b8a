"""
single-particle oracle constants
"""

FARADAY = 96485.33212
GAS_CONSTANT = 8.314462618

T_REF = 298.15
ALPHA_CT = 0.5
AREA = 0.1027  # m^2

# electrode open-circuit potentials, coefficients in ascending powers of
# stoichiometry
U_POS = (4.45, -0.6, -0.5)
U_NEG = (0.6, -0.95, 0.45)

POSITIVE = {
    "D_s": 4.0e-15,
    "r_s": 5.22e-6,
    "eps": 0.665,
    "L": 75.6e-6,
    "i0": 2.5,
    "R_f": 1.0e-3,
    "R_e": 2.5e-3,
    "c_max": 63104.0,
    "theta_full": 0.2661,
    "theta_empty": 0.9084,
}

# thickness sized so both electrodes cycle the same charge over their windows;
# D_s scaled with r_s**2 so both share one diffusion time constant
NEGATIVE = {
    "D_s": 4.0e-15 * (5.86e-6 / 5.22e-6) ** 2,
    "r_s": 5.86e-6,
    "eps": 0.75,
    "L": 94.0e-6,
    "i0": 2.5,
    "R_f": 1.0e-3,
    "R_e": 2.5e-3,
    "c_max": 33133.0,
    "theta_full": 0.9014,
    "theta_empty": None,  # from the charge balance
}

# inner-element radius as a fraction of r_s, equal element volumes
INNER_RADIUS_FRACTION = 0.5 ** (1.0 / 3.0)

CONSERVATION_RTOL = 1e-10
OCV_SWEEP_C_RATE = 1.0 / 50.0
