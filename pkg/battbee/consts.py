"""
Parameter tables and defaults.

Both tables describe a 25 Ah NCM811 cell at 25 degC ambient. The first set
was identified against high-fidelity simulation output, the second against
laboratory measurements.
"""

# circuit and thermal values identified from simulation
TABLE_SIMULATION = {
    "C_b": 76900.887,
    "C_s": 8115.772,
    "R_b": 1.236e-3,
    "R_o": 4.322e-3,
    "C_core": 162.760,
    "C_surf": 168.129,
    "R_core": 0.020,
    "R_surf0": 3.865,
}

# circuit and thermal values identified from experiments
TABLE_EXPERIMENT = {
    "C_b": 13991.751,
    "C_s": 20003.407,
    "R_b": 4.721e-3,
    "R_o": 4.726e-3,
    "C_core": 85.539,
    "C_surf": 10.519,
    "R_core": 0.834,
    "R_surf0": 9.936,
}

PARAMETER_TABLES = {
    "simulation": TABLE_SIMULATION,
    "experiment": TABLE_EXPERIMENT,
}

ELECTRICAL_FIELDS = ("C_b", "C_s", "R_b", "R_o")
THERMAL_FIELDS = ("C_core", "C_surf", "R_core", "R_surf0")

NOMINAL_CAPACITY_AH = 25.0

# U(0) = 3.4 V, U(1) = 4.2 V, slope between 0.65 and 1.1 V
DEFAULT_OCV = (3.4, 1.1, -0.9, 0.6)

T_AMB = 298.15
BETA = 1.0 / 600.0
R_SURF_MIN_FRACTION = 0.05

# ISC / TR heat
H_EC = 3.3e5
ALPHA = (2.0, 0.1, 1.0e-4, 0.1)
T_ONSET = 423.15
T_PEAK = 800.0
Q_MAX = 1.0e6

OCV_MONOTONE_GRID = 2001
OCV_DOMAIN_TOL = 1e-9
DECOMP_CHECK_GRID = 501

# fixed step must satisfy dt <= min(R_b*C_s, R_core*C_surf) / DT_RULE_DIVISOR
DT_RULE_DIVISOR = 20.0
DEFAULT_DT = 0.1

# detector
ETA = 0.95
ETA_PERIOD = 1.0
DELTA = (0.01, 0.01, 0.1, 0.1)
# initial-error bound for noisy measured telemetry (sigma_V 5 mV, sigma_T 0.1 K)
DELTA_MEASURED = (0.02, 0.02, 0.5, 0.5)
Q_PROC = (1e-8, 1e-8, 1e-4, 1e-4)
R_MEAS = (1e-4, 1e-2)
INFLATION_SYNTHETIC = 1.0
INFLATION_EXPERIMENTAL = 1.1
PWL_TOL = 1e-3
PWL_MAX_SEGMENTS = 64
SAMPLE_PERIOD = 1.0

RICCATI_RTOL = 1e-10
JINF_RTOL = 1e-3

# identification
OCV_ORDER = 8
OCV_MAX_C_RATE = 1.0 / 20.0
OCV_MIN_COVERAGE = 0.8
NM_RESTARTS = 2
NM_MAXITER = 4000

# telemetry and trajectory file columns
TELEMETRY_COLUMNS = ("t_s", "current_A", "voltage_V", "temp_surf_K")
TELEMETRY_OPTIONAL = ("temp_amb_K",)
TRAJECTORY_COLUMNS = (
    "t",
    "V_b",
    "V_s",
    "SoC",
    "V",
    "T_core",
    "T_surf",
    "q_ohm",
    "q_ec",
    "q_decomp",
    "q_exo",
    "I",
    "g_isc1",
    "g_isc2",
)
DETECTION_LOG_COLUMNS = ("t", "r_V", "r_T", "J2", "Jinf", "segment", "alarm")
CSV_FLOAT_FORMAT = "%.9g"

# CLI exit codes
EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_DETECTABILITY = 4
EXIT_GATE = 5
EXIT_ALARM = 10

ORACLE_RMSE_GATE = 0.05
