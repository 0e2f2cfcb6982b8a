import os

import pytest

from battbee import config, consts
from battbee.errors import ConfigError
from battbee.model import BattBeeParams

SCENARIO = """\
# 25 Ah cell with a two-stage short circuit
[params]
preset = simulation
T_peak = 780.0

[scenario]
dt = 0.1
t_end = 4000
profile = pulse
amplitude = 25
period = 120

[faults]
onset = 300, 1.0, 50.0
severe = 2623, 30, 200

[detector]
eta = 0.9
delta = 0.02, 0.02, 0.5, 0.5
inflation = 1.1
"""


def test_parse():
    cfg = config.parse_string(SCENARIO)
    params = cfg.build_params()
    assert params.C_b == 76900.887
    assert params.T_peak == 780.0
    sc = cfg.build_scenario()
    assert sc.dt == 0.1
    assert sc.t_end == 4000.0
    assert [e.t for e in sc.faults] == [300.0, 2623.0]
    assert sc.faults[1].g_isc2 == 200.0
    assert sc.current.current.max() == 25.0
    det = cfg.build_detector()
    assert det.eta == 0.9
    assert det.inflation == 1.1
    assert det.delta == (0.02, 0.02, 0.5, 0.5)
    assert det.pwl_tol == consts.PWL_TOL


def test_detector_overrides():
    cfg = config.parse_string("[params]\npreset = simulation\n")
    assert cfg.build_detector().inflation == consts.INFLATION_SYNTHETIC
    assert cfg.build_detector(experimental=True).inflation == consts.INFLATION_EXPERIMENTAL
    assert cfg.build_detector(eta=0.5, inflation=2.0).eta == 0.5


def test_round_trip():
    cfg = config.parse_string(SCENARIO)
    text = config.serialize(cfg)
    again = config.parse_string(text)
    assert again.model_dump() == cfg.model_dump()
    assert config.serialize(again) == text


def test_params_section_reproduces_parameters():
    p = BattBeeParams.from_table("experiment", R_o=5e-3)
    text = config.serialize(config.ScenarioFile(params=config.params_section(p)))
    rebuilt = config.parse_string(text).build_params()
    assert rebuilt.theta.tolist() == p.theta.tolist()
    assert rebuilt.ocv.lam.tolist() == p.ocv.lam.tolist()


@pytest.mark.parametrize(
    "text, lineno",
    [
        ("[params]\npreset = simulation\nC_x = 1\n", 3),
        ("[params]\npreset = simulation\n\n[extras]\nx = 1\n", 4),
        ("[params]\npreset = simulation\n[scenario]\ndt = -0.1\nt_end = 10\n", 4),
        ("[scenario]\ndt = 0.1\n", 1),
        ("[faults]\na = 1, 2\n", 2),
        ("[detector]\neta = 1.5\n", 2),
        ("x = 1\n", 1),
    ],
)
def test_errors_carry_line_numbers(text, lineno):
    with pytest.raises(ConfigError) as excinfo:
        config.parse_string(text)
    assert excinfo.value.lineno == lineno


def test_circuit_needs_preset_or_values():
    with pytest.raises(ConfigError) as excinfo:
        config.parse_string("[params]\nC_b = 1\n")
    assert "C_s" in str(excinfo.value)


def test_one_current_source():
    with pytest.raises(ConfigError):
        config.parse_string("[scenario]\nt_end = 10\ncurrent = 1\nprofile = drive\namplitude = 2\n")
    with pytest.raises(ConfigError):
        config.parse_string("[scenario]\nt_end = 10\nprofile = pulse\namplitude = 2\n")


def test_missing_sections():
    cfg = config.parse_string("[detector]\nmode = nonlinear\n")
    with pytest.raises(ConfigError):
        cfg.build_params()
    with pytest.raises(ConfigError):
        cfg.build_scenario()


def test_file_io(tmp_path):
    current = tmp_path / "current.csv"
    current.write_text("t_s,current_A\n0,-5\n100,5\n")
    path = tmp_path / "cell.ini"
    path.write_text("[params]\npreset = simulation\n\n[scenario]\nt_end = 200\ncurrent_csv = current.csv\n")
    cfg = config.parse_file(str(path))
    sc = cfg.build_scenario()
    assert sc.current.current.tolist() == [-5.0, 5.0]
    out = tmp_path / "copy.ini"
    config.write_file(cfg, str(out))
    assert os.path.exists(out)
    with pytest.raises(ConfigError):
        config.parse_file(str(tmp_path / "missing.ini"))
