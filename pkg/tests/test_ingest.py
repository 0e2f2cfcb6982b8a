import numpy as np
import pandas as pd
import pytest

from battbee import ingest
from battbee.errors import TelemetryError

TELEMETRY = """\
t_s,current_A,voltage_V,temp_surf_K,temp_amb_K
0,-25,4.1,298.15,298.0
1,-25,4.09,298.2,298.2
2,0,4.12,298.25,298.4
"""


def write(tmp_path, text, name="telemetry.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_read_telemetry(tmp_path):
    df = ingest.read_telemetry(write(tmp_path, TELEMETRY))
    assert list(df.columns) == ["t_s", "current_A", "voltage_V", "temp_surf_K", "temp_amb_K"]
    assert df["voltage_V"].tolist() == [4.1, 4.09, 4.12]
    assert df.dtypes.unique().tolist() == [np.dtype("float64")]


def test_extra_columns_dropped(tmp_path):
    text = "t_s,note,current_A,voltage_V,temp_surf_K\n0,a,1,4,298\n1,b,1,4,298\n"
    df = ingest.read_telemetry(write(tmp_path, text))
    assert "note" not in df.columns


@pytest.mark.parametrize(
    "text, column",
    [
        ("t_s,current_A,voltage_V\n0,1,4\n1,1,4\n", "temp_surf_K"),
        ("t_s,current_A,voltage_V,temp_surf_K\n0,1,4,298\n1,x,4,298\n", "current_A"),
        ("t_s,current_A,voltage_V,temp_surf_K\n0,1,4,298\n0,1,4,298\n", "t_s"),
    ],
)
def test_bad_telemetry(tmp_path, text, column):
    with pytest.raises(TelemetryError) as excinfo:
        ingest.read_telemetry(write(tmp_path, text))
    assert excinfo.value.column == column


def test_missing_file(tmp_path):
    with pytest.raises(TelemetryError):
        ingest.read_telemetry(str(tmp_path / "absent.csv"))


def test_single_row(tmp_path):
    with pytest.raises(TelemetryError):
        ingest.read_telemetry(write(tmp_path, "t_s,current_A,voltage_V,temp_surf_K\n0,1,4,298\n"))


def test_read_current_csv(tmp_path):
    profile = ingest.read_current_csv(write(tmp_path, "t_s,current_A\n0,-5\n60,0\n"))
    assert profile.t.tolist() == [0.0, 60.0]
    assert profile.current.tolist() == [-5.0, 0.0]


def test_read_dataset(tmp_path):
    path = write(tmp_path, TELEMETRY)
    data = ingest.read_dataset(path, capacity=90000.0, fault_window=(1.0, 2.0))
    assert data.T_amb == pytest.approx(298.2)
    assert data.fault_window == (1.0, 2.0)
    assert len(data) == 3
    no_amb = write(tmp_path, "t_s,current_A,voltage_V,temp_surf_K\n0,1,4,297\n1,1,4,298\n", "b.csv")
    assert ingest.read_dataset(no_amb).T_amb == 297.0
    assert ingest.read_dataset(path, T_amb=300.0).T_amb == 300.0


def test_write_csv_significant_digits(tmp_path):
    path = str(tmp_path / "out" / "table.csv")
    df = pd.DataFrame({"t": [0.0, 0.1], "x": [1.0 / 3.0, 123456.789012345]})
    ingest.write_csv(df, path)
    lines = open(path).read().splitlines()
    assert lines[0].startswith("# generated: ")
    assert lines[1] == "t,x"
    assert lines[2] == "0,0.333333333"
    assert lines[3] == "0.1,123456.789"
    back = ingest.read_table(path)
    assert back["x"].tolist() == [0.333333333, 123456.789]


def test_write_csv_body_is_stable(tmp_path):
    df = pd.DataFrame({"t": np.arange(5) * 0.1, "v": np.linspace(3.0, 4.2, 5)})
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    ingest.write_csv(df, a)
    ingest.write_csv(df, b)
    assert open(a).read().splitlines()[1:] == open(b).read().splitlines()[1:]
    ingest.write_csv(df, a, stamp=False)
    assert open(a).readline() == "t,v\n"
