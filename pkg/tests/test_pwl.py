import numpy as np
import pytest

from battbee.errors import ParameterError, ResolutionError
from battbee.model import OcvPolynomial
from battbee.pwl import PwlOcv, Segment, piecewise_linearize, segment_select

OCV = OcvPolynomial.default()
GRID = np.linspace(0.0, 1.0, 10_001)


def test_tolerance_met_on_dense_grid():
    pwl = piecewise_linearize(OCV, tol=0.01)
    deviation = np.max(np.abs(pwl.evaluate(GRID) - OCV.evaluate(GRID)))
    assert deviation <= 0.01
    tighter = piecewise_linearize(OCV, tol=1e-3)
    assert len(tighter) > len(pwl)
    assert np.max(np.abs(tighter.evaluate(GRID) - OCV.evaluate(GRID))) <= 1e-3


def test_slope_bounds_cover_derivative():
    pwl = piecewise_linearize(OCV, tol=0.01)
    slope = OCV.slope(GRID)
    assert pwl.psi_min <= slope.min()
    assert pwl.psi_max >= slope.max()
    assert pwl.psi_min <= pwl.slopes.min()
    assert pwl.psi_max >= pwl.slopes.max()
    assert pwl.psi_min > 0


def test_segments_partition_unit_interval():
    pwl = piecewise_linearize(OCV, tol=0.005)
    bp = pwl.breakpoints
    assert bp[0] == 0.0
    assert bp[-1] == 1.0
    assert np.all(np.diff(bp) > 0)
    # continuous at breakpoints
    for left, right in zip(pwl.segments, pwl.segments[1:]):
        assert left.a * left.hi + left.b == pytest.approx(right.a * right.lo + right.b, abs=1e-9)


def test_segment_count_mode():
    pwl = piecewise_linearize(OCV, m=4)
    assert len(pwl) <= 4
    one = piecewise_linearize(OCV, m=1)
    assert len(one) == 1
    deviation_4 = np.max(np.abs(pwl.evaluate(GRID) - OCV.evaluate(GRID)))
    deviation_1 = np.max(np.abs(one.evaluate(GRID) - OCV.evaluate(GRID)))
    assert deviation_4 < deviation_1


def test_affine_ocv_is_one_segment():
    pwl = piecewise_linearize(OcvPolynomial((3.0, 1.2)), tol=1e-6)
    assert len(pwl) == 1
    assert pwl.segments[0].a == pytest.approx(1.2)
    assert pwl.segments[0].b == pytest.approx(3.0)


def test_resolution_error():
    with pytest.raises(ResolutionError):
        piecewise_linearize(OCV, tol=1e-9, max_segments=4)
    with pytest.raises(ResolutionError):
        piecewise_linearize(OCV, m=100)


def test_flat_ocv_rejected():
    with pytest.raises(ResolutionError):
        piecewise_linearize(OcvPolynomial((3.7,)), tol=1e-3)


def test_segment_select():
    pwl = piecewise_linearize(OCV, tol=0.005)
    assert segment_select(pwl, 0.0) == 0
    assert segment_select(pwl, 1.0) == len(pwl) - 1
    # breakpoints belong to the lower segment
    for i, seg in enumerate(pwl.segments[:-1]):
        assert segment_select(pwl, seg.hi) == i
    rng = np.random.default_rng(0)
    for v in rng.uniform(0.0, 1.0, 1000):
        seg = pwl.segments[segment_select(pwl, v)]
        assert seg.lo <= v <= seg.hi


def test_inverse():
    pwl = piecewise_linearize(OCV, tol=1e-3)
    for v in (0.0, 0.13, 0.5, 0.77, 1.0):
        assert pwl.inverse(float(pwl.evaluate(v))) == pytest.approx(v, abs=1e-12)
    assert pwl.inverse(0.0) == 0.0
    assert pwl.inverse(10.0) == 1.0


def test_segment_table():
    pwl = piecewise_linearize(OCV, tol=0.01)
    df = pwl.to_dataframe()
    assert list(df.columns) == ["i", "lo", "hi", "a_i", "b_i"]
    assert len(df) == len(pwl)
    assert list(df["i"]) == list(range(len(pwl)))


def test_pwl_validation():
    with pytest.raises(ParameterError):
        PwlOcv((Segment(0.0, 0.5, 1.0, 3.0),), 1.0, 1.0)
    with pytest.raises(ParameterError):
        PwlOcv((Segment(0.0, 0.5, 1.0, 3.0), Segment(0.5, 1.0, 1.0, 3.1)), 1.0, 1.0)
