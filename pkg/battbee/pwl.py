"""
Piecewise-linear OCV approximation.

Segments are chords of U(V_s), so neighbouring segments meet exactly on the
curve. The exact chord error on an interval comes from the real roots of
U'(V_s) = a inside it.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from battbee import consts
from battbee.errors import ParameterError, ResolutionError
from battbee.model import OcvPolynomial


class Segment(NamedTuple):
    lo: float
    hi: float
    a: float
    b: float


@dataclass(frozen=True)
class PwlOcv:
    """Segments partitioning [0, 1] with slope bounds.

    psi_min and psi_max bound both the chord slopes and U' itself, so they
    serve the segment models and the sector condition of the nonlinear
    observer alike.
    """

    segments: Tuple[Segment, ...]
    psi_min: float
    psi_max: float
    _highs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple(Segment(*map(float, s)) for s in self.segments)
        if not segments:
            raise ParameterError("segments", "need at least one segment")
        if abs(segments[0].lo) > 1e-12 or abs(segments[-1].hi - 1.0) > 1e-12:
            raise ParameterError("segments", "segments must span [0, 1]")
        for left, right in zip(segments, segments[1:]):
            if left.hi != right.lo:
                raise ParameterError("segments", f"gap or overlap at {left.hi!r}")
            jump = abs((left.a * left.hi + left.b) - (right.a * right.lo + right.b))
            if jump > 1e-9:
                raise ParameterError("segments", f"discontinuity of {jump:.3g} V at {left.hi!r}")
        if any(s.a <= 0 for s in segments):
            raise ParameterError("segments", "all slopes must be > 0")
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "_highs", np.array([s.hi for s in segments]))

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def slopes(self) -> np.ndarray:
        return np.array([s.a for s in self.segments])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.segments[0].lo] + [s.hi for s in self.segments])

    def evaluate(self, v_s):
        v = np.clip(np.asarray(v_s, dtype=np.float64), 0.0, 1.0)
        idx = np.minimum(np.searchsorted(self._highs, v, side="left"), len(self.segments) - 1)
        a = self.slopes[idx]
        b = np.array([s.b for s in self.segments])[idx]
        return a * v + b

    def inverse(self, u: float) -> float:
        """V_s with PWL(V_s) = u, clipped to [0, 1]"""
        for s in self.segments:
            if u <= s.a * s.hi + s.b:
                return float(min(max((u - s.b) / s.a, s.lo), s.hi))
        return 1.0

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(i, s.lo, s.hi, s.a, s.b) for i, s in enumerate(self.segments)],
            columns=["i", "lo", "hi", "a_i", "b_i"],
        )


def segment_select(pwl: PwlOcv, V_s_hat: float) -> int:
    """Index of the segment holding V_s_hat; a breakpoint belongs to the lower segment"""
    v = min(max(float(V_s_hat), 0.0), 1.0)
    idx = int(np.searchsorted(pwl._highs, v, side="left"))
    return min(idx, len(pwl.segments) - 1)


def chord_error(poly: Polynomial, lo: float, hi: float) -> Tuple[float, float, float]:
    """(max |U - chord|, chord slope, chord intercept) on [lo, hi]"""
    u_lo, u_hi = poly(lo), poly(hi)
    a = (u_hi - u_lo) / (hi - lo)
    b = u_lo - a * lo
    candidates = [lo, hi]
    roots = (poly.deriv() - a).roots()
    for r in roots:
        if abs(r.imag) < 1e-12 and lo < r.real < hi:
            candidates.append(r.real)
    x = np.array(candidates)
    return float(np.max(np.abs(poly(x) - (a * x + b)))), float(a), float(b)


def slope_range(poly: Polynomial) -> Tuple[float, float]:
    """exact min and max of U' on [0, 1]"""
    d1 = poly.deriv()
    candidates = [0.0, 1.0]
    if d1.degree() >= 2:
        for r in d1.deriv().roots():
            if abs(r.imag) < 1e-12 and 0.0 < r.real < 1.0:
                candidates.append(r.real)
    values = d1(np.array(candidates))
    return float(values.min()), float(values.max())


def _greedy(poly: Polynomial, tol: float, max_segments: int) -> Optional[List[Segment]]:
    """widest chords from the left; None when more than max_segments are needed"""
    segments: List[Segment] = []
    lo = 0.0
    while lo < 1.0:
        if len(segments) == max_segments:
            return None
        err, a, b = chord_error(poly, lo, 1.0)
        if err <= tol:
            segments.append(Segment(lo, 1.0, a, b))
            break
        good, bad = lo, 1.0
        for _ in range(60):
            mid = 0.5 * (good + bad)
            if chord_error(poly, lo, mid)[0] <= tol:
                good = mid
            else:
                bad = mid
        if good <= lo:
            return None
        _, a, b = chord_error(poly, lo, good)
        segments.append(Segment(lo, good, a, b))
        lo = good
    return segments


def piecewise_linearize(
    ocv: OcvPolynomial,
    tol: Optional[float] = None,
    m: Optional[int] = None,
    max_segments: int = consts.PWL_MAX_SEGMENTS,
) -> PwlOcv:
    """Greedy chord partition of the OCV curve.

    Give either `tol` (max deviation, V) or `m` (segment count). With `m`
    the smallest tolerance reachable with at most m segments is searched.

    Raises
    ------
    ResolutionError
        the tolerance needs more than `max_segments` segments, or a chord
        has nonpositive slope
    """
    if (tol is None) == (m is None):
        raise ValueError("give exactly one of tol or m")
    poly = ocv.as_polynomial()
    if m is not None:
        if m < 1 or m > max_segments:
            raise ResolutionError(f"segment count {m} outside [1, {max_segments}]")
        hi = chord_error(poly, 0.0, 1.0)[0]
        lo = 0.0
        segments = _greedy(poly, hi, m)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            trial = _greedy(poly, mid, m) if mid > 0 else None
            if trial is not None:
                hi, segments = mid, trial
            else:
                lo = mid
        tol = hi
    else:
        segments = _greedy(poly, tol, max_segments)
        if segments is None:
            raise ResolutionError(
                f"tolerance {tol:g} V needs more than {max_segments} segments"
            )
    if any(s.a <= 0 for s in segments):
        raise ResolutionError("chord slope not positive; OCV too flat for a detectable segment")
    d_min, d_max = slope_range(poly)
    slopes = [s.a for s in segments]
    pwl = PwlOcv(tuple(segments), min(min(slopes), d_min), max(max(slopes), d_max))
    logging.info(
        "OCV linearised into %d segments (tol %.3g V), slopes in [%.4g, %.4g]",
        len(pwl),
        tol,
        pwl.psi_min,
        pwl.psi_max,
    )
    return pwl
