"""Trip-probability curves, overload accumulation and trip timing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ACCIDENTAL_TRIP_S = 0.2
# reactive limits of exactly zero have no natural scale for the overload budget
ZERO_LIMIT_REFERENCE_MVAR = 1.0


@dataclass(frozen=True)
class LineTripParams:
    p1: float = 0.001
    p2: float = 0.3
    p3: float = 1.0
    epsilon: float = 0.01
    K: float = 1.5
    overload_percent: float = 50.0
    overload_seconds: float = 20.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p1 <= self.p2 <= self.p3 <= 1.0) or self.p2 <= 0.0:
            raise ValueError("line trip probabilities must satisfy 0 <= p1 <= p2 <= p3 <= 1, p2 > 0")
        if self.epsilon <= 0.0 or self.K <= 1.0 + self.epsilon:
            raise ValueError("need epsilon > 0 and K > 1 + epsilon")

    @property
    def b1(self) -> float:
        return (_ln(self.p1) - math.log(self.p2)) / (-self.epsilon)

    @property
    def a1(self) -> float:
        return self.p2 * math.exp(-self.b1 * (1.0 + self.epsilon))

    @property
    def b2(self) -> float:
        return (math.log(self.p2) - math.log(self.p3)) / (1.0 + self.epsilon - self.K)

    @property
    def a2(self) -> float:
        return self.p2 / math.exp(self.b2 * (1.0 + self.epsilon))


@dataclass(frozen=True)
class GenTripParams:
    p4: float = 0.001
    p5: float = 0.3
    p6: float = 1.0
    epsilon_factor: float = 0.01
    k_q_factor: float = 1.5
    k_q_lower_at_zero: float = -0.5
    overload_percent: float = 20.0
    overload_seconds: float = 1800.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p4 <= self.p5 <= self.p6 <= 1.0) or self.p5 <= 0.0:
            raise ValueError("generator trip probabilities must satisfy 0 <= p4 <= p5 <= p6 <= 1, p5 > 0")
        if self.epsilon_factor <= 0.0 or self.k_q_factor <= 1.0 + self.epsilon_factor:
            raise ValueError("need epsilon_factor > 0 and k_q_factor > 1 + epsilon_factor")


def _ln(p: float) -> float:
    # p1 = 0 switches accidental failures off; keep the curve finite
    return math.log(p) if p > 0.0 else math.log(1e-300)


def line_trip_probability(r, params: LineTripParams = LineTripParams()):
    """Piecewise-exponential f_t(R) of the loading ratio R."""
    r = np.asarray(r, dtype=float)
    p = params
    one_eps = 1.0 + p.epsilon
    seg1 = p.p2 * np.exp(p.b1 * (np.minimum(r, one_eps) - one_eps))
    seg2 = p.p3 * np.exp(p.b2 * (np.minimum(r, p.K) - p.K))
    out = np.where(r <= 1.0, p.p1, np.where(r <= one_eps, seg1, np.where(r <= p.K, seg2, p.p3)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GenCurve:
    """Breakpoints and exponential rates of f_g for one unit.

    Each exponential segment is anchored at one of its edges, which keeps the
    evaluation finite when an accidental probability of zero makes a rate huge.
    """

    q_min: float
    q_max: float
    eps_low: float
    eps_high: float
    k_low: float
    k_high: float
    b3: float
    b4: float
    b5: float
    b6: float


def gen_curve(q_min: float, q_max: float, params: GenTripParams = GenTripParams()) -> GenCurve:
    p4, p5, p6 = params.p4, params.p5, params.p6
    eps_low = -params.epsilon_factor * q_min
    eps_high = params.epsilon_factor * q_max
    k_high = params.k_q_factor * q_max
    k_low = params.k_q_factor * q_min if q_min < 0 else params.k_q_lower_at_zero
    nan = float("nan")
    b3 = (math.log(p6) - math.log(p5)) / (k_low - q_min + eps_low)
    b4 = (math.log(p5) - _ln(p4)) / (-eps_low) if eps_low != 0.0 else nan
    b5 = (_ln(p4) - math.log(p5)) / (-eps_high) if eps_high != 0.0 else nan
    hi_edge = q_max + eps_high
    b6 = (math.log(p5) - math.log(p6)) / (hi_edge - k_high) if k_high > hi_edge else nan
    return GenCurve(q_min, q_max, eps_low, eps_high, k_low, k_high, b3, b4, b5, b6)


def gen_trip_probability(q: float, curve: GenCurve, params: GenTripParams = GenTripParams()) -> float:
    """Seven-segment f_g(Q) for a single unit."""
    c = curve
    if c.q_min <= q <= c.q_max:
        return params.p4
    if q > c.q_max:
        if q > c.k_high:
            return params.p6
        hi_edge = c.q_max + c.eps_high
        if q <= hi_edge and c.eps_high != 0.0:
            return float(params.p5 * math.exp(c.b5 * (q - hi_edge)))
        if math.isnan(c.b6):
            return params.p6
        return min(float(params.p5 * math.exp(c.b6 * (q - hi_edge))), params.p6)
    if q <= c.k_low:
        return params.p6
    lo_edge = c.q_min - c.eps_low
    if q > lo_edge and c.eps_low != 0.0:
        return float(params.p5 * math.exp(c.b4 * (q - lo_edge)))
    return min(float(params.p6 * math.exp(c.b3 * (q - c.k_low))), params.p6)


def gen_trip_probabilities(q: np.ndarray, curves: list[GenCurve], params: GenTripParams) -> np.ndarray:
    return np.array([gen_trip_probability(float(x), c, params) for x, c in zip(q, curves)])


def q_violation(q, q_min, q_max):
    """Signed-free magnitude of the reactive limit violation (0 inside limits)."""
    q = np.asarray(q, dtype=float)
    return np.maximum(q - q_max, 0.0) + np.maximum(q_min - q, 0.0)


def violated_limit(q, q_min, q_max):
    return np.where(np.asarray(q) > q_max, q_max, q_min)


def line_overload_limit(rating_dynamic, params: LineTripParams = LineTripParams()):
    """Overload budget (MVA s): the time to trip at ``overload_percent`` above the rating."""
    return params.overload_seconds * params.overload_percent / 100.0 * np.asarray(rating_dynamic)


def gen_overload_limit(limit_mvar, params: GenTripParams = GenTripParams()):
    mag = np.abs(np.asarray(limit_mvar, dtype=float))
    mag = np.where(mag > 0.0, mag, ZERO_LIMIT_REFERENCE_MVAR)
    return params.overload_seconds * params.overload_percent / 100.0 * mag


def line_trip_time(flow, rating_dynamic, accumulated, limit):
    """Seconds until a marked line trips; accidental (not overloaded) trips take 0.2 s."""
    excess = float(flow) - float(rating_dynamic)
    if excess <= 0.0:
        return ACCIDENTAL_TRIP_S
    return max(float(limit) - float(accumulated), 0.0) / excess


def generator_trip_time(violation, accumulated, limit):
    if violation <= 0.0:
        return ACCIDENTAL_TRIP_S
    return max(float(limit) - float(accumulated), 0.0) / float(violation)


def accumulate(acc: np.ndarray, excess: np.ndarray, dt: float) -> np.ndarray:
    """acc + max(excess, 0) * dt."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    return acc + np.maximum(np.asarray(excess, dtype=float), 0.0) * dt
