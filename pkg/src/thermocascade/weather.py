"""Temperature-driven operating-point changes: loads, power factors, line ratings."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geo import Area

T_MIN = 18.5
T_REF_HIGH = 24.21
T_REF_LOW = 9.91
DEFAULT_ANCHOR_RATIO = 1.5183
PF_FLOOR = 0.5
DIRECTIONS = ("heat", "cool")


@dataclass(frozen=True)
class LoadCurve:
    """Cubic load multiplier L(T) = a3 T^3 + a2 T^2 + a1 T + a0.

    If the cubic has a local maximum below ``t_min`` the multiplier is held at
    that peak for colder temperatures, so cooling never reduces load.
    """

    a0: float
    a1: float
    a2: float
    a3: float
    t_min: float = T_MIN
    t_ref_high: float = T_REF_HIGH
    t_ref_low: float = T_REF_LOW

    @cached_property
    def t_peak(self) -> float:
        """Local maximum of the cubic below ``t_min`` (-inf when there is none)."""
        roots = np.roots([3.0 * self.a3, 2.0 * self.a2, self.a1]) if self.a3 or self.a2 else []
        peaks = [r.real for r in roots
                 if abs(r.imag) < 1e-12 and r.real < self.t_min and self.second_derivative(r.real) < 0]
        return max(peaks) if peaks else -math.inf

    def _cubic(self, t):
        return ((self.a3 * t + self.a2) * t + self.a1) * t + self.a0

    def __call__(self, t):
        return self._cubic(np.maximum(t, self.t_peak))

    def derivative(self, t):
        d = (3.0 * self.a3 * t + 2.0 * self.a2) * t + self.a1
        if np.ndim(t) == 0:
            return 0.0 if t < self.t_peak else float(d)
        return np.where(np.asarray(t) < self.t_peak, 0.0, d)

    def second_derivative(self, t):
        return 6.0 * self.a3 * t + 2.0 * self.a2


def calibrate_load_curve(
    anchor_ratio: float = DEFAULT_ANCHOR_RATIO,
    t_min: float = T_MIN,
    t_ref_high: float = T_REF_HIGH,
    t_ref_low: float = T_REF_LOW,
) -> LoadCurve:
    """Fit the cubic through L(t_low)=1, L(t_high)=1, L'(t_min)=0, L(t_high+10)=anchor_ratio."""
    if not anchor_ratio > 1.0:
        raise ValueError(f"anchor_ratio must exceed 1, got {anchor_ratio}")
    t_anchor = t_ref_high + 10.0

    def row(t):
        return [1.0, t, t * t, t ** 3]

    a = np.array([
        row(t_ref_low),
        row(t_ref_high),
        [0.0, 1.0, 2.0 * t_min, 3.0 * t_min ** 2],
        row(t_anchor),
    ])
    rhs = np.array([1.0, 1.0, 0.0, anchor_ratio])
    if abs(np.linalg.det(a)) < 1e-12:
        raise ValueError("load-curve constraints are singular")
    coef = np.linalg.solve(a, rhs)
    return LoadCurve(*map(float, coef), t_min=t_min, t_ref_high=t_ref_high, t_ref_low=t_ref_low)


def base_temperature(direction: str, curve: LoadCurve | None = None) -> float:
    if direction == "heat":
        return curve.t_ref_high if curve else T_REF_HIGH
    if direction == "cool":
        return curve.t_ref_low if curve else T_REF_LOW
    raise ValueError(f"direction must be 'heat' or 'cool', got {direction!r}")


@dataclass(frozen=True)
class TemperatureField:
    base_temp: float
    area: Area
    delta_t: float
    direction: str = "heat"

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be 'heat' or 'cool', got {self.direction!r}")
        if self.direction == "heat" and self.delta_t < 0:
            raise ValueError("heat scenarios need delta_t >= 0")
        if self.direction == "cool" and self.delta_t > 0:
            raise ValueError("cool scenarios need delta_t <= 0")


def bus_temperature(lat, lon, field: TemperatureField):
    inside = field.area.contains(lat, lon)
    return np.where(inside, field.base_temp + field.delta_t, field.base_temp)


def line_temperature(fraction, field: TemperatureField):
    return field.base_temp + np.asarray(fraction, dtype=float) * field.delta_t


def power_factor(pf0, temp, field: TemperatureField, pf_slope: float):
    dt = np.asarray(temp, dtype=float) - field.base_temp
    if field.direction == "heat":
        return pf0 - pf_slope * dt
    return pf0 + pf_slope * dt


@dataclass
class LoadChange:
    p_mw: np.ndarray
    q_mvar: np.ndarray
    inside: np.ndarray
    delta_p: float
    pf_clamped: list[int]


def apply_load_change(
    p0: np.ndarray,
    q0: np.ndarray,
    lat: np.ndarray,
    lon: np.ndarray,
    field: TemperatureField,
    curve: LoadCurve,
    pf_slope: float = 0.001,
) -> LoadChange:
    """New bus loads for buses inside the disturbed area; others unchanged.

    Power factors below ``PF_FLOOR`` are clamped there and reported through
    ``pf_clamped`` (bus positions) and a ``RuntimeWarning``.
    """
    p0 = np.asarray(p0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    inside = np.asarray(field.area.contains(lat, lon), dtype=bool) & (p0 > 0)
    temp = bus_temperature(lat, lon, field)
    s0 = np.hypot(p0, q0)
    pf0 = np.where(s0 > 0, np.abs(p0) / np.where(s0 > 0, s0, 1.0), 1.0)
    pf = np.minimum(power_factor(pf0, temp, field, pf_slope), 1.0)
    floor = np.minimum(PF_FLOOR, pf0)  # never lift a bus above its own base power factor
    low = inside & (pf < floor)
    if np.any(low):
        warnings.warn(f"power factor clamped at {PF_FLOOR} on {int(low.sum())} bus(es)", RuntimeWarning)
    pf = np.maximum(pf, floor)
    p = np.where(inside, curve(temp) * p0, p0)
    q_sign = np.where(q0 < 0, -1.0, 1.0)
    # P tan(acos(pf)), with sin^2 built from the base sine so pf near 1 keeps its precision
    sin0 = np.where(s0 > 0, np.abs(q0) / np.where(s0 > 0, s0, 1.0), 0.0)
    d = pf - pf0
    sin = np.sqrt(np.maximum(sin0 * sin0 - d * (2.0 * pf0 + d), 0.0))
    q = np.where(inside, q_sign * p * sin / pf, q0)
    return LoadChange(p, q, inside, float((p - p0).sum()), [int(i) for i in np.flatnonzero(low)])


def rating_constant(rating0, rated_kv, v0, slope, t0):
    """c = F0/(V_rated V0) + k T0, frozen at the base operating point."""
    return np.asarray(rating0) / (np.asarray(rated_kv) * np.asarray(v0)) + np.asarray(slope) * t0


def dynamic_rating(rated_kv, v_pu, line_temp, c, slope=0.02, alpha=1.0):
    """F_d = alpha V_rated v (c - k T), clamped at zero (MVA)."""
    val = np.asarray(alpha) * np.asarray(rated_kv) * np.asarray(v_pu) * (
        np.asarray(c) - np.asarray(slope) * np.asarray(line_temp)
    )
    return np.maximum(val, 0.0)


def redistribute_generation(
    gen_p: np.ndarray,
    p_max: np.ndarray,
    eligible: np.ndarray,
    delta_p: float,
) -> tuple[np.ndarray, float]:
    """Spread ``delta_p`` over eligible units in proportion to their reserve.

    Returns the new setpoints and the part of ``delta_p`` that could not be
    placed (left to the slack).
    """
    gen_p = np.asarray(gen_p, dtype=float)
    out = gen_p.copy()
    if delta_p == 0.0:
        return out, 0.0
    reserve = np.where(eligible, np.maximum(p_max - gen_p, 0.0), 0.0)
    total = reserve.sum()
    if total <= 0.0:
        warnings.warn("no active reserve available; the slack takes the whole change", RuntimeWarning)
        return out, float(delta_p)
    out = gen_p + delta_p * reserve / total
    out = np.where(eligible, np.clip(out, 0.0, p_max), gen_p)
    placed = float((out - gen_p).sum())
    return out, float(delta_p - placed)
