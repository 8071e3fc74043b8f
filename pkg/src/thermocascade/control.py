"""Undervoltage load shedding, DC shift factors and operator re-dispatch."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Network

RATING_BASES = ("initial", "dynamic")


@dataclass(frozen=True)
class SheddingParams:
    v_threshold: float = 0.9
    k_shed: float = 600.0  # MW per pu of voltage deficit
    delay_s: float = 3.0
    # a bus counts as undervoltage only below v_threshold - deadband
    deadband: float = 0.002

    def __post_init__(self) -> None:
        if min(self.v_threshold, self.k_shed, self.delay_s) <= 0:
            raise ValueError("shedding parameters must be positive")
        if not 0.0 <= self.deadband < self.v_threshold:
            raise ValueError("deadband must lie in [0, v_threshold)")

    def pickup(self, v):
        """True where the relay sees an undervoltage."""
        return v < self.v_threshold - self.deadband


@dataclass(frozen=True)
class RedispatchParams:
    eta: float = 1.05
    duration_s: float = 60.0
    max_rounds: int = 10
    rating_basis: str = "initial"

    def __post_init__(self) -> None:
        if self.eta < 1.0:
            raise ValueError("eta must be >= 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.rating_basis not in RATING_BASES:
            raise ValueError(f"rating_basis must be one of {RATING_BASES}")


def undervoltage_shed(v: float, p_mw: float, q_mvar: float, params: SheddingParams = SheddingParams()):
    """(dP, dQ) to shed at a bus whose voltage has stayed below threshold long enough."""
    if p_mw <= 0.0 or not v < params.v_threshold:
        return 0.0, 0.0
    dp = min(params.k_shed * (params.v_threshold - v), p_mw)
    return dp, q_mvar * dp / p_mw


def disconnect_coupled_shunts(net: Network, shunt_in: np.ndarray, branch_pos: int) -> list[int]:
    """Switch off the shunts tied to a branch; returns the shunt ids that changed."""
    changed = []
    for k in net.coupled_shunts.get(branch_pos, ()):
        if shunt_in[k]:
            shunt_in[k] = False
            changed.append(net.shunts[k].id)
    return changed


def shift_factors(
    net: Network,
    branch_in: np.ndarray,
    labels: np.ndarray,
    slack_bus_pos: int,
) -> np.ndarray:
    """DC PTDF matrix (n_branch x n_bus) for the island holding ``slack_bus_pos``.

    Entry [l, i] is the MW change on branch l (from->to) per MW injected at
    bus i and withdrawn at the slack. Columns outside the island and rows of
    branches outside it are zero.
    """
    lab = labels[slack_bus_pos]
    buses = np.flatnonzero(labels == lab)
    on = np.asarray(branch_in, bool) & (labels[net.f_idx] == lab)
    pos = -np.ones(net.n_bus, dtype=np.int64)
    pos[buses] = np.arange(len(buses))
    x = np.array([br.x for br in net.branches])
    f, t = pos[net.f_idx[on]], pos[net.t_idx[on]]
    b = 1.0 / x[on]
    m = len(buses)
    bbus = np.zeros((m, m))
    np.add.at(bbus, (f, f), b)
    np.add.at(bbus, (t, t), b)
    np.add.at(bbus, (f, t), -b)
    np.add.at(bbus, (t, f), -b)
    keep = np.ones(m, bool)
    keep[pos[slack_bus_pos]] = False
    out = np.zeros((net.n_branch, net.n_bus))
    if m == 1:
        return out
    inv = np.zeros((m, m))
    inv[np.ix_(keep, keep)] = np.linalg.inv(bbus[np.ix_(keep, keep)])
    rows = np.flatnonzero(on)
    bf = np.zeros((len(rows), m))
    bf[np.arange(len(rows)), f] = b
    bf[np.arange(len(rows)), t] = -b
    out[np.ix_(rows, buses)] = bf @ inv
    return out


@dataclass
class RedispatchOutcome:
    gen_p: np.ndarray
    rounds: int
    moved_mw: float
    branches: list[int] = field(default_factory=list)
    cleared: bool = False


def allocate_redispatch(
    need_mw: float,
    sens: np.ndarray,
    gen_p: np.ndarray,
    p_max: np.ndarray,
    eligible: np.ndarray,
    eta: float,
    tol: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """Shift generation to cut a branch flow by ``need_mw`` (flow-direction sensitivities).

    Positive-sensitivity units are lowered first, largest sensitivity first,
    each by eta * remaining / S within [0, P_max]; whatever remains is placed
    on negative-sensitivity units, most negative first. Returns the new
    setpoints and the flow reduction still missing.
    """
    out = np.asarray(gen_p, dtype=float).copy()
    target = eta * need_mw  # flow change including the compensation margin
    remaining = target
    pos = np.flatnonzero(eligible & (sens > tol))
    for g in pos[np.argsort(-sens[pos], kind="stable")]:
        if remaining <= tol:
            break
        dp = min(remaining / sens[g], out[g])
        out[g] -= dp
        remaining -= dp * sens[g]
    neg = np.flatnonzero(eligible & (sens < -tol))
    for g in neg[np.argsort(sens[neg], kind="stable")]:
        if remaining <= tol:
            break
        dp = min(remaining / -sens[g], max(p_max[g] - out[g], 0.0))
        out[g] += dp
        remaining -= dp * -sens[g]
    return out, max(remaining, 0.0) / eta


def redispatch_delta(rating: float, flow: float, sens: float, eta: float = 1.05) -> float:
    """Single-unit setpoint change eta (F_rating - F) / S."""
    return eta * (rating - flow) / sens


def plan_redispatch(
    net: Network,
    flow_mva: np.ndarray,
    p_from_mw: np.ndarray,
    rating: np.ndarray,
    branch_in: np.ndarray,
    gen_in: np.ndarray,
    slack_gens: np.ndarray,
    labels: np.ndarray,
    gen_p: np.ndarray,
    eta: float,
) -> tuple[np.ndarray, list[int]]:
    """One re-dispatch round over every branch above ``rating``."""
    over = np.flatnonzero(branch_in & (flow_mva > rating))
    if over.size == 0:
        return np.asarray(gen_p, float).copy(), []
    order = over[np.argsort(-(flow_mva[over] / net.rating_initial[over]), kind="stable")]
    out = np.asarray(gen_p, float).copy()
    gb = net.gen_bus_idx
    ptdf_cache: dict[int, np.ndarray] = {}
    handled = []
    for br in order:
        lab = labels[net.f_idx[br]]
        slack = np.flatnonzero(slack_gens & gen_in & (labels[gb] == lab))
        if slack.size == 0:
            continue
        sbus = int(gb[slack[0]])
        if sbus not in ptdf_cache:
            ptdf_cache[sbus] = shift_factors(net, branch_in, labels, sbus)
        direction = 1.0 if p_from_mw[br] >= 0 else -1.0
        sens = direction * ptdf_cache[sbus][br, gb]
        eligible = gen_in & ~slack_gens & (labels[gb] == lab)
        if not np.any(eligible):
            warnings.warn("no controllable generators for re-dispatch", RuntimeWarning)
            continue
        out, _ = allocate_redispatch(flow_mva[br] - rating[br], sens, out, net.gen_p_max, eligible, eta)
        handled.append(net.branches[br].id)
    return out, handled


def _overload(result: tuple, branch_in: np.ndarray) -> float:
    flow, _, rating = result
    return float(np.maximum(flow - rating, 0.0)[branch_in].sum())


def run_redispatch(
    net: Network,
    gen_p: np.ndarray,
    params: RedispatchParams,
    evaluate: Callable[[np.ndarray], tuple | None],
    branch_in: np.ndarray,
    gen_in: np.ndarray,
    slack_gens: np.ndarray,
    labels: np.ndarray,
) -> RedispatchOutcome:
    """Iterate re-dispatch rounds with an AC re-solve after each.

    A round is kept only when the re-solved network carries less total
    overload than before; otherwise the previous dispatch stands.
    ``evaluate(gen_p)`` solves the network for a candidate dispatch and
    returns ``(flow_mva, p_from_mw, rating)`` or ``None`` on divergence.
    """
    start = np.asarray(gen_p, float).copy()
    current = start.copy()
    result = evaluate(current)
    handled: list[int] = []
    rounds = 0
    while result is not None and rounds < params.max_rounds:
        flow, p_from, rating = result
        if not np.any(branch_in & (flow > rating)):
            break
        new, ids = plan_redispatch(
            net, flow, p_from, rating, branch_in, gen_in, slack_gens, labels, current, params.eta
        )
        rounds += 1
        if not ids or np.allclose(new, current, atol=1e-9, rtol=0):
            break
        trial = evaluate(new)
        if trial is None or _overload(trial, branch_in) >= _overload(result, branch_in):
            break  # the AC check rejects rounds that do not relieve the network
        handled.extend(i for i in ids if i not in handled)
        current, result = new, trial
    cleared = result is not None and not np.any(branch_in & (result[0] > result[2]))
    moved = float(np.abs(current - start)[~slack_gens].sum())
    return RedispatchOutcome(current, rounds, moved, handled, cleared)
