"""Mutable per-run system state and the topology bookkeeping around it."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .grid import Network, island_labels
from .powerflow import PowerFlowSolution, make_case, solve_case

NO_MARK = 0
MARK_ACCIDENTAL = 1
MARK_OVERLOAD = 2


@dataclass
class SystemState:
    branch_in: np.ndarray
    gen_in: np.ndarray
    shunt_in: np.ndarray
    p_load: np.ndarray  # MW per bus
    q_load: np.ndarray  # MVAr per bus
    gen_p: np.ndarray  # MW setpoint per unit
    slack_gens: np.ndarray
    energized: np.ndarray
    labels: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    time: float = 0.0
    # overload bookkeeping (see outage.py)
    line_acc: np.ndarray = field(default=None)  # MVA*s
    line_limit: np.ndarray = field(default=None)  # MVA*s, nan until first overload
    line_u: np.ndarray = field(default=None)  # episode threshold, nan outside an episode
    line_mark: np.ndarray = field(default=None)
    gen_acc: np.ndarray = field(default=None)  # MVAr*s
    gen_limit: np.ndarray = field(default=None)
    gen_u: np.ndarray = field(default=None)
    gen_mark: np.ndarray = field(default=None)
    uv_since: np.ndarray = field(default=None)  # clock time a bus dropped below threshold

    @classmethod
    def initial(cls, net: Network) -> "SystemState":
        nb, nl, ng = net.n_bus, net.n_branch, net.n_gen
        slack = np.array([g.is_slack for g in net.generators], dtype=bool)
        st = cls(
            branch_in=np.ones(nl, bool),
            gen_in=np.ones(ng, bool),
            shunt_in=np.ones(len(net.shunts), bool),
            p_load=net.p_load_mw.copy(),
            q_load=net.q_load_mvar.copy(),
            gen_p=net.gen_p_mw.copy(),
            slack_gens=slack,
            energized=np.ones(nb, bool),
            labels=np.zeros(nb, np.int64),
            vm=np.ones(nb),
            va=np.zeros(nb),
            line_acc=np.zeros(nl),
            line_limit=np.full(nl, np.nan),
            line_u=np.full(nl, np.nan),
            line_mark=np.zeros(nl, np.int8),
            gen_acc=np.zeros(ng),
            gen_limit=np.full(ng, np.nan),
            gen_u=np.full(ng, np.nan),
            gen_mark=np.zeros(ng, np.int8),
            uv_since=np.full(nb, np.nan),
        )
        return st

    def copy(self) -> "SystemState":
        kw = {}
        for f in fields(self):
            val = getattr(self, f.name)
            kw[f.name] = val.copy() if isinstance(val, np.ndarray) else val
        return SystemState(**kw)


def total_served_load(net: Network, state: SystemState) -> float:
    """Active load (MW) at buses that sit in an energized island."""
    return float(state.p_load[state.energized].sum())


@dataclass
class TopologyChange:
    dead_buses: list[int]
    lost_load_mw: float
    lost_gens: list[int]
    new_slacks: list[int]


def refresh_topology(net: Network, state: SystemState) -> TopologyChange:
    """Recompute islands after a status change.

    Buses in islands without a generating unit lose their load (set to zero);
    units stranded there are switched off. Every energized island without a
    slack unit promotes the unit with the largest active reserve.
    """
    labels = island_labels(net, state.branch_in)
    gb = net.gen_bus_idx
    capable = state.gen_in & (net.gen_p_max > 0)
    live_labels = set(labels[gb[capable]].tolist())
    energized = np.array([lab in live_labels for lab in labels], dtype=bool)

    newly_dead = state.energized & ~energized
    lost = float(state.p_load[newly_dead].sum())
    dead_ids = [net.buses[i].id for i in np.flatnonzero(newly_dead)]
    state.p_load[~energized] = 0.0
    state.q_load[~energized] = 0.0
    stranded = state.gen_in & ~energized[gb]
    lost_gens = [net.generators[g].id for g in np.flatnonzero(stranded)]
    state.gen_in &= energized[gb]
    state.slack_gens &= state.gen_in

    new_slacks = []
    for lab in sorted(live_labels):
        members = capable & state.gen_in & (labels[gb] == lab)
        if np.any(state.slack_gens & members):
            # a syncon cannot balance active power; hand over if that is the case
            continue
        reserve = np.where(members, net.gen_p_max - state.gen_p, -np.inf)
        g = int(np.argmax(reserve))  # first maximum, i.e. lowest index on ties
        state.slack_gens[g] = True
        new_slacks.append(net.generators[g].id)
    # drop slack flags on units that no longer balance a live island
    state.slack_gens &= capable
    state.energized = energized
    state.labels = labels
    state.uv_since[~energized] = np.nan
    return TopologyChange(dead_ids, lost, lost_gens, new_slacks)


def solve_state(net: Network, state: SystemState, warm: bool = True) -> PowerFlowSolution:
    case = make_case(
        net, state.branch_in, state.gen_in, state.shunt_in, state.p_load, state.q_load,
        state.gen_p, state.slack_gens, state.energized, state.labels,
    )
    vm0 = state.vm if warm else None
    va0 = state.va if warm else None
    sol = solve_case(net, case, state.branch_in, state.gen_in, state.gen_p, state.slack_gens, vm0, va0)
    if sol.converged:
        state.vm = sol.vm.copy()
        state.va = sol.va.copy()
    return sol
