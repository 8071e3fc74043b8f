"""The quasi-steady-state cascade loop.

One run applies a temperature disturbance around a center bus and then
alternates power flow, protection checks and the execution of the earliest
pending event until nothing is pending, the power flow diverges or the
voltage stability index reaches its threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import RunConfig
from .control import disconnect_coupled_shunts, run_redispatch, undervoltage_shed
from .geo import bus_point, build_area, crossing_fractions
from .grid import Network
from .outage import (
    ACCIDENTAL_TRIP_S,
    accumulate,
    gen_curve,
    gen_overload_limit,
    gen_trip_probability,
    generator_trip_time,
    line_overload_limit,
    line_trip_probability,
    line_trip_time,
    q_violation,
    violated_limit,
)
from .powerflow import compute_vsi
from .state import (
    MARK_ACCIDENTAL,
    MARK_OVERLOAD,
    NO_MARK,
    SystemState,
    refresh_topology,
    solve_state,
    total_served_load,
)
from .weather import (
    TemperatureField,
    apply_load_change,
    base_temperature,
    calibrate_load_curve,
    dynamic_rating,
    line_temperature,
    rating_constant,
    redistribute_generation,
)

EVENT_KINDS = (
    "line-trip", "generator-trip", "undervoltage-shed", "redispatch",
    "islanding", "divergence", "vsi-collapse",
)
# tie-break order for simultaneous pending events
PRIORITY = {"undervoltage-shed": 0, "line-trip": 1, "generator-trip": 2, "redispatch": 3}
TERMINATIONS = ("no-event", "divergence", "vsi-collapse", "blackout", "iteration-limit")


@dataclass
class Event:
    t_s: float
    kind: str
    elements: list[int]
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t_s": self.t_s, "kind": self.kind, "elements": list(self.elements), "detail": self.detail}


@dataclass(frozen=True, order=True)
class Pending:
    time: float
    priority: int
    element: int
    kind: str = field(compare=False)


def next_event(pending: list[Pending]) -> Pending | None:
    """Earliest pending event; ties by kind priority, then lowest element id."""
    if not pending:
        return None
    return min(pending)


@dataclass
class CascadeTrace:
    config_digest: str
    seed: int
    center_bus: int
    termination: str = "no-event"
    events: list[Event] = field(default_factory=list)
    t_s: list[float] = field(default_factory=list)
    load_mw: list[float] = field(default_factory=list)
    vsi: list[float] = field(default_factory=list)

    @property
    def lines_tripped(self) -> int:
        return sum(1 for e in self.events if e.kind == "line-trip")

    @property
    def gens_tripped(self) -> int:
        return sum(1 for e in self.events if e.kind == "generator-trip")

    @property
    def outages(self) -> int:
        return self.lines_tripped + self.gens_tripped

    @property
    def shed_mw(self) -> float:
        total = 0.0
        for e in self.events:
            if e.kind == "undervoltage-shed":
                total += e.detail["shed_mw"]
            elif e.kind == "islanding":
                total += e.detail["lost_load_mw"]
        return total

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "center_bus": self.center_bus,
            "termination": self.termination,
            "events": [e.to_dict() for e in self.events],
            "series": {"t_s": list(self.t_s), "load_mw": list(self.load_mw), "vsi": list(self.vsi)},
            "totals": {"lines": self.lines_tripped, "generators": self.gens_tripped, "shed_mw": self.shed_mw},
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "CascadeTrace":
        series = doc["series"]
        tr = cls(doc["config_digest"], int(doc["seed"]), int(doc["center_bus"]), doc["termination"],
                 [Event(e["t_s"], e["kind"], list(e["elements"]), dict(e["detail"])) for e in doc["events"]],
                 list(series["t_s"]), list(series["load_mw"]), [_unjson(v) for v in series["vsi"]])
        return tr


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _unjson(v):
    return float(v) if isinstance(v, str) else v


# ---------------------------------------------------------------------------
# Base operating point, cached per network
# ---------------------------------------------------------------------------

@dataclass
class BaseContext:
    vm: np.ndarray
    va: np.ndarray
    gen_p: np.ndarray  # setpoints with the slack at its solved output
    vsi: float
    v_line: np.ndarray  # mean endpoint voltage per branch


_BASE_CACHE: dict[int, tuple[Network, BaseContext]] = {}


def base_context(net: Network) -> BaseContext:
    hit = _BASE_CACHE.get(id(net))
    if hit is not None and hit[0] is net:
        return hit[1]
    st = SystemState.initial(net)
    refresh_topology(net, st)
    sol = solve_state(net, st, warm=False)
    if not sol.converged:
        raise RuntimeError("base case power flow does not converge")
    gen_p = st.gen_p.copy()
    gen_p[st.slack_gens] = sol.gen_p[st.slack_gens]
    ctx = BaseContext(sol.vm.copy(), sol.va.copy(), gen_p, compute_vsi(sol),
                      0.5 * (sol.vm[net.f_idx] + sol.vm[net.t_idx]))
    _BASE_CACHE[id(net)] = (net, ctx)
    return ctx


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------

class _Run:
    def __init__(self, net: Network, cfg: RunConfig, rng: np.random.Generator) -> None:
        self.net, self.cfg, self.rng = net, cfg, rng
        self.base = base_context(net)
        self.lp, self.gp = cfg.line_params, cfg.gen_params
        self.sp, self.rp = cfg.shed_params, cfg.redispatch_params
        self.gen_curves = [gen_curve(g.q_min, g.q_max, self.gp) for g in net.generators]
        self.state = SystemState.initial(net)
        refresh_topology(net, self.state)
        self.state.vm = self.base.vm.copy()
        self.state.va = self.base.va.copy()
        self.state.gen_p = self.base.gen_p.copy()
        self.line_mark_t = np.full(net.n_branch, np.nan)
        self.gen_mark_t = np.full(net.n_gen, np.nan)
        self.rd_since = math.nan
        # overloads the operator already failed to clear; only a new one re-triggers
        self.rd_futile = np.zeros(net.n_branch, bool)

    # -- disturbance ------------------------------------------------------
    def apply_disturbance(self, center_bus: int) -> None:
        net, cfg, st = self.net, self.cfg, self.state
        curve = calibrate_load_curve(cfg.load_curve_anchor_ratio)
        t0 = base_temperature(cfg.scenario_direction, curve)
        area = build_area(bus_point(net, center_bus), cfg.gamma, net)
        self.field = TemperatureField(t0, area, cfg.delta_t, cfg.scenario_direction)
        self.line_temp = line_temperature(crossing_fractions(area, net), self.field)
        if cfg.alpha_lower < 1.0:
            self.alpha = self.rng.uniform(cfg.alpha_lower, 1.0, net.n_branch)
        else:
            self.alpha = np.ones(net.n_branch)
        self.slope = np.full(net.n_branch, cfg.rating_slope_ka_per_c)
        self.c = rating_constant(net.rating_initial, net.rated_kv, self.base.v_line, self.slope, t0)
        change = apply_load_change(net.p_load_mw, net.q_load_mvar, net.lat, net.lon,
                                   self.field, curve, cfg.pf_slope)
        st.p_load = change.p_mw
        st.q_load = change.q_mvar
        self.heated_buses = [net.buses[i].id for i in np.flatnonzero(change.inside)]
        eligible = st.gen_in & ~st.slack_gens & (net.gen_p_max > 0)
        st.gen_p, _ = redistribute_generation(st.gen_p, net.gen_p_max, eligible, change.delta_p)
        self.delta_p = change.delta_p

    # -- helpers ----------------------------------------------------------
    def ratings(self, vm: np.ndarray) -> np.ndarray:
        v_line = 0.5 * (vm[self.net.f_idx] + vm[self.net.t_idx])
        return dynamic_rating(self.net.rated_kv, v_line, self.line_temp, self.c, self.slope, self.alpha)

    def basis_rating(self, fd: np.ndarray) -> np.ndarray:
        return self.net.rating_initial if self.rp.rating_basis == "initial" else fd

    def spread_lost_generation(self, island: int, lost_mw: float) -> None:
        """Lost active generation is taken up by the island's units in proportion to reserve."""
        net, st = self.net, self.state
        if lost_mw == 0.0:
            return
        gb = net.gen_bus_idx
        eligible = st.gen_in & ~st.slack_gens & (net.gen_p_max > 0) & (st.labels[gb] == island)
        st.gen_p, _ = redistribute_generation(st.gen_p, net.gen_p_max, eligible, lost_mw)

    def after_topology_change(self, t: float, events: list[Event], cause: int) -> None:
        net, st = self.net, self.state
        before = st.slack_gens.copy()
        change = refresh_topology(net, st)
        # newly formed islands: balance their own load with their own units
        gb = net.gen_bus_idx
        for g in np.flatnonzero(st.slack_gens & ~before):
            lab = st.labels[gb[g]]
            members = st.gen_in & (st.labels[gb] == lab)
            load = float(st.p_load[(st.labels == lab) & st.energized].sum())
            gen = float(st.gen_p[members].sum())
            self.spread_lost_generation(lab, load - gen)
        if change.dead_buses or change.new_slacks:
            events.append(Event(t, "islanding", list(change.dead_buses), {
                "cause_branch": cause,
                "lost_load_mw": change.lost_load_mw,
                "stranded_generators": change.lost_gens,
                "new_slack_generators": change.new_slacks,
            }))

    # -- main loop --------------------------------------------------------
    def run(self, trace: CascadeTrace) -> CascadeTrace:
        net, cfg, st, rng = self.net, self.cfg, self.state, self.rng
        events = trace.events
        t = 0.0
        first = True
        for _ in range(cfg.max_iterations):
            if not np.any(st.energized):
                trace.termination = "blackout"
                break
            sol = solve_state(net, st, warm=not first)
            first = False
            if not sol.converged:
                events.append(Event(t, "divergence", [], {"iterations": sol.iterations}))
                trace.termination = "divergence"
                break
            slack = st.slack_gens & st.gen_in
            st.gen_p[slack] = sol.gen_p[slack]
            vsi = compute_vsi(sol)
            trace.t_s.append(t)
            trace.load_mw.append(total_served_load(net, st))
            trace.vsi.append(vsi)
            if vsi <= cfg.vsi_threshold:
                events.append(Event(t, "vsi-collapse", [], {"vsi": vsi}))
                trace.termination = "vsi-collapse"
                break

            flow = sol.flow_mva
            fd = self.ratings(sol.vm)
            on = st.branch_in
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(fd > 0, flow / np.where(fd > 0, fd, 1.0), np.inf)
            ratio = np.where(on, ratio, 0.0)
            excess = np.where(on, flow - fd, 0.0)
            q = np.where(st.gen_in, sol.gen_q, 0.0)
            viol = np.where(st.gen_in, q_violation(q, net.gen_q_min, net.gen_q_max), 0.0)

            # undervoltage timers restart whenever a bus recovers
            low = st.energized & (st.p_load > 0) & self.sp.pickup(sol.vm)
            st.uv_since[low & np.isnan(st.uv_since)] = t
            st.uv_since[~low] = np.nan

            # operator re-dispatch trigger
            trig = on & (flow > self.basis_rating(fd))
            self.rd_futile &= trig
            if cfg.redispatch and np.any(trig & ~self.rd_futile):
                if math.isnan(self.rd_since):
                    self.rd_since = t
            else:
                self.rd_since = math.nan

            self.sample_marks(t, ratio, fd, q, viol)
            pending = self.pending_events(t, flow, fd, viol)
            ev = next_event(pending)
            if ev is None:
                trace.termination = "no-event"
                break
            dt = ev.time
            st.line_acc = accumulate(st.line_acc, excess, dt)
            st.gen_acc = accumulate(st.gen_acc, viol, dt)
            t += dt
            st.time = t
            self.execute(ev, t, events, sol, fd, ratio, q)
        else:
            trace.termination = "iteration-limit"
        return trace

    def sample_marks(self, t, ratio, fd, q, viol) -> None:
        net, st, rng = self.net, self.state, self.rng
        u_line = rng.random(net.n_branch)
        u_gen = rng.random(net.n_gen)
        on = st.branch_in
        over = on & (ratio > 1.0)
        st.line_mark[~over & (st.line_mark == MARK_OVERLOAD)] = NO_MARK
        st.line_u[~over] = np.nan
        onset = over & np.isnan(st.line_u)
        st.line_u[onset] = u_line[onset]
        new_limit = onset & np.isnan(st.line_limit)
        st.line_limit[new_limit] = line_overload_limit(fd[new_limit], self.lp)
        p_over = line_trip_probability(ratio, self.lp)
        hit = over & (st.line_mark == NO_MARK) & (st.line_u < p_over)
        st.line_mark[hit] = MARK_OVERLOAD
        acc = on & ~over & (st.line_mark == NO_MARK) & (u_line < self.lp.p1)
        st.line_mark[acc] = MARK_ACCIDENTAL
        self.line_mark_t[acc] = t

        gon = st.gen_in
        gover = gon & (viol > 0.0)
        st.gen_mark[~gover & (st.gen_mark == MARK_OVERLOAD)] = NO_MARK
        st.gen_u[~gover] = np.nan
        gonset = gover & np.isnan(st.gen_u)
        st.gen_u[gonset] = u_gen[gonset]
        glim = gonset & np.isnan(st.gen_limit)
        if np.any(glim):
            lim = violated_limit(q[glim], net.gen_q_min[glim], net.gen_q_max[glim])
            st.gen_limit[glim] = gen_overload_limit(lim, self.gp)
        for g in np.flatnonzero(gover & (st.gen_mark == NO_MARK)):
            if st.gen_u[g] < gen_trip_probability(float(q[g]), self.gen_curves[g], self.gp):
                st.gen_mark[g] = MARK_OVERLOAD
        gacc = gon & ~gover & (st.gen_mark == NO_MARK) & (u_gen < self.gp.p4)
        st.gen_mark[gacc] = MARK_ACCIDENTAL
        self.gen_mark_t[gacc] = t

    def pending_events(self, t, flow, fd, viol) -> list[Pending]:
        net, st = self.net, self.state
        out: list[Pending] = []
        for k in np.flatnonzero(st.branch_in & (st.line_mark != NO_MARK)):
            if st.line_mark[k] == MARK_OVERLOAD:
                dt = line_trip_time(flow[k], fd[k], st.line_acc[k], st.line_limit[k])
            else:
                dt = max(self.line_mark_t[k] + ACCIDENTAL_TRIP_S - t, 0.0)
            out.append(Pending(dt, PRIORITY["line-trip"], net.branches[k].id, "line-trip"))
        for g in np.flatnonzero(st.gen_in & (st.gen_mark != NO_MARK)):
            if st.gen_mark[g] == MARK_OVERLOAD:
                dt = generator_trip_time(viol[g], st.gen_acc[g], st.gen_limit[g])
            else:
                dt = max(self.gen_mark_t[g] + ACCIDENTAL_TRIP_S - t, 0.0)
            out.append(Pending(dt, PRIORITY["generator-trip"], net.generators[g].id, "generator-trip"))
        for b in np.flatnonzero(~np.isnan(st.uv_since)):
            dt = max(st.uv_since[b] + self.sp.delay_s - t, 0.0)
            out.append(Pending(dt, PRIORITY["undervoltage-shed"], net.buses[b].id, "undervoltage-shed"))
        if not math.isnan(self.rd_since):
            dt = max(self.rd_since + self.rp.duration_s - t, 0.0)
            out.append(Pending(dt, PRIORITY["redispatch"], 0, "redispatch"))
        return out

    def execute(self, ev: Pending, t, events, sol, fd, ratio, q) -> None:
        net, st = self.net, self.state
        if ev.kind == "line-trip":
            k = net.branch_index[ev.element]
            accidental = st.line_mark[k] == MARK_ACCIDENTAL
            st.branch_in[k] = False
            st.line_mark[k] = NO_MARK
            st.line_u[k] = np.nan
            shunts = disconnect_coupled_shunts(net, st.shunt_in, k)
            events.append(Event(t, "line-trip", [ev.element], {
                "cause": "accidental" if accidental else "overload",
                "probability": float(self.lp.p1 if accidental else line_trip_probability(ratio[k], self.lp)),
                "flow_mva": float(sol.flow_mva[k]),
                "rating_mva": float(fd[k]),
                "shunts_disconnected": shunts,
            }))
            self.after_topology_change(t, events, ev.element)
        elif ev.kind == "generator-trip":
            g = net.gen_index[ev.element]
            accidental = st.gen_mark[g] == MARK_ACCIDENTAL
            lost = float(st.gen_p[g])
            lab = st.labels[net.gen_bus_idx[g]]
            st.gen_in[g] = False
            st.gen_mark[g] = NO_MARK
            st.gen_u[g] = np.nan
            was_slack = bool(st.slack_gens[g])
            st.slack_gens[g] = False
            events.append(Event(t, "generator-trip", [ev.element], {
                "cause": "accidental" if accidental else "overexcitation",
                "probability": float(self.gp.p4 if accidental
                                     else gen_trip_probability(float(q[g]), self.gen_curves[g], self.gp)),
                "q_mvar": float(q[g]),
                "p_mw": lost,
                "bus": net.generators[g].bus,
            }))
            if not was_slack:
                self.spread_lost_generation(lab, lost)
            self.after_topology_change(t, events, 0)
            if was_slack:
                self.spread_lost_generation(lab, lost)
        elif ev.kind == "undervoltage-shed":
            b = net.bus_index[ev.element]
            dp, dq = undervoltage_shed(float(sol.vm[b]), float(st.p_load[b]), float(st.q_load[b]), self.sp)
            st.p_load[b] -= dp
            st.q_load[b] -= dq
            st.uv_since[b] = np.nan
            events.append(Event(t, "undervoltage-shed", [ev.element], {
                "v_pu": float(sol.vm[b]), "shed_mw": dp, "shed_mvar": dq,
            }))
        elif ev.kind == "redispatch":
            self.do_redispatch(t, events)
        else:  # pragma: no cover - kinds are closed
            raise ValueError(ev.kind)

    def do_redispatch(self, t, events) -> None:
        net, st = self.net, self.state
        last = {}

        def evaluate(gen_p):
            trial = st.copy()
            trial.gen_p = gen_p.copy()
            s = solve_state(net, trial)
            if not s.converged:
                return None
            out = s.flow_mva, s.s_from.real, self.basis_rating(self.ratings(s.vm))
            last[gen_p.tobytes()] = out
            return out

        out = run_redispatch(net, st.gen_p, self.rp, evaluate, st.branch_in, st.gen_in,
                             st.slack_gens, st.labels)
        st.gen_p = out.gen_p
        self.rd_since = math.nan
        final = last.get(out.gen_p.tobytes())
        if final is not None and not out.cleared:
            self.rd_futile = st.branch_in & (final[0] > final[2])
        events.append(Event(t, "redispatch", out.branches, {
            "rounds": out.rounds, "moved_mw": out.moved_mw, "cleared": out.cleared,
        }))


def run_cascade(net: Network, cfg: RunConfig, seed: int | None = None) -> CascadeTrace:
    """Simulate one cascade; ``seed`` overrides ``cfg.seed``."""
    seed = cfg.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    if cfg.center_bus is None:
        center = int(net.load_bus_ids[int(rng.integers(len(net.load_bus_ids)))])
    else:
        center = int(cfg.center_bus)
        if center not in net.bus_index:
            raise ValueError(f"center_bus {center} is not in the network")
    run = _Run(net, cfg, rng)
    run.apply_disturbance(center)
    trace = CascadeTrace(cfg.digest(), seed, center)
    return run.run(trace)
