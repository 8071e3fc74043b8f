"""AC power flow (polar Newton-Raphson), branch flows, and the QV stability index."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Network

TOL = 1e-8
MAX_ITER = 30


class PowerFlowDiverged(RuntimeError):
    pass


@dataclass
class PowerFlowCase:
    """Everything the solver needs for one operating point (per-unit arrays)."""

    ybus: np.ndarray
    p_spec: np.ndarray  # net injection, pu
    q_spec: np.ndarray
    ref: np.ndarray  # bus indices
    pv: np.ndarray
    pq: np.ndarray
    v_set: np.ndarray  # per bus; used on ref/pv buses
    active: np.ndarray  # bool mask of energized buses
    island: np.ndarray  # component label per bus
    shunt_in: np.ndarray | None = None


@dataclass
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    s_from: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))  # MVA
    s_to: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    gen_p: np.ndarray = field(default_factory=lambda: np.zeros(0))  # MW
    gen_q: np.ndarray = field(default_factory=lambda: np.zeros(0))  # MVAr
    case: PowerFlowCase | None = None

    @property
    def flow_mva(self) -> np.ndarray:
        """Apparent branch flow, the larger of the two ends."""
        return np.maximum(np.abs(self.s_from), np.abs(self.s_to))

    @property
    def v(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)


def branch_admittances(net: Network, branch_in: np.ndarray):
    """Pi-model admittance terms (yff, yft, ytf, ytt) with tripped branches zeroed."""
    r = np.array([br.r for br in net.branches])
    x = np.array([br.x for br in net.branches])
    b = np.array([br.b for br in net.branches])
    on = np.asarray(branch_in, dtype=float)
    ys = on / (r + 1j * x)
    bc = on * b
    ytt = ys + 0.5j * bc
    return ytt, -ys, -ys, ytt


def build_ybus(net: Network, branch_in: np.ndarray, shunt_in: np.ndarray | None = None) -> np.ndarray:
    n = net.n_bus
    yff, yft, ytf, ytt = branch_admittances(net, branch_in)
    f, t = net.f_idx, net.t_idx
    y = np.zeros((n, n), dtype=complex)
    np.add.at(y, (f, f), yff)
    np.add.at(y, (f, t), yft)
    np.add.at(y, (t, f), ytf)
    np.add.at(y, (t, t), ytt)
    if net.shunts:
        on = np.ones(len(net.shunts), bool) if shunt_in is None else np.asarray(shunt_in, bool)
        np.add.at(y, (net.shunt_bus_idx[on], net.shunt_bus_idx[on]), 1j * net.shunt_q_pu[on])
    return y


def dsbus_dv(ybus: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of complex bus injections w.r.t. angle and magnitude."""
    ibus = ybus @ v
    av = np.abs(v)
    vnorm = np.where(av > 0, v / np.where(av > 0, av, 1.0), 0.0)
    diag_v = np.diag(v)
    ds_dva = 1j * diag_v @ np.conj(np.diag(ibus) - ybus * v[np.newaxis, :])
    ds_dvm = diag_v @ np.conj(ybus * vnorm[np.newaxis, :]) + np.diag(np.conj(ibus) * vnorm)
    return ds_dva, ds_dvm


def newton_raphson(
    case: PowerFlowCase,
    vm0: np.ndarray,
    va0: np.ndarray,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, bool, int, float]:
    ybus = case.ybus
    pv, pq = case.pv, case.pq
    pvpq = np.concatenate([pv, pq])
    vm = vm0.copy()
    va = va0.copy()
    held = np.concatenate([case.ref, pv])
    vm[held] = case.v_set[held]
    s_spec = case.p_spec + 1j * case.q_spec
    n_pvpq, n_pq = len(pvpq), len(pq)

    def mismatch(v):
        mis = v * np.conj(ybus @ v) - s_spec
        return np.concatenate([mis.real[pvpq], mis.imag[pq]])

    v = vm * np.exp(1j * va)
    f = mismatch(v)
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        ds_dva, ds_dvm = dsbus_dv(ybus, v)
        jac = np.empty((n_pvpq + n_pq, n_pvpq + n_pq))
        jac[:n_pvpq, :n_pvpq] = ds_dva.real[np.ix_(pvpq, pvpq)]
        jac[:n_pvpq, n_pvpq:] = ds_dvm.real[np.ix_(pvpq, pq)]
        jac[n_pvpq:, :n_pvpq] = ds_dva.imag[np.ix_(pq, pvpq)]
        jac[n_pvpq:, n_pvpq:] = ds_dvm.imag[np.ix_(pq, pq)]
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return vm, va, False, it, float("inf")
        va[pvpq] += dx[:n_pvpq]
        vm[pq] += dx[n_pvpq:]
        if not np.all(np.isfinite(vm)) or np.any(vm[pq] <= 0.0):
            return vm, va, False, it, float("inf")
        v = vm * np.exp(1j * va)
        f = mismatch(v)
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        if not np.isfinite(norm) or norm > 1e6:
            return vm, va, False, it, float("inf")
    return vm, va, norm < tol, it, norm


def solve_case(
    net: Network,
    case: PowerFlowCase,
    branch_in: np.ndarray,
    gen_in: np.ndarray,
    gen_p_mw: np.ndarray,
    slack_gens: np.ndarray,
    vm0: np.ndarray | None = None,
    va0: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Solve ``case`` and derive branch flows and generator outputs."""
    n = net.n_bus
    if vm0 is None:
        vm0 = np.ones(n)
    if va0 is None:
        va0 = np.zeros(n)
    vm0 = np.where(case.active, vm0, 1.0)
    va0 = np.where(case.active, va0, 0.0)
    vm, va, ok, it, mis = newton_raphson(case, vm0, va0)
    vm = np.where(case.active, vm, 0.0)
    va = np.where(case.active, va, 0.0)
    sol = PowerFlowSolution(vm=vm, va=va, converged=ok, iterations=it, max_mismatch=mis, case=case)
    if not ok:
        return sol
    v = vm * np.exp(1j * va)
    base = net.base_mva
    yff, yft, ytf, ytt = branch_admittances(net, branch_in)
    vf, vt = v[net.f_idx], v[net.t_idx]
    sol.s_from = vf * np.conj(yff * vf + yft * vt) * base
    sol.s_to = vt * np.conj(ytf * vf + ytt * vt) * base
    _add_line_end_shunts(net, sol, case, vm)
    sol.gen_p, sol.gen_q = generator_outputs(net, case, v, gen_in, gen_p_mw, slack_gens)
    return sol


def _add_line_end_shunts(net, sol, case, vm):
    """Reactors mounted at a line extremity are metered with that line end."""
    for k, sh in enumerate(net.shunts):
        if sh.branch is None:
            continue
        br = net.branch_index[sh.branch]
        b = net.shunt_bus_idx[k]
        # shunt conductance sits in ybus only while in service; mirror that here
        if case.shunt_in is not None and not case.shunt_in[k]:
            continue
        absorbed = -1j * sh.q_mvar * vm[b] ** 2
        if sh.end == "from":
            sol.s_from[br] += absorbed
        else:
            sol.s_to[br] += absorbed


def generator_outputs(net, case, v, gen_in, gen_p_mw, slack_gens):
    """Split bus injections back onto units.

    Reactive output at a bus is shared in proportion to each unit's Q range;
    the slack unit takes whatever active power the other units at its bus do not.
    """
    base = net.base_mva
    s_bus = v * np.conj(case.ybus @ v)
    # add back load so that s_bus + load is generation at the bus
    p_gen_bus = (s_bus.real - (case.p_spec - _sched_gen(net, gen_in, gen_p_mw, slack_gens))) * base
    q_gen_bus = (s_bus.imag - case.q_spec) * base
    gb = net.gen_bus_idx
    gen_p = np.where(gen_in, gen_p_mw, 0.0).astype(float)
    gen_q = np.zeros(net.n_gen)
    rng = np.where(gen_in, np.maximum(net.gen_q_max - net.gen_q_min, 0.0), 0.0)
    qmin = np.where(gen_in, net.gen_q_min, 0.0)
    tot_rng = np.zeros(net.n_bus)
    tot_min = np.zeros(net.n_bus)
    cnt = np.zeros(net.n_bus)
    np.add.at(tot_rng, gb, rng)
    np.add.at(tot_min, gb, qmin)
    np.add.at(cnt, gb, gen_in.astype(float))
    has_rng = tot_rng[gb] > 0
    share = np.where(
        has_rng, rng / np.where(has_rng, tot_rng[gb], 1.0), gen_in / np.maximum(cnt[gb], 1.0)
    )
    # every unit sits at the same fraction of its own range
    gen_q = np.where(gen_in, qmin + share * (q_gen_bus[gb] - tot_min[gb]), 0.0)
    for g in np.flatnonzero(slack_gens & gen_in):
        b = gb[g]
        others = (gb == b) & gen_in & (np.arange(net.n_gen) != g)
        gen_p[g] = p_gen_bus[b] - gen_p[others].sum()
    return gen_p, gen_q


def _sched_gen(net, gen_in, gen_p_mw, slack_gens):
    """Scheduled generation per bus (pu), slack units excluded."""
    out = np.zeros(net.n_bus)
    mask = gen_in & ~slack_gens
    np.add.at(out, net.gen_bus_idx[mask], gen_p_mw[mask] / net.base_mva)
    return out


def make_case(
    net: Network,
    branch_in: np.ndarray,
    gen_in: np.ndarray,
    shunt_in: np.ndarray,
    p_load_mw: np.ndarray,
    q_load_mvar: np.ndarray,
    gen_p_mw: np.ndarray,
    slack_gens: np.ndarray,
    active: np.ndarray,
    labels: np.ndarray,
) -> PowerFlowCase:
    """Assemble a :class:`PowerFlowCase`; each energized island must hold exactly one slack unit."""
    base = net.base_mva
    ybus = build_ybus(net, branch_in, shunt_in)
    p_spec = _sched_gen(net, gen_in, gen_p_mw, slack_gens) - p_load_mw / base
    q_spec = -q_load_mvar / base
    p_spec = np.where(active, p_spec, 0.0)
    q_spec = np.where(active, q_spec, 0.0)
    gb = net.gen_bus_idx
    v_set = np.ones(net.n_bus)
    v_set[gb[gen_in]] = net.gen_v_set[gen_in]
    ref = np.unique(gb[slack_gens & gen_in])
    is_pv = np.zeros(net.n_bus, bool)
    is_pv[gb[gen_in]] = True
    is_pv &= active
    is_pv[ref] = False
    pv = np.flatnonzero(is_pv)
    is_pq = active & ~is_pv
    is_pq[ref] = False
    pq = np.flatnonzero(is_pq)
    return PowerFlowCase(ybus, p_spec, q_spec, ref, pv, pq, v_set, active.copy(), labels,
                         np.asarray(shunt_in, bool).copy())


# ---------------------------------------------------------------------------
# Voltage stability
# ---------------------------------------------------------------------------

@dataclass
class ReducedJacobian:
    matrix: np.ndarray
    bus_idx: np.ndarray  # network bus indices of the PQ buses, in matrix order


def reduced_jacobian(sol: PowerFlowSolution, buses: np.ndarray | None = None) -> ReducedJacobian:
    """Eliminate angles at constant P: J_R = J_QV - J_Qθ J_Pθ⁻¹ J_PV.

    ``buses`` restricts the computation to a set of bus indices (one island);
    by default the largest energized island is used.
    """
    case = sol.case
    if buses is None:
        buses = largest_island(case)
    keep = np.zeros(len(sol.vm), bool)
    keep[buses] = True
    pv = case.pv[keep[case.pv]]
    pq = case.pq[keep[case.pq]]
    pvpq = np.concatenate([pv, pq])
    ds_dva, ds_dvm = dsbus_dv(case.ybus, sol.v)
    j_pt = ds_dva.real[np.ix_(pvpq, pvpq)]
    j_pv = ds_dvm.real[np.ix_(pvpq, pq)]
    j_qt = ds_dva.imag[np.ix_(pq, pvpq)]
    j_qv = ds_dvm.imag[np.ix_(pq, pq)]
    jr = j_qv - j_qt @ np.linalg.solve(j_pt, j_pv)
    return ReducedJacobian(jr, pq)


def largest_island(case: PowerFlowCase) -> np.ndarray:
    labels = case.island[case.active]
    if labels.size == 0:
        return np.zeros(0, dtype=np.int64)
    vals, counts = np.unique(labels, return_counts=True)
    # ties go to the lowest label, which is deterministic
    best = vals[np.argmax(counts)]
    return np.flatnonzero(case.active & (case.island == best))


def vsi_from_matrix(jr: np.ndarray) -> float:
    """min_i det(J)/adj(J)_ii, evaluated as min_i 1/(J⁻¹)_ii; 0 when singular."""
    if jr.size == 0:
        return float("inf")
    try:
        inv = np.linalg.inv(jr)
    except np.linalg.LinAlgError:
        return 0.0
    d = np.diag(inv)
    if not np.all(np.isfinite(d)):
        return 0.0
    with np.errstate(divide="ignore"):
        ratios = np.where(d != 0.0, 1.0 / d, np.inf)
    return float(np.min(ratios))


def compute_vsi(sol: PowerFlowSolution) -> float:
    if not sol.converged:
        return 0.0
    try:
        jr = reduced_jacobian(sol)
    except np.linalg.LinAlgError:
        return 0.0
    return vsi_from_matrix(jr.matrix)


def branch_loading_ratio(flow_mva: float, rating: float) -> float:
    if rating <= 0.0:
        return float("inf")
    return flow_mva / rating
