"""Grid data model: buses, branches, generators, shunts and JSON case files.

Case files carry physical units (MW, MVAr, kV); per-unit arrays on the
100 MVA system base are derived on the immutable :class:`Network`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BASE_MVA = 100.0

BUS_KINDS = ("load", "generator", "slack")


class CaseError(ValueError):
    """Raised for malformed or inconsistent case documents."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    base_kv: float
    lat: float
    lon: float
    p_load_nominal: float = 0.0
    q_load_nominal: float = 0.0

    @property
    def pf_nominal(self) -> float:
        s = math.hypot(self.p_load_nominal, self.q_load_nominal)
        if s == 0.0:
            return 1.0
        return abs(self.p_load_nominal) / s


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    rating_initial: float
    rated_kv: float
    rating_slope: float = 0.02
    alpha_lower: float = 1.0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_setpoint: float
    p_max: float
    q_min: float
    q_max: float
    v_setpoint: float = 1.0
    is_slack: bool = False

    @property
    def p_nominal(self) -> float:
        return self.p_setpoint


@dataclass(frozen=True)
class Shunt:
    """Fixed reactive element; ``q_mvar`` is the injection at 1.0 pu (reactors < 0)."""

    id: int
    q_mvar: float
    bus: int | None = None
    branch: int | None = None
    end: str | None = None
    auto_disconnect: bool = False


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    shunts: tuple[Shunt, ...] = ()
    base_mva: float = BASE_MVA
    name: str = ""

    # -- index maps -------------------------------------------------------
    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        return {br.id: i for i, br in enumerate(self.branches)}

    @cached_property
    def gen_index(self) -> dict[int, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @cached_property
    def slack_bus(self) -> int:
        for g in self.generators:
            if g.is_slack:
                return g.bus
        raise CaseError("network has no slack generator")

    # -- array views ------------------------------------------------------
    @cached_property
    def f_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.from_bus] for br in self.branches], dtype=np.int64)

    @cached_property
    def t_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.to_bus] for br in self.branches], dtype=np.int64)

    @cached_property
    def gen_bus_idx(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=np.int64)

    @cached_property
    def p_load_mw(self) -> np.ndarray:
        return np.array([b.p_load_nominal for b in self.buses], dtype=float)

    @cached_property
    def q_load_mvar(self) -> np.ndarray:
        return np.array([b.q_load_nominal for b in self.buses], dtype=float)

    @cached_property
    def p_load_pu(self) -> np.ndarray:
        return self.p_load_mw / self.base_mva

    @cached_property
    def q_load_pu(self) -> np.ndarray:
        return self.q_load_mvar / self.base_mva

    @cached_property
    def gen_p_mw(self) -> np.ndarray:
        return np.array([g.p_setpoint for g in self.generators], dtype=float)

    @cached_property
    def gen_p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators], dtype=float)

    @cached_property
    def gen_q_min(self) -> np.ndarray:
        return np.array([g.q_min for g in self.generators], dtype=float)

    @cached_property
    def gen_q_max(self) -> np.ndarray:
        return np.array([g.q_max for g in self.generators], dtype=float)

    @cached_property
    def gen_v_set(self) -> np.ndarray:
        return np.array([g.v_setpoint for g in self.generators], dtype=float)

    @cached_property
    def rating_initial(self) -> np.ndarray:
        return np.array([br.rating_initial for br in self.branches], dtype=float)

    @cached_property
    def rated_kv(self) -> np.ndarray:
        return np.array([br.rated_kv for br in self.branches], dtype=float)

    @cached_property
    def rating_slope(self) -> np.ndarray:
        return np.array([br.rating_slope for br in self.branches], dtype=float)

    @cached_property
    def lat(self) -> np.ndarray:
        return np.array([b.lat for b in self.buses], dtype=float)

    @cached_property
    def lon(self) -> np.ndarray:
        return np.array([b.lon for b in self.buses], dtype=float)

    @cached_property
    def load_bus_ids(self) -> tuple[int, ...]:
        """Buses carrying a nonzero nominal active load."""
        return tuple(b.id for b in self.buses if b.p_load_nominal > 0.0)

    @cached_property
    def shunt_bus_idx(self) -> np.ndarray:
        """Bus index each shunt injects into (branch-end shunts map to that end's bus)."""
        out = []
        for sh in self.shunts:
            if sh.bus is not None:
                out.append(self.bus_index[sh.bus])
            else:
                br = self.branches[self.branch_index[sh.branch]]
                out.append(self.bus_index[br.from_bus if sh.end == "from" else br.to_bus])
        return np.array(out, dtype=np.int64)

    @cached_property
    def shunt_q_pu(self) -> np.ndarray:
        return np.array([sh.q_mvar for sh in self.shunts], dtype=float) / self.base_mva

    @cached_property
    def coupled_shunts(self) -> dict[int, tuple[int, ...]]:
        """Branch index -> shunt indices that drop out with that branch."""
        out: dict[int, list[int]] = {}
        for k, sh in enumerate(self.shunts):
            if sh.branch is not None and sh.auto_disconnect:
                out.setdefault(self.branch_index[sh.branch], []).append(k)
        return {k: tuple(v) for k, v in out.items()}

    def total_nominal_load(self) -> float:
        return float(self.p_load_mw.sum())


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

def _req(obj: dict, key: str, what: str) -> Any:
    if key not in obj:
        raise CaseError(f"{what}: missing key {key!r}")
    return obj[key]


def _num(obj: dict, key: str, what: str, default: float | None = None) -> float:
    if key not in obj:
        if default is None:
            raise CaseError(f"{what}: missing key {key!r}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseError(f"{what}: {key!r} must be a number, got {val!r}")
    if not math.isfinite(val):
        raise CaseError(f"{what}: {key!r} must be finite")
    return float(val)


def network_from_dict(doc: dict) -> Network:
    """Build and validate a :class:`Network` from a decoded case document."""
    if not isinstance(doc, dict):
        raise CaseError("case document must be a JSON object")
    base = _num(doc, "base_mva", "case", BASE_MVA)
    if base != BASE_MVA:
        raise CaseError(f"case: base_mva must be {BASE_MVA:g}, got {base:g}")

    buses = []
    for raw in _req(doc, "buses", "case"):
        bid = int(_req(raw, "id", "bus"))
        what = f"bus {bid}"
        kind = raw.get("kind", "load")
        if kind not in BUS_KINDS:
            raise CaseError(f"{what}: unknown kind {kind!r}")
        bus = Bus(
            id=bid,
            kind=kind,
            base_kv=_num(raw, "base_kv", what),
            lat=_num(raw, "lat", what),
            lon=_num(raw, "lon", what),
            p_load_nominal=_num(raw, "p_mw", what, 0.0),
            q_load_nominal=_num(raw, "q_mvar", what, 0.0),
        )
        if not -90.0 <= bus.lat <= 90.0:
            raise CaseError(f"{what}: latitude {bus.lat} out of range")
        if not -180.0 <= bus.lon <= 180.0:
            raise CaseError(f"{what}: longitude {bus.lon} out of range")
        if bus.base_kv <= 0:
            raise CaseError(f"{what}: base_kv must be positive")
        buses.append(bus)
    _check_unique((b.id for b in buses), "bus")
    bus_ids = {b.id for b in buses}

    branches = []
    for raw in _req(doc, "branches", "case"):
        brid = int(_req(raw, "id", "branch"))
        what = f"branch {brid}"
        br = Branch(
            id=brid,
            from_bus=int(_req(raw, "from", what)),
            to_bus=int(_req(raw, "to", what)),
            r=_num(raw, "r_pu", what, 0.0),
            x=_num(raw, "x_pu", what),
            b=_num(raw, "b_pu", what, 0.0),
            rating_initial=_num(raw, "rating_mva", what),
            rated_kv=_num(raw, "rated_kv", what),
            rating_slope=_num(raw, "rating_slope_ka_per_c", what, 0.02),
            alpha_lower=_num(raw, "alpha_lower", what, 1.0),
        )
        for end in (br.from_bus, br.to_bus):
            if end not in bus_ids:
                raise CaseError(f"{what}: references unknown bus {end}")
        if br.from_bus == br.to_bus:
            raise CaseError(f"{what}: from_bus equals to_bus")
        if br.x == 0.0:
            raise CaseError(f"{what}: reactance must be nonzero")
        if br.rating_initial <= 0.0:
            raise CaseError(f"{what}: rating_mva must be positive")
        if not 0.0 < br.alpha_lower <= 1.0:
            raise CaseError(f"{what}: alpha_lower must lie in (0, 1]")
        branches.append(br)
    _check_unique((b.id for b in branches), "branch")
    branch_ids = {b.id for b in branches}

    gens = []
    for raw in _req(doc, "generators", "case"):
        gid = int(_req(raw, "id", "generator"))
        what = f"generator {gid}"
        g = Generator(
            id=gid,
            bus=int(_req(raw, "bus", what)),
            p_setpoint=_num(raw, "p_mw", what),
            p_max=_num(raw, "p_max_mw", what),
            q_min=_num(raw, "q_min_mvar", what),
            q_max=_num(raw, "q_max_mvar", what),
            v_setpoint=_num(raw, "v_pu", what, 1.0),
            is_slack=bool(raw.get("slack", False)),
        )
        if g.bus not in bus_ids:
            raise CaseError(f"{what}: references unknown bus {g.bus}")
        if g.q_min > g.q_max:
            raise CaseError(f"{what}: q_min exceeds q_max")
        if not (0.0 <= g.p_setpoint <= g.p_max or g.is_slack):
            raise CaseError(f"{what}: p_mw outside [0, p_max_mw]")
        if g.v_setpoint <= 0:
            raise CaseError(f"{what}: v_pu must be positive")
        gens.append(g)
    _check_unique((g.id for g in gens), "generator")
    if sum(g.is_slack for g in gens) != 1:
        raise CaseError("case: exactly one generator must be flagged slack")
    by_bus: dict[int, set[float]] = {}
    for g in gens:
        by_bus.setdefault(g.bus, set()).add(g.v_setpoint)
    for bid, vs in by_bus.items():
        if len(vs) > 1:
            raise CaseError(f"bus {bid}: generators disagree on voltage setpoint")

    shunts = []
    for raw in doc.get("shunts", []):
        sid = int(_req(raw, "id", "shunt"))
        what = f"shunt {sid}"
        q = _num(raw, "q_mvar", what)
        auto = bool(raw.get("auto_disconnect", False))
        if "attach_bus" in raw:
            bus = int(raw["attach_bus"])
            if bus not in bus_ids:
                raise CaseError(f"{what}: references unknown bus {bus}")
            shunts.append(Shunt(id=sid, q_mvar=q, bus=bus, auto_disconnect=auto))
        elif "attach_branch" in raw:
            brid = int(raw["attach_branch"])
            end = raw.get("end")
            if brid not in branch_ids:
                raise CaseError(f"{what}: references unknown branch {brid}")
            if end not in ("from", "to"):
                raise CaseError(f"{what}: end must be 'from' or 'to'")
            shunts.append(Shunt(id=sid, q_mvar=q, branch=brid, end=end, auto_disconnect=auto))
        else:
            raise CaseError(f"{what}: needs attach_bus or attach_branch")
    _check_unique((s.id for s in shunts), "shunt")

    net = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        shunts=tuple(shunts),
        base_mva=base,
        name=str(doc.get("name", "")),
    )
    n_islands, _ = _components(net, np.ones(net.n_branch, dtype=bool))
    if n_islands != 1:
        raise CaseError(f"case: network is not connected ({n_islands} components)")
    return net


def _check_unique(ids: Iterable[int], what: str) -> None:
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise CaseError(f"duplicate {what} id {i}")
        seen.add(i)


def parse_case(path: str | Path) -> Network:
    """Read a JSON case file into a validated :class:`Network`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: invalid JSON ({exc})") from exc
    return network_from_dict(doc)


def network_to_dict(net: Network) -> dict:
    doc: dict[str, Any] = {"base_mva": net.base_mva}
    if net.name:
        doc["name"] = net.name
    doc["buses"] = [
        {"id": b.id, "kind": b.kind, "base_kv": b.base_kv, "lat": b.lat, "lon": b.lon,
         "p_mw": b.p_load_nominal, "q_mvar": b.q_load_nominal}
        for b in net.buses
    ]
    doc["branches"] = [
        {"id": br.id, "from": br.from_bus, "to": br.to_bus, "r_pu": br.r, "x_pu": br.x,
         "b_pu": br.b, "rating_mva": br.rating_initial, "rated_kv": br.rated_kv,
         "rating_slope_ka_per_c": br.rating_slope, "alpha_lower": br.alpha_lower}
        for br in net.branches
    ]
    doc["generators"] = [
        {"id": g.id, "bus": g.bus, "p_mw": g.p_setpoint, "p_max_mw": g.p_max,
         "q_min_mvar": g.q_min, "q_max_mvar": g.q_max, "v_pu": g.v_setpoint, "slack": g.is_slack}
        for g in net.generators
    ]
    shunts = []
    for sh in net.shunts:
        row: dict[str, Any] = {"id": sh.id}
        if sh.bus is not None:
            row["attach_bus"] = sh.bus
        else:
            row["attach_branch"] = sh.branch
            row["end"] = sh.end
        row["q_mvar"] = sh.q_mvar
        row["auto_disconnect"] = sh.auto_disconnect
        shunts.append(row)
    doc["shunts"] = shunts
    return doc


def write_case(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n", encoding="utf-8")


def bundled_case_path(name: str = "rts96") -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


def load_rts96() -> Network:
    """The bundled three-area RTS-96 case (73 buses, 120 branches)."""
    return parse_case(bundled_case_path("rts96"))


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------

def _components(net: Network, branch_in: np.ndarray) -> tuple[int, np.ndarray]:
    on = np.asarray(branch_in, dtype=bool)
    n = net.n_bus
    adj = coo_matrix(
        (np.ones(int(on.sum())), (net.f_idx[on], net.t_idx[on])), shape=(n, n)
    )
    return connected_components(adj, directed=False)


@dataclass(frozen=True)
class Island:
    buses: frozenset[int]
    energized: bool


def find_islands(
    net: Network,
    branch_in: Sequence[bool] | np.ndarray,
    gen_in: Sequence[bool] | np.ndarray | None = None,
) -> list[Island]:
    """Partition buses into connected components over in-service branches.

    An island is energized when it holds an in-service generator with
    positive active capacity. Islands are ordered by their smallest bus id.
    """
    _, labels = _components(net, branch_in)
    if gen_in is None:
        gen_in = np.ones(net.n_gen, dtype=bool)
    gen_in = np.asarray(gen_in, dtype=bool)
    live = set(labels[net.gen_bus_idx[gen_in & (net.gen_p_max > 0)]].tolist())
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(net.buses[i].id)
    islands = [Island(frozenset(ids), lab in live) for lab, ids in groups.items()]
    islands.sort(key=lambda isl: min(isl.buses))
    return islands


def island_labels(net: Network, branch_in: np.ndarray) -> np.ndarray:
    return _components(net, branch_in)[1]
