#!/usr/bin/env python3
"""Generate the bundled three-area RTS-96 case (src/thermocascade/data/rts96.json).

Sources: IEEE RTS-96 single-area template (branch impedances as published
with RTS-GMLC, generator fleet of the RTS-24 area), the five inter-area ties
plus the 323-325 link, and a synthetic geographic layout.

Layout: each area is a rectangular tile; area 1 at the origin, area 2 to its
east, area 3 to its north. Inside a tile every bus sits on the grid position
listed in TEMPLATE_XY (x east, y north, in grid units). One grid unit is
LON_PER_UNIT degrees of longitude and LAT_PER_UNIT degrees of latitude.

Ratings follow the RTS continuous ratings, except the x08-x09 / x08-x10
lines (190 MVA) and the x06-x10 cable (180 MVA). The 100 MVAr reactor at
x06 is split into two 50 MVAr reactors at the ends of the x06-x10 cable
that drop out with it.

Base dispatch follows the RTS merit order: hydro, nuclear and coal units run
at full output, oil and combustion-turbine units sit at their minimum stable
output, and the U197 oil units at bus x13 close the gap to the system load.
The slack unit at bus 113 covers the losses.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

ORIGIN_LAT = 40.0
ORIGIN_LON = -90.0
LAT_PER_UNIT = 0.1
LON_PER_UNIT = 0.12
# tile offsets in grid units (x, y)
AREA_OFFSET = {1: (0.0, 0.0), 2: (4.5, 0.0), 3: (0.0, 8.0)}

TEMPLATE_XY = {
    1: (0.0, 0.0), 2: (1.5, 0.0), 7: (3.5, 0.0),
    4: (1.0, 1.0), 5: (2.0, 1.0), 8: (3.5, 1.0),
    3: (0.0, 2.0), 9: (1.5, 2.0), 10: (2.5, 2.0), 6: (3.5, 2.0),
    24: (0.0, 3.0), 11: (1.5, 3.0), 12: (2.5, 3.0),
    15: (0.0, 4.0), 14: (1.0, 4.0), 13: (2.5, 4.0), 23: (3.5, 4.0),
    16: (1.0, 5.0), 19: (2.0, 5.0), 20: (3.0, 5.0),
    18: (0.5, 6.0), 17: (1.5, 6.0),
    21: (0.0, 7.0), 22: (2.5, 7.0),
}
BUS_325_XY = (3.5, 3.0)  # area 3, beside 323

# bus: (P MW, Q MVAr, kV)
TEMPLATE_BUS = {
    1: (108, 22, 138), 2: (97, 20, 138), 3: (180, 37, 138), 4: (74, 15, 138),
    5: (71, 14, 138), 6: (136, 28, 138), 7: (125, 25, 138), 8: (171, 35, 138),
    9: (175, 36, 138), 10: (195, 40, 138), 11: (0, 0, 230), 12: (0, 0, 230),
    13: (265, 54, 230), 14: (194, 39, 230), 15: (317, 64, 230), 16: (100, 20, 230),
    17: (0, 0, 230), 18: (333, 68, 230), 19: (181, 37, 230), 20: (128, 26, 230),
    21: (0, 0, 230), 22: (0, 0, 230), 23: (0, 0, 230), 24: (0, 0, 230),
}

# from, to, r, x, b, rating
TEMPLATE_BRANCH = [
    (1, 2, 0.003, 0.014, 0.461, 175), (1, 3, 0.055, 0.211, 0.057, 175),
    (1, 5, 0.022, 0.085, 0.023, 175), (2, 4, 0.033, 0.127, 0.034, 175),
    (2, 6, 0.050, 0.192, 0.052, 175), (3, 9, 0.031, 0.119, 0.032, 175),
    (3, 24, 0.002, 0.084, 0.0, 400), (4, 9, 0.027, 0.104, 0.028, 175),
    (5, 10, 0.023, 0.088, 0.024, 175), (6, 10, 0.014, 0.061, 2.459, 180),
    (7, 8, 0.016, 0.061, 0.017, 175), (8, 9, 0.043, 0.165, 0.045, 190),
    (8, 10, 0.043, 0.165, 0.045, 190), (9, 11, 0.002, 0.084, 0.0, 400),
    (9, 12, 0.002, 0.084, 0.0, 400), (10, 11, 0.002, 0.084, 0.0, 400),
    (10, 12, 0.002, 0.084, 0.0, 400), (11, 13, 0.006, 0.048, 0.100, 500),
    (11, 14, 0.005, 0.042, 0.088, 500), (12, 13, 0.006, 0.048, 0.100, 500),
    (12, 23, 0.012, 0.097, 0.203, 500), (13, 23, 0.011, 0.087, 0.182, 500),
    (14, 16, 0.005, 0.059, 0.082, 500), (15, 16, 0.002, 0.017, 0.036, 500),
    (15, 21, 0.006, 0.049, 0.103, 500), (15, 21, 0.006, 0.049, 0.103, 500),
    (15, 24, 0.007, 0.052, 0.109, 500), (16, 17, 0.003, 0.026, 0.055, 500),
    (16, 19, 0.003, 0.023, 0.049, 500), (17, 18, 0.002, 0.014, 0.030, 500),
    (17, 22, 0.014, 0.105, 0.221, 500), (18, 21, 0.003, 0.026, 0.055, 500),
    (18, 21, 0.003, 0.026, 0.055, 500), (19, 20, 0.005, 0.040, 0.083, 500),
    (19, 20, 0.005, 0.040, 0.083, 500), (20, 23, 0.003, 0.022, 0.046, 500),
    (20, 23, 0.003, 0.022, 0.046, 500), (21, 22, 0.009, 0.068, 0.142, 500),
]

TIES = [
    (107, 203, 0.042, 0.161, 0.044, 175),
    (113, 215, 0.010, 0.075, 0.158, 500),
    (123, 217, 0.010, 0.074, 0.155, 500),
    (325, 121, 0.012, 0.097, 0.203, 500),
    (318, 223, 0.013, 0.104, 0.218, 500),
    (323, 325, 0.000, 0.009, 0.000, 722),
]

# bus: list of (count, p_max, q_min, q_max); voltage setpoints per bus
TEMPLATE_GEN = {
    1: [(2, 20, 0, 10), (2, 76, -25, 30)],
    2: [(2, 20, 0, 10), (2, 76, -25, 30)],
    7: [(3, 100, 0, 60)],
    13: [(3, 197, 0, 80)],
    14: [(1, 0, -50, 200)],  # synchronous condenser
    15: [(5, 12, 0, 6), (1, 155, -50, 80)],
    16: [(1, 155, -50, 80)],
    18: [(1, 400, -50, 200)],
    21: [(1, 400, -50, 200)],
    22: [(6, 50, -10, 16)],
    23: [(2, 155, -50, 80), (1, 350, -25, 150)],
}
TEMPLATE_VG = {
    1: 1.035, 2: 1.035, 7: 1.025, 13: 1.02, 14: 0.98, 15: 1.014,
    16: 1.017, 18: 1.05, 21: 1.05, 22: 1.05, 23: 1.05,
}
SLACK_BUS = 113

# p_max -> scheduled MW; None marks the balancing units
MERIT_DISPATCH = {
    0: 0.0, 50: 50.0, 400: 400.0, 350: 350.0, 155: 155.0, 76: 76.0,
    197: None, 100: 25.0, 20: 16.0, 12: 2.4,
}


def _dispatch(pmax: float, balancing: float) -> float:
    fixed = MERIT_DISPATCH[pmax]
    return balancing if fixed is None else fixed


def build() -> dict:
    buses = []
    kv = {}
    gen_buses = {a * 100 + b for a in (1, 2, 3) for b in TEMPLATE_GEN}
    for area in (1, 2, 3):
        ox, oy = AREA_OFFSET[area]
        ids = sorted(TEMPLATE_BUS)
        extra = [25] if area == 3 else []
        for local in ids + extra:
            bid = area * 100 + local
            if local == 25:
                p, q, k = 0, 0, 230
                x, y = BUS_325_XY
            else:
                p, q, k = TEMPLATE_BUS[local]
                x, y = TEMPLATE_XY[local]
            kind = "slack" if bid == SLACK_BUS else ("generator" if bid in gen_buses else "load")
            kv[bid] = k
            buses.append({
                "id": bid, "kind": kind, "base_kv": float(k),
                "lat": round(ORIGIN_LAT + (oy + y) * LAT_PER_UNIT, 6),
                "lon": round(ORIGIN_LON + (ox + x) * LON_PER_UNIT, 6),
                "p_mw": float(p), "q_mvar": float(q),
            })

    raw_branches = []
    for area in (1, 2, 3):
        for f, t, r, x, b, rate in TEMPLATE_BRANCH:
            raw_branches.append((area * 100 + f, area * 100 + t, r, x, b, rate))
    raw_branches.extend(TIES)
    branches = []
    for k, (f, t, r, x, b, rate) in enumerate(raw_branches, start=1):
        branches.append({
            "id": k, "from": f, "to": t, "r_pu": r, "x_pu": x, "b_pu": b,
            "rating_mva": float(rate), "rated_kv": float(max(kv[f], kv[t])),
            "rating_slope_ka_per_c": 0.02, "alpha_lower": 1.0,
        })

    units = []
    for area in (1, 2, 3):
        for local in sorted(TEMPLATE_GEN):
            for count, pmax, qmin, qmax in TEMPLATE_GEN[local]:
                for _ in range(count):
                    units.append((area * 100 + local, pmax, qmin, qmax, TEMPLATE_VG[local]))
    total_load = sum(bus["p_mw"] for bus in buses)
    fixed = sum(MERIT_DISPATCH[u[1]] for u in units if MERIT_DISPATCH[u[1]] is not None)
    n_balancing = sum(1 for u in units if MERIT_DISPATCH[u[1]] is None)
    balancing = (total_load - fixed) / n_balancing
    gens = []
    slack_done = False
    for k, (bus, pmax, qmin, qmax, vg) in enumerate(units, start=1):
        slack = False
        if bus == SLACK_BUS and not slack_done:
            slack = slack_done = True
        gens.append({
            "id": k, "bus": bus, "p_mw": round(_dispatch(pmax, balancing), 4), "p_max_mw": float(pmax),
            "q_min_mvar": float(qmin), "q_max_mvar": float(qmax), "v_pu": vg, "slack": slack,
        })

    shunts = []
    sid = 1
    for area in (1, 2, 3):
        f, t = area * 100 + 6, area * 100 + 10
        br = next(b for b in branches if b["from"] == f and b["to"] == t)
        for end in ("from", "to"):
            shunts.append({"id": sid, "attach_branch": br["id"], "end": end,
                           "q_mvar": -50.0, "auto_disconnect": True})
            sid += 1

    return {"name": "RTS-96 three-area", "base_mva": 100.0, "buses": buses,
            "branches": branches, "generators": gens, "shunts": shunts}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src" / "thermocascade" / "data" / "rts96.json"
    ap.add_argument("-o", "--output", type=Path, default=default)
    args = ap.parse_args()
    args.output.write_text(json.dumps(build(), indent=1) + "\n", encoding="utf-8")
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
