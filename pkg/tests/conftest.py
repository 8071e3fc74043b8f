from __future__ import annotations

import warnings

import pytest

from thermocascade.grid import Network, load_rts96, network_from_dict


@pytest.fixture(scope="session")
def rts96() -> Network:
    return load_rts96()


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def bus(i, kind="load", p=0.0, q=0.0, lat=40.0, lon=-90.0, kv=138.0):
    return {"id": i, "kind": kind, "base_kv": kv, "lat": lat, "lon": lon, "p_mw": p, "q_mvar": q}


def line(i, f, t, x=0.1, r=0.0, b=0.0, rating=200.0, kv=138.0):
    return {"id": i, "from": f, "to": t, "r_pu": r, "x_pu": x, "b_pu": b, "rating_mva": rating,
            "rated_kv": kv}


def gen(i, at, p=0.0, pmax=500.0, qmin=-500.0, qmax=500.0, v=1.0, slack=False):
    return {"id": i, "bus": at, "p_mw": p, "p_max_mw": pmax, "q_min_mvar": qmin, "q_max_mvar": qmax,
            "v_pu": v, "slack": slack}


def two_bus_doc(load_mw=100.0, load_mvar=0.0, x=0.1) -> dict:
    return {
        "name": "two-bus",
        "base_mva": 100.0,
        "buses": [bus(1, "slack", lat=40.0, lon=-90.0), bus(2, "load", load_mw, load_mvar, lat=40.5, lon=-89.5)],
        "branches": [line(1, 1, 2, x=x)],
        "generators": [gen(1, 1, slack=True)],
        "shunts": [],
    }


@pytest.fixture
def two_bus() -> Network:
    return network_from_dict(two_bus_doc())


def triangle_doc() -> dict:
    return {
        "name": "triangle",
        "base_mva": 100.0,
        "buses": [bus(1, "slack", lat=40.0, lon=-90.0), bus(2, "generator", lat=40.0, lon=-89.0),
                  bus(3, "load", 50.0, 10.0, lat=41.0, lon=-89.5)],
        "branches": [line(1, 1, 2), line(2, 2, 3), line(3, 1, 3)],
        "generators": [gen(1, 1, slack=True), gen(2, 2, p=30.0, pmax=100.0)],
        "shunts": [],
    }


@pytest.fixture
def triangle() -> Network:
    return network_from_dict(triangle_doc())
