"""Run configuration: flat JSON keys with defaults, validation and a stable digest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .control import RATING_BASES, RedispatchParams, SheddingParams
from .outage import GenTripParams, LineTripParams
from .weather import DIRECTIONS


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


def _cal(percent: float, seconds: float) -> dict:
    return {"percent": percent, "seconds": seconds}


@dataclass(frozen=True)
class RunConfig:
    # disturbance
    center_bus: int | None = None
    gamma: float = 0.07
    delta_t: float = 10.0
    scenario_direction: str = "heat"
    # weather response
    load_curve_anchor_ratio: float = 1.5183
    pf_slope: float = 0.001
    rating_slope_ka_per_c: float = 0.02
    alpha_lower: float = 1.0
    # outage model
    p1: float = 0.001
    p2: float = 0.3
    p3: float = 1.0
    p4: float = 0.001
    p5: float = 0.3
    p6: float = 1.0
    epsilon: float = 0.01
    K: float = 1.5
    k_q_factor: float = 1.5
    line_overload_calibration: dict = field(default_factory=lambda: _cal(50.0, 20.0))
    gen_overload_calibration: dict = field(default_factory=lambda: _cal(20.0, 1800.0))
    # protection and control
    v_threshold: float = 0.9
    k_shed_mw_per_pu: float = 600.0
    shed_delay_s: float = 3.0
    shed_deadband_pu: float = 0.002
    redispatch: bool = True
    eta: float = 1.05
    redispatch_duration_s: float = 60.0
    max_rounds: int = 10
    rating_basis: str = "initial"
    # engine
    seed: int = 0
    vsi_threshold: float = 0.0
    max_iterations: int = 5000

    def __post_init__(self) -> None:
        validate(self)

    # parameter blocks -----------------------------------------------------
    @property
    def line_params(self) -> LineTripParams:
        cal = self.line_overload_calibration
        return LineTripParams(self.p1, self.p2, self.p3, self.epsilon, self.K,
                              float(cal["percent"]), float(cal["seconds"]))

    @property
    def gen_params(self) -> GenTripParams:
        cal = self.gen_overload_calibration
        return GenTripParams(self.p4, self.p5, self.p6, self.epsilon, self.k_q_factor,
                             overload_percent=float(cal["percent"]),
                             overload_seconds=float(cal["seconds"]))

    @property
    def shed_params(self) -> SheddingParams:
        return SheddingParams(self.v_threshold, self.k_shed_mw_per_pu, self.shed_delay_s, self.shed_deadband_pu)

    @property
    def redispatch_params(self) -> RedispatchParams:
        return RedispatchParams(self.eta, self.redispatch_duration_s, self.max_rounds, self.rating_basis)

    def with_(self, **changes: Any) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def validate(cfg: RunConfig) -> None:
    def need(ok: bool, key: str, msg: str) -> None:
        if not ok:
            raise ConfigError(key, msg)

    need(0.0 < cfg.gamma <= 1.0, "gamma", "must lie in (0, 1]")
    need(cfg.scenario_direction in DIRECTIONS, "scenario_direction", f"must be one of {DIRECTIONS}")
    if cfg.scenario_direction == "heat":
        need(cfg.delta_t >= 0, "delta_t", "heat scenarios need delta_t >= 0")
    else:
        need(cfg.delta_t <= 0, "delta_t", "cool scenarios need delta_t <= 0")
    need(cfg.load_curve_anchor_ratio > 1.0, "load_curve_anchor_ratio", "must exceed 1")
    need(cfg.pf_slope >= 0, "pf_slope", "must be >= 0")
    need(cfg.rating_slope_ka_per_c > 0, "rating_slope_ka_per_c", "must be > 0")
    need(0.0 < cfg.alpha_lower <= 1.0, "alpha_lower", "must lie in (0, 1]")
    need(cfg.rating_basis in RATING_BASES, "rating_basis", f"must be one of {RATING_BASES}")
    need(int(cfg.max_rounds) >= 1, "max_rounds", "must be >= 1")
    need(cfg.eta >= 1.0, "eta", "must be >= 1")
    need(cfg.max_iterations >= 1, "max_iterations", "must be >= 1")
    need(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed", "must be a nonnegative integer")
    for key in ("line_overload_calibration", "gen_overload_calibration"):
        cal = getattr(cfg, key)
        need(isinstance(cal, dict) and set(cal) == {"percent", "seconds"}, key,
             "must be an object with 'percent' and 'seconds'")
        need(float(cal["percent"]) > 0 and float(cal["seconds"]) > 0, key, "values must be positive")
    for key, build in (("p1", "line_params"), ("p4", "gen_params"), ("v_threshold", "shed_params"),
                       ("eta", "redispatch_params")):
        try:
            getattr(cfg, build)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None


def config_from_dict(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``doc`` onto ``base`` (defaults when omitted); unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    types = {f.name: f.type for f in fields(RunConfig)}
    clean: dict[str, Any] = {}
    for key, val in doc.items():
        clean[key] = _coerce(key, val, types[key])
    base = base or RunConfig()
    try:
        return replace(base, **clean)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("<root>", str(exc)) from None


def _coerce(key: str, val: Any, typ: str) -> Any:
    try:
        if typ == "float":
            if isinstance(val, bool):
                raise TypeError
            return float(val)
        if typ == "int":
            if isinstance(val, bool) or (isinstance(val, float) and not val.is_integer()):
                raise TypeError
            return int(val)
        if typ == "bool":
            if not isinstance(val, bool):
                raise TypeError
            return val
        if typ == "int | None":
            return None if val is None else _coerce(key, val, "int")
        if typ == "str":
            if not isinstance(val, str):
                raise TypeError
            return val
        if typ == "dict":
            if not isinstance(val, dict):
                raise TypeError
            return {k: float(v) for k, v in val.items()}
    except (TypeError, ValueError):
        raise ConfigError(key, f"invalid value {val!r} (expected {typ})") from None
    return val


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return config_from_dict(doc, base)
