"""Experiment configuration: JSON schema, defaults and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .flowsim import AbsAlgorithm, ImplMode, SonConfig
from .layout import ScenarioConfig
from .son import StepSchedule
from .traffic import TrafficConfig

CASES = ("NoSON", "LBonly", "PF1", "PF2exact", "PF2approx")

# case -> (load balancing, ABS algorithm, scheduling mode)
CASE_TABLE = {
    "NoSON": (False, None, ImplMode.SHARED),
    "LBonly": (True, None, ImplMode.SHARED),
    "PF1": (True, AbsAlgorithm.PF1, ImplMode.PROTECTED),
    "PF2exact": (True, AbsAlgorithm.PF2_EXACT, ImplMode.SHARED),
    "PF2approx": (True, AbsAlgorithm.PF2, ImplMode.SHARED),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# key -> (default, kind, check); kind is used for type validation
_LAYOUT = {
    "intersite_distance": (500.0, "pos", None),
    "bandwidth": (10e6, "pos", None),
    "macro_tx_power_dbm": (46.0, "num", None),
    "small_tx_power_dbm": (30.0, "num", None),
    "small_per_sector": (4, "count", None),
    "small_edge_fraction": (0.7, "frac", None),
    "sectors_per_site": (3, "count", lambda v: v in (1, 3) or "must be 1 or 3"),
    "interferer_ring": (True, "bool", None),
    "beamwidth_deg": (70.0, "pos", None),
    "max_attenuation_db": (25.0, "nonneg", None),
    "macro_pathloss": ([128.1, 37.6], "pair", None),
    "small_pathloss": ([140.7, 36.7], "pair", None),
    "small_positions": (None, "positions", None),
}
_TRAFFIC = {
    "lambda": (14.0, "nonneg", None),
    "lambda_hotspot": (6.0, "nonneg", None),
    "mean_file_size_bits": (10e6, "pos", None),
}
_SON = {
    "lb_eps0": (0.3, "pos", None),
    "lb_tau": (30.0, "pos", None),
    "lb_schedule": ("harmonic", "str", lambda v: v in ("harmonic", "constant") or "must be harmonic or constant"),
    "cio_max_db": (12.0, "nonneg", None),
    "abs_eps0": (0.005, "pos", None),
    "abs_tau": (2.0, "pos", None),
    "abs_schedule": ("harmonic", "str", lambda v: v == "harmonic" or "ABS updates need the harmonic schedule"),
    "abs_update": ("sa", "str", lambda v: v in ("sa", "optimal") or "must be sa or optimal"),
    "optimal_counts": ("mean", "str", lambda v: v in ("mean", "instantaneous") or "must be mean or instantaneous"),
    "theta_min": (0.01, "frac", None),
    "theta_max": (0.95, "frac", None),
    "cluster_size": (3, "count", lambda v: v >= 1 or "must be at least 1"),
    "update_period_s": (1.0, "pos", None),
    "half_life_s": (30.0, "pos", None),
    "outer_macro_users": (5.0, "nonneg", None),
    "residual": (0.0, "unit", None),
    "interference": ("full", "str", lambda v: v in ("full", "load") or "must be full or load"),
    "load_estimator": ("busy", "str", lambda v: v in ("busy", "demand") or "must be busy or demand"),
    "overload_bound": (200.0, "pos", None),
    "theta_quantum": (None, "optpos", None),
}
_TOP = {"case", "seeds", "duration_s", "warmup_s", "output_dir", "layout", "traffic", "son"}


def _check_value(path, value, kind):
    def num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

    if kind == "num" and not num(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if kind == "pos" and not (num(value) and value > 0):
        raise ConfigError(path, f"must be a positive number, got {value!r}")
    if kind == "nonneg" and not (num(value) and value >= 0):
        raise ConfigError(path, f"must be a non-negative number, got {value!r}")
    if kind == "frac" and not (num(value) and 0 < value < 1):
        raise ConfigError(path, f"must lie strictly between 0 and 1, got {value!r}")
    if kind == "unit" and not (num(value) and 0 <= value <= 1):
        raise ConfigError(path, f"must lie in [0, 1], got {value!r}")
    if kind == "count" and not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
        raise ConfigError(path, f"must be a non-negative integer, got {value!r}")
    if kind == "bool" and not isinstance(value, bool):
        raise ConfigError(path, f"must be true or false, got {value!r}")
    if kind == "str" and not isinstance(value, str):
        raise ConfigError(path, f"must be a string, got {value!r}")
    if kind == "optpos" and value is not None and not (num(value) and value > 0):
        raise ConfigError(path, f"must be null or a positive number, got {value!r}")
    if kind == "pair" and not (isinstance(value, (list, tuple)) and len(value) == 2 and all(num(v) for v in value)):
        raise ConfigError(path, f"must be [intercept_db, slope_db], got {value!r}")
    if kind == "positions" and value is not None:
        if not isinstance(value, list) or not all(
                isinstance(p, (list, tuple)) and len(p) == 3 and num(p[0]) and num(p[1]) and isinstance(p[2], int)
                for p in value):
            raise ConfigError(path, "must be a list of [x_m, y_m, parent_sector]")


def _section(raw, schema, name):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be an object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", f"unknown key (valid: {', '.join(sorted(schema))})")
    out = {}
    for key, (default, kind, check) in schema.items():
        value = raw.get(key, default)
        path = f"{name}.{key}"
        _check_value(path, value, kind)
        if check is not None:
            verdict = check(value)
            if verdict is not True:
                raise ConfigError(path, verdict)
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    case: str = "NoSON"
    seeds: list = field(default_factory=lambda: [1])
    duration_s: float = 1800.0
    warmup_s: float = 300.0
    output_dir: str = "out"
    layout: dict = field(default_factory=dict)
    traffic: dict = field(default_factory=dict)
    son: dict = field(default_factory=dict)

    def scenario(self) -> ScenarioConfig:
        d = dict(self.layout)
        d["macro_pathloss"] = tuple(d["macro_pathloss"])
        d["small_pathloss"] = tuple(d["small_pathloss"])
        return ScenarioConfig(**d)

    def traffic_config(self) -> TrafficConfig:
        t = self.traffic
        return TrafficConfig(t["lambda"], t["lambda_hotspot"], t["mean_file_size_bits"])

    def son_config(self) -> SonConfig:
        s = self.son
        lb, alg, mode = CASE_TABLE[self.case]
        return SonConfig(
            impl_mode=mode,
            lb_enabled=lb,
            lb_schedule=StepSchedule(s["lb_schedule"], s["lb_eps0"], s["lb_tau"]),
            cio_max=s["cio_max_db"],
            abs_algorithm=alg,
            abs_update=s["abs_update"],
            optimal_counts=s["optimal_counts"],
            schedule=StepSchedule(s["abs_schedule"], s["abs_eps0"], s["abs_tau"]),
            theta_min=s["theta_min"],
            theta_max=s["theta_max"],
            cluster_size=s["cluster_size"],
            update_period=s["update_period_s"],
            half_life=s["half_life_s"],
            outer_macro_users=s["outer_macro_users"],
            residual=s["residual"],
            interference=s["interference"],
            load_estimator=s["load_estimator"],
            overload_bound=s["overload_bound"],
            theta_quantum=s["theta_quantum"],
        )

    def to_dict(self) -> dict:
        return {"case": self.case, "seeds": list(self.seeds), "duration_s": self.duration_s,
                "warmup_s": self.warmup_s, "output_dir": self.output_dir, "layout": dict(self.layout),
                "traffic": dict(self.traffic), "son": dict(self.son)}


def validate_config(raw: dict | None) -> ExperimentConfig:
    """Fill defaults and check every field; errors name the offending key path."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("", "configuration must be a JSON object")
    unknown = sorted(set(raw) - _TOP)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key (valid: {', '.join(sorted(_TOP))})")
    case = raw.get("case", "NoSON")
    if case not in CASES:
        raise ConfigError("case", f"unknown case {case!r}; valid cases: {', '.join(CASES)}")
    seeds = raw.get("seeds", [1])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "must be a non-empty list of integers")
    for i, sd in enumerate(seeds):
        if not isinstance(sd, int) or isinstance(sd, bool) or sd < 0:
            raise ConfigError(f"seeds[{i}]", f"must be a non-negative integer, got {sd!r}")
    duration = raw.get("duration_s", 1800.0)
    warmup = raw.get("warmup_s", 300.0)
    _check_value("duration_s", duration, "pos")
    _check_value("warmup_s", warmup, "nonneg")
    if duration <= warmup:
        raise ConfigError("duration_s", f"must exceed warmup_s ({warmup})")
    out = raw.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "must be a non-empty path string")
    son = _section(raw.get("son"), _SON, "son")
    if son["theta_min"] > son["theta_max"]:
        raise ConfigError("son.theta_min", "must not exceed son.theta_max")
    return ExperimentConfig(
        case=case,
        seeds=list(seeds),
        duration_s=float(duration),
        warmup_s=float(warmup),
        output_dir=out,
        layout=_section(raw.get("layout"), _LAYOUT, "layout"),
        traffic=_section(raw.get("traffic"), _TRAFFIC, "traffic"),
        son=son,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def dump_defaults(path) -> None:
    Path(path).write_text(json.dumps(validate_config({}).to_dict(), indent=1) + "\n")
