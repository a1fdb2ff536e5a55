"""Experiment configuration: JSON in, validated dataclasses out.

A config file is a JSON object with the top-level keys listed in
``TOP_LEVEL_KEYS``; every section is optional and falls back to the
defaults of the experiment ``kind``. Unknown keys are rejected with the
dotted path of the offending key.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ..channel import ChannelError, ChannelParams, ScenarioKind
from ..monitor import MonitorError, PipelineConfig
from ..protocol import Policy, ProtocolTiming
from ..sensor import (
    ACCURACY_C,
    BODY_C,
    DEFAULT_TAU_S,
    RESOLUTION_C,
    ROOM_C,
    WIRED_NOISE_C,
    WIRELESS_NOISE_C,
    SensorError,
    SensorSpec,
)


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


KINDS = ("stability", "wired", "linearity", "response", "agility", "connectivity", "scaling")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "S2"
    distance_m: float = 2.0
    speed_mps: float = 0.0


@dataclass(frozen=True)
class ChannelConfig:
    tx_power_dbm: float = 0.0
    ref_loss_db: float = 40.05
    exponent: float | None = None
    shadow_sigma_db: float | None = None
    sensitivity_dbm: float = -89.0
    cs_threshold_dbm: float = -75.0
    bitrate_bps: int = 250_000

    def params(self, scenario: str) -> ChannelParams:
        return ChannelParams.for_scenario(scenario, **dataclasses.asdict(self))


@dataclass(frozen=True)
class SensorConfig:
    accuracy: float = ACCURACY_C
    resolution: float = RESOLUTION_C
    noise_amp: float = WIRELESS_NOISE_C
    bias_fraction: float = 0.0
    tau: float = DEFAULT_TAU_S

    def spec(self) -> SensorSpec:
        return SensorSpec(self.accuracy, self.resolution, self.noise_amp, 0.0, self.tau)


@dataclass(frozen=True)
class ProtocolConfig:
    round_period: float = 1.0
    policy: str = "sequential"
    cs_delay: float = 0.001
    cs_retries: int = 3
    cs_backoff: float = 0.002
    poll_timeout: float = 0.020
    data_retries: int = 2
    ack_timeout: float = 0.003
    ack_retries: int = 1
    min_slot: float = 0.100

    def timing(self) -> ProtocolTiming:
        values = dataclasses.asdict(self)
        values.pop("policy")
        return ProtocolTiming(**values)


@dataclass(frozen=True)
class ThermometerConfig:
    id: int
    patient: str = ""
    distance_m: float | None = None


# kind-specific parameters


@dataclass(frozen=True)
class StabilityParams:
    body_c: float = BODY_C


@dataclass(frozen=True)
class WiredParams:
    body_c: float = BODY_C
    sample_period_s: float = 1.0


@dataclass(frozen=True)
class LinearityParams:
    setpoints_c: tuple[float, ...] = tuple(float(x) for x in range(30, 41))
    dwell_s: float = 30.0
    step_rate: float = 1.0


@dataclass(frozen=True)
class ResponseParams:
    start_c: float = 30.0
    segments: tuple[tuple[float, float], ...] = ((0.97, 15.0), (4.3, 13.0))
    hold_s: float = 32.0


@dataclass(frozen=True)
class AgilityParams:
    td_grid_s: tuple[float, ...] = tuple(float(x) for x in range(2, 19, 2))
    body_c: float = BODY_C
    room_c: float = ROOM_C
    rest_check_s: float = 1.0
    max_rest_s: float = 600.0
    mercury_dwell_s: float = 120.0


@dataclass(frozen=True)
class ConnectivityParams:
    scenarios: tuple[str, ...] = ("S1", "S2", "S3", "S4")
    distances_m: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0, 50.0)
    repeats: int = 5
    s3_speed_mps: float = 0.5
    body_c: float = BODY_C


@dataclass(frozen=True)
class ScalingParams:
    n_grid: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    rounds: int = 3
    distance_m: float = 5.0


PARAMS = {
    "stability": StabilityParams,
    "wired": WiredParams,
    "linearity": LinearityParams,
    "response": ResponseParams,
    "agility": AgilityParams,
    "connectivity": ConnectivityParams,
    "scaling": ScalingParams,
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "stability"
    seed: int = 1
    duration_s: float = 60.0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    thermometers: tuple[ThermometerConfig, ...] = ()
    params: Any = field(default_factory=StabilityParams)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, seed=int(seed))


TOP_LEVEL_KEYS = {f.name for f in dataclasses.fields(ExperimentSpec)}


def default_thermometers(n: int, distance: float | None = None) -> tuple[ThermometerConfig, ...]:
    # stand-ins for factory-programmed sensor serials
    return tuple(
        ThermometerConfig(0x5E1100000000 + i + 1, f"patient-{i + 1}", distance) for i in range(n)
    )


def default_spec(kind: str) -> ExperimentSpec:
    if kind not in KINDS:
        raise ValidationError(f"kind: unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    spec = ExperimentSpec(kind=kind, params=PARAMS[kind]())
    if kind == "stability":
        return replace(spec, thermometers=default_thermometers(2))
    if kind == "wired":
        return replace(
            spec,
            sensor=replace(spec.sensor, noise_amp=WIRED_NOISE_C),
            thermometers=default_thermometers(1),
        )
    if kind == "linearity":
        p = spec.params
        return replace(
            spec,
            duration_s=len(p.setpoints_c) * p.dwell_s,
            scenario=ScenarioConfig("S4", 2.0),
            thermometers=default_thermometers(1),
        )
    if kind == "response":
        # 10 Hz polling resolves the ramp transients
        return replace(
            spec,
            scenario=ScenarioConfig("S4", 2.0),
            protocol=replace(spec.protocol, round_period=0.1),
            thermometers=default_thermometers(1),
        )
    if kind == "agility":
        return replace(spec, thermometers=default_thermometers(1))
    if kind == "connectivity":
        return replace(spec, thermometers=default_thermometers(1))
    return replace(spec, scenario=ScenarioConfig("S4", 5.0))


# -- loading ---------------------------------------------------------------


def _overlay(obj, data: Any, path: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected an object")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key in data:
        if key not in names:
            raise ValidationError(f"{path}.{key}: unknown key")
    values = {}
    for key, value in data.items():
        current = getattr(obj, key)
        if isinstance(current, tuple) or key in ("segments",):
            if not isinstance(value, list):
                raise ValidationError(f"{path}.{key}: expected a list")
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(current, bool) or isinstance(value, bool):
            raise ValidationError(f"{path}.{key}: booleans are not accepted")
        elif isinstance(current, (int, float)) and not isinstance(value, (int, float)):
            if not (value is None and current is None):
                raise ValidationError(f"{path}.{key}: expected a number, got {value!r}")
        elif current is None and value is not None and not isinstance(value, (int, float)):
            raise ValidationError(f"{path}.{key}: expected a number or null, got {value!r}")
        elif isinstance(current, str) and not isinstance(value, str):
            raise ValidationError(f"{path}.{key}: expected a string, got {value!r}")
        if isinstance(current, int) and not isinstance(current, bool) and isinstance(value, float):
            if type(current) is int and not value.is_integer():
                raise ValidationError(f"{path}.{key}: expected an integer, got {value!r}")
            if type(current) is int:
                value = int(value)
        values[key] = value
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _parse_id(value: Any, path: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(f"{path}: expected an integer or hex string")
    if isinstance(value, int):
        node = value
    elif isinstance(value, str):
        try:
            node = int(value, 0)
        except ValueError:
            raise ValidationError(f"{path}: cannot parse identification code {value!r}") from None
    else:
        raise ValidationError(f"{path}: expected an integer or hex string")
    if not 0 < node < 2**64:
        raise ValidationError(f"{path}: identification code must be a nonzero 64-bit value")
    return node


def _thermometers(data: Any) -> tuple[ThermometerConfig, ...]:
    if not isinstance(data, list):
        raise ValidationError("thermometers: expected a list")
    out = []
    for i, entry in enumerate(data):
        path = f"thermometers[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError(f"{path}: expected an object")
        if "id" not in entry:
            raise ValidationError(f"{path}.id: missing")
        rest = {k: v for k, v in entry.items() if k != "id"}
        base = ThermometerConfig(_parse_id(entry["id"], f"{path}.id"), f"patient-{i + 1}", None)
        out.append(_overlay(base, rest, path))
    return tuple(out)


def spec_from_dict(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    for key in data:
        if key not in TOP_LEVEL_KEYS:
            raise ValidationError(f"{key}: unknown key")
    kind = data.get("kind", "stability")
    if not isinstance(kind, str):
        raise ValidationError("kind: expected a string")
    spec = default_spec(kind)
    values: dict[str, Any] = {}
    for key in ("seed", "duration_s"):
        if key in data:
            value = data[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{key}: expected a number")
            if key == "seed":
                if not float(value).is_integer() or not 0 <= value < 2**64:
                    raise ValidationError("seed: expected an unsigned 64-bit integer")
                value = int(value)
            values[key] = value
    for key in ("scenario", "channel", "sensor", "protocol", "pipeline", "params"):
        if key in data:
            values[key] = _overlay(getattr(spec, key), data[key], key)
    if "thermometers" in data:
        values["thermometers"] = _thermometers(data["thermometers"])
    if "params" in data and kind == "linearity" and "duration_s" not in data:
        p = values["params"]
        values["duration_s"] = len(p.setpoints_c) * p.dwell_s
    spec = replace(spec, **values)
    validate(spec)
    return spec


def validate(spec: ExperimentSpec) -> ExperimentSpec:
    if not spec.duration_s > 0:
        raise ValidationError("duration_s: must be > 0")
    try:
        scenario = ScenarioKind.parse(spec.scenario.kind)
    except ValueError as exc:
        raise ValidationError(f"scenario.kind: {exc}") from None
    if not spec.scenario.distance_m >= 1.0:
        raise ValidationError("scenario.distance_m: must be >= 1 m")
    if scenario is ScenarioKind.S3_MovingAway:
        if spec.scenario.speed_mps < 0:
            raise ValidationError("scenario.speed_mps: must be >= 0")
    elif spec.scenario.speed_mps != 0:
        raise ValidationError("scenario.speed_mps: only the S3 scenario moves")
    try:
        spec.channel.params(scenario)
    except ChannelError as exc:
        key = "exponent" if "exponent" in str(exc) else "sensitivity_dbm" if "sensitivity" in str(exc) else "params"
        raise ValidationError(f"channel.{key}: {exc}") from None
    try:
        spec.sensor.spec()
    except SensorError as exc:
        raise ValidationError(f"sensor: {exc}") from None
    if not 0.0 <= spec.sensor.bias_fraction <= 1.0:
        raise ValidationError("sensor.bias_fraction: must lie in [0, 1]")
    try:
        Policy(spec.protocol.policy)
    except ValueError:
        raise ValidationError(f"protocol.policy: expected 'sequential' or 'random', got {spec.protocol.policy!r}") from None
    try:
        timing = spec.protocol.timing()
    except ValueError as exc:
        raise ValidationError(f"protocol: {exc}") from None
    ids = [t.id for t in spec.thermometers]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValidationError(f"thermometers.id: duplicate identification code {dup:#x}")
    for i, t in enumerate(spec.thermometers):
        if t.distance_m is not None and not t.distance_m >= 1.0:
            raise ValidationError(f"thermometers[{i}].distance_m: must be >= 1 m")
    if spec.kind not in ("scaling", "agility", "wired") and spec.thermometers:
        if timing.round_period / len(spec.thermometers) < timing.feasible_slot - 1e-12:
            raise ValidationError(
                f"protocol.round_period: {timing.round_period} s leaves slots shorter than "
                f"the {timing.feasible_slot} s minimum for {len(spec.thermometers)} thermometers"
            )
    if spec.kind not in ("scaling", "connectivity") and not spec.thermometers:
        raise ValidationError("thermometers: at least one thermometer is required")
    _validate_params(spec)
    return spec


def _nonempty(values, key: str) -> None:
    if not values:
        raise ValidationError(f"params.{key}: grid must be nonempty")


def _validate_params(spec: ExperimentSpec) -> None:
    p = spec.params
    if isinstance(p, LinearityParams):
        _nonempty(p.setpoints_c, "setpoints_c")
        if not p.dwell_s > 0 or not p.step_rate > 0:
            raise ValidationError("params.dwell_s: dwell and step_rate must be > 0")
        steps = [abs(b - a) / p.step_rate for a, b in zip(p.setpoints_c, p.setpoints_c[1:])]
        if any(s >= p.dwell_s / 2 for s in steps):
            raise ValidationError("params.dwell_s: too short to settle between setpoints")
    elif isinstance(p, ResponseParams):
        _nonempty(p.segments, "segments")
        for seg in p.segments:
            if len(seg) != 2 or not seg[1] > 0:
                raise ValidationError("params.segments: each segment is [rate, duration > 0]")
        if p.hold_s < 0:
            raise ValidationError("params.hold_s: must be >= 0")
    elif isinstance(p, AgilityParams):
        _nonempty(p.td_grid_s, "td_grid_s")
        if any(not td > 0 for td in p.td_grid_s):
            raise ValidationError("params.td_grid_s: contact durations must be > 0")
        if not p.rest_check_s > 0 or not p.max_rest_s > 0:
            raise ValidationError("params.rest_check_s: must be > 0")
    elif isinstance(p, ConnectivityParams):
        _nonempty(p.scenarios, "scenarios")
        _nonempty(p.distances_m, "distances_m")
        for s in p.scenarios:
            try:
                ScenarioKind.parse(s)
            except ValueError as exc:
                raise ValidationError(f"params.scenarios: {exc}") from None
            try:
                spec.channel.params(s)
            except ChannelError as exc:
                raise ValidationError(f"channel.exponent: {exc} (scenario {s})") from None
        if any(not d >= 1.0 for d in p.distances_m):
            raise ValidationError("params.distances_m: distances must be >= 1 m")
        if p.repeats < 1:
            raise ValidationError("params.repeats: must be >= 1")
    elif isinstance(p, ScalingParams):
        _nonempty(p.n_grid, "n_grid")
        if any(n < 1 for n in p.n_grid):
            raise ValidationError("params.n_grid: thermometer counts must be >= 1")
        if p.rounds < 1:
            raise ValidationError("params.rounds: must be >= 1")


def load_scenario(path: str | Path) -> ExperimentSpec:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        data: dict = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    return spec_from_dict(data)


__all__ = [
    "ConfigError",
    "ParseError",
    "ValidationError",
    "KINDS",
    "ScenarioConfig",
    "ChannelConfig",
    "SensorConfig",
    "ProtocolConfig",
    "ThermometerConfig",
    "StabilityParams",
    "WiredParams",
    "LinearityParams",
    "ResponseParams",
    "AgilityParams",
    "ConnectivityParams",
    "ScalingParams",
    "ExperimentSpec",
    "default_spec",
    "spec_from_dict",
    "validate",
    "load_scenario",
]
