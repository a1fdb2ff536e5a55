"""Truth temperature sources and the thermometer probe.

Times here are seconds (floats); the network converts from engine ticks.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence, Union

ACCURACY_C = 0.4
RESOLUTION_C = 0.01
WIRELESS_NOISE_C = 0.125
WIRED_NOISE_C = 0.054
# 12 * exp(-12 / tau) = 0.4, i.e. tau = 12 / ln(30)
DEFAULT_TAU_S = 3.528
BODY_C = 37.0
ROOM_C = 25.0


class SensorError(ValueError):
    pass


class NonPositiveDt(SensorError):
    pass


# -- sources ---------------------------------------------------------------


@dataclass(frozen=True)
class BodyConstant:
    value: float = BODY_C


@dataclass(frozen=True)
class RoomAmbient:
    value: float = ROOM_C


@dataclass(frozen=True)
class HeaterProfile:
    """Piecewise-linear heater output: ramps at ``rate`` for ``duration``, then holds."""

    start: float
    segments: tuple[tuple[float, float], ...]
    hold_after: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple((float(r), float(d)) for r, d in self.segments))
        for rate, duration in self.segments:
            if not duration > 0:
                raise SensorError(f"heater segment duration must be > 0, got {duration}")
        if self.hold_after < 0:
            raise SensorError("hold_after must be >= 0")
        times = [0.0]
        values = [float(self.start)]
        for rate, duration in self.segments:
            times.append(times[-1] + duration)
            values.append(values[-1] + rate * duration)
        object.__setattr__(self, "_times", tuple(times))
        object.__setattr__(self, "_values", tuple(values))

    @property
    def ramp_end(self) -> float:
        return self._times[-1]

    @property
    def plateau(self) -> float:
        return self._values[-1]

    @property
    def total_duration(self) -> float:
        return self.ramp_end + self.hold_after

    def breakpoints(self) -> tuple[float, ...]:
        return self._times

    def value_at(self, t: float) -> float:
        if t <= 0:
            return self._values[0]
        if t >= self._times[-1]:
            return self._values[-1]
        i = bisect_right(self._times, t) - 1
        rate = self.segments[i][0]
        return self._values[i] + rate * (t - self._times[i])

    @classmethod
    def staircase(cls, setpoints: Sequence[float], dwell: float, step_rate: float = 1.0) -> "HeaterProfile":
        """Hold each setpoint for ``dwell`` seconds, moving between them at ``step_rate`` °C/s."""
        if not setpoints:
            raise SensorError("staircase needs at least one setpoint")
        segments: list[tuple[float, float]] = [(0.0, dwell)]
        for prev, nxt in zip(setpoints, setpoints[1:]):
            delta = nxt - prev
            if delta:
                ramp = abs(delta) / step_rate
                if ramp >= dwell:
                    raise SensorError("dwell too short for the setpoint step")
                segments.append((math.copysign(step_rate, delta), ramp))
                segments.append((0.0, dwell - ramp))
            else:
                segments.append((0.0, dwell))
        return cls(setpoints[0], tuple(segments))


TemperatureSource = Union[BodyConstant, RoomAmbient, HeaterProfile]


def true_temperature(source: TemperatureSource, t: float) -> float:
    if t < 0:
        raise SensorError("t must be >= 0")
    if isinstance(source, HeaterProfile):
        return source.value_at(t)
    return float(source.value)


def _breakpoints(source: TemperatureSource) -> tuple[float, ...]:
    return source.breakpoints() if isinstance(source, HeaterProfile) else ()


# -- probe -----------------------------------------------------------------


@dataclass(frozen=True)
class SensorSpec:
    accuracy: float = ACCURACY_C
    resolution: float = RESOLUTION_C
    noise_amp: float = WIRELESS_NOISE_C
    bias: float = 0.0
    tau: float = DEFAULT_TAU_S

    def __post_init__(self) -> None:
        if abs(self.bias) > self.accuracy:
            raise SensorError(f"|bias| {self.bias} exceeds accuracy {self.accuracy}")
        if self.noise_amp < 0:
            raise SensorError("noise_amp must be >= 0")
        if not self.resolution > 0:
            raise SensorError("resolution must be > 0")
        if not self.tau > 0:
            raise SensorError("tau must be > 0")

    @classmethod
    def wired(cls, **kw) -> "SensorSpec":
        return cls(noise_amp=WIRED_NOISE_C, **kw)

    def with_unit_bias(self, rng, bias_fraction: float) -> "SensorSpec":
        """Draw this unit's bias uniformly in ``±accuracy * bias_fraction``."""
        if not 0.0 <= bias_fraction <= 1.0:
            raise SensorError("bias_fraction must lie in [0, 1]")
        bound = self.accuracy * bias_fraction
        return replace(self, bias=rng.uniform(-bound, bound))


@dataclass(frozen=True)
class ProbeState:
    probe_temp: float
    in_contact: bool = True
    last_update: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.probe_temp):
            raise SensorError("probe_temp must be finite")


def probe_step(
    state: ProbeState, env_temp: float, dt: float, tau: float, env_end: float | None = None
) -> ProbeState:
    """Exact first-order update over ``dt`` seconds.

    With ``env_end`` the environment is taken to move linearly from
    ``env_temp`` to ``env_end`` across the step, which is still solved in
    closed form (ramp input).
    """
    if not dt > 0:
        raise NonPositiveDt(f"dt must be > 0, got {dt}")
    decay = math.exp(-dt / tau)
    if env_end is None or env_end == env_temp:
        temp = env_temp + (state.probe_temp - env_temp) * decay
    else:
        lag = (env_end - env_temp) / dt * tau
        temp = env_end - lag + (state.probe_temp - env_temp + lag) * decay
    return replace(state, probe_temp=temp, last_update=state.last_update + dt)


def quantize(value: float, resolution: float) -> float:
    """Round to a multiple of ``resolution``, halves away from zero."""
    res = Decimal(repr(float(resolution)))
    steps = (Decimal(repr(float(value))) / res).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return float(steps * res)


def sample(state: ProbeState, spec: SensorSpec, noise_draw: float) -> float:
    if abs(noise_draw) > spec.noise_amp:
        raise SensorError(f"noise draw {noise_draw} outside ±{spec.noise_amp}")
    return quantize(state.probe_temp + spec.bias + noise_draw, spec.resolution)


def advance(state: ProbeState, source: TemperatureSource, t: float, tau: float) -> ProbeState:
    """Track ``source`` exactly from ``state.last_update`` to ``t``.

    The interval is split at the source's breakpoints so each piece sees a
    linear environment.
    """
    t0 = state.last_update
    if t < t0:
        raise SensorError(f"probe updates must be time-monotone ({t} < {t0})")
    if t == t0:
        return state
    cuts = [b for b in _breakpoints(source) if t0 < b < t]
    for a, b in zip([t0, *cuts], [*cuts, t]):
        state = probe_step(state, true_temperature(source, a), b - a, tau, true_temperature(source, b))
        state = replace(state, last_update=b)
    return state


@dataclass
class Probe:
    """A thermometer probe that is either on its subject or resting in the room."""

    spec: SensorSpec
    subject: TemperatureSource = field(default_factory=BodyConstant)
    room: TemperatureSource = field(default_factory=RoomAmbient)
    state: ProbeState | None = None

    def __post_init__(self) -> None:
        if self.state is None:
            self.state = ProbeState(true_temperature(self.subject, 0.0), True, 0.0)

    @property
    def environment(self) -> TemperatureSource:
        return self.subject if self.state.in_contact else self.room

    def advance_to(self, t: float) -> ProbeState:
        self.state = advance(self.state, self.environment, t, self.spec.tau)
        return self.state

    def set_contact(self, in_contact: bool, t: float) -> None:
        self.advance_to(t)
        self.state = set_contact(self.state, in_contact)

    def read(self, t: float, noise_draw: float) -> float:
        return sample(self.advance_to(t), self.spec, noise_draw)

    def truth(self, t: float) -> float:
        return true_temperature(self.environment, t)


def set_contact(state: ProbeState, in_contact: bool) -> ProbeState:
    return replace(state, in_contact=bool(in_contact))


__all__ = [
    "ACCURACY_C",
    "RESOLUTION_C",
    "WIRELESS_NOISE_C",
    "WIRED_NOISE_C",
    "DEFAULT_TAU_S",
    "BODY_C",
    "ROOM_C",
    "SensorError",
    "NonPositiveDt",
    "BodyConstant",
    "RoomAmbient",
    "HeaterProfile",
    "TemperatureSource",
    "true_temperature",
    "SensorSpec",
    "ProbeState",
    "probe_step",
    "quantize",
    "sample",
    "advance",
    "Probe",
    "set_contact",
]
