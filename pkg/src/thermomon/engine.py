"""Discrete-event engine: integer microsecond clock, event queue, seeded streams."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

import numpy as np

SimTime = int  # microseconds since simulation start

TICKS_PER_SECOND = 1_000_000
HORIZON = 24 * 3600 * TICKS_PER_SECOND

# stream ids above the 64-bit node-id range, so node streams never alias them
CHANNEL_STREAM = 2**64
MASTER_STREAM = 2**64 + 1


class SchedulingInPast(ValueError):
    pass


class InvalidDistribution(ValueError):
    pass


def seconds(value: float) -> SimTime:
    """Convert seconds to integer ticks (rounded to the nearest microsecond)."""
    return int(round(value * TICKS_PER_SECOND))


def to_seconds(ticks: SimTime) -> float:
    return ticks / TICKS_PER_SECOND


@dataclass(frozen=True)
class Event:
    fire_at: SimTime
    seq: int
    target: Hashable
    payload: Any = None


class EventHandle:
    __slots__ = ("event", "cancelled")

    def __init__(self, event: Event) -> None:
        self.event = event
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass(frozen=True)
class RunStats:
    events_processed: int
    clock: SimTime


# -- distributions ---------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self) -> None:
        if not self.low <= self.high:
            raise InvalidDistribution(f"uniform({self.low}, {self.high}): low > high")


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise InvalidDistribution(f"gaussian sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise InvalidDistribution(f"bernoulli p must lie in [0, 1], got {self.p}")


class RngStream:
    """Independent PCG64 stream keyed by ``(seed, stream_id)``.

    Every draw consumes exactly one generator call: ``random()`` for uniform
    and bernoulli, ``standard_normal()`` for gaussian.
    """

    def __init__(self, seed: int, stream_id: int) -> None:
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def draw(self, dist: Uniform | Gaussian | Bernoulli) -> float | bool:
        if isinstance(dist, Uniform):
            u = float(self._gen.random())
            return dist.low + (dist.high - dist.low) * u
        if isinstance(dist, Gaussian):
            return dist.mu + dist.sigma * float(self._gen.standard_normal())
        if isinstance(dist, Bernoulli):
            return bool(self._gen.random() < dist.p)
        raise InvalidDistribution(f"unsupported distribution {dist!r}")

    def uniform(self, low: float, high: float) -> float:
        return self.draw(Uniform(low, high))

    def gaussian(self, mu: float, sigma: float) -> float:
        return self.draw(Gaussian(mu, sigma))

    def bernoulli(self, p: float) -> bool:
        return self.draw(Bernoulli(p))

    def integer(self, n: int) -> int:
        """Uniform integer in ``[0, n)``; one ``random()`` call."""
        return min(int(self._gen.random() * n), n - 1)


def draw(stream: RngStream, dist: Uniform | Gaussian | Bernoulli) -> float | bool:
    return stream.draw(dist)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for repeated runs of one experiment."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


# -- engine ----------------------------------------------------------------


Handler = Callable[[Event], None]


@dataclass
class Engine:
    """Single-threaded event loop.

    Events fire in ``(fire_at, seq)`` order; handlers are looked up by the
    event target. With ``trace=True`` every processed event is appended to
    ``trace`` as ``(fire_at, seq, target, payload)``.
    """

    seed: int = 0
    trace_enabled: bool = False
    now: SimTime = 0
    trace: list[tuple] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._queue: list[tuple[int, int, EventHandle]] = []
        self._seq = 0
        self._handlers: dict[Hashable, Handler] = {}
        self._streams: dict[int, RngStream] = {}

    def register(self, target: Hashable, handler: Handler) -> None:
        self._handlers[target] = handler

    def stream(self, stream_id: int) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]

    def schedule(self, fire_at: SimTime, target: Hashable, payload: Any = None) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at {fire_at} < clock {self.now}")
        if fire_at > HORIZON:
            raise ValueError(f"fire_at {fire_at} beyond the {HORIZON} tick horizon")
        event = Event(int(fire_at), self._seq, target, payload)
        self._seq += 1
        handle = EventHandle(event)
        heapq.heappush(self._queue, (event.fire_at, event.seq, handle))
        return handle

    def schedule_in(self, delay: SimTime, target: Hashable, payload: Any = None) -> EventHandle:
        return self.schedule(self.now + delay, target, payload)

    def cancel(self, handle: EventHandle) -> None:
        handle.cancel()

    @property
    def pending(self) -> int:
        return sum(1 for _, _, h in self._queue if not h.cancelled)

    def run_until(self, t_end: SimTime) -> RunStats:
        if t_end < self.now:
            raise SchedulingInPast(f"t_end {t_end} < clock {self.now}")
        processed = 0
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            fire_at, _, handle = heapq.heappop(queue)
            if handle.cancelled:
                continue
            self.now = fire_at
            event = handle.event
            if self.trace_enabled:
                self.trace.append((event.fire_at, event.seq, event.target, event.payload))
            handler = self._handlers.get(event.target)
            if handler is not None:
                handler(event)
            processed += 1
        self.now = t_end
        return RunStats(processed, self.now)

    def run_for(self, seconds_: float) -> RunStats:
        return self.run_until(self.now + seconds(seconds_))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def airtime_us(payload_bytes: int, bitrate_bps: int) -> SimTime:
    """Airtime in microseconds, ``ceil(8 * bytes / bitrate)``, at least one tick."""
    ticks = ceil_div(8 * payload_bytes * TICKS_PER_SECOND, bitrate_bps)
    return max(ticks, 1)


__all__ = [
    "SimTime",
    "TICKS_PER_SECOND",
    "HORIZON",
    "CHANNEL_STREAM",
    "MASTER_STREAM",
    "SchedulingInPast",
    "InvalidDistribution",
    "seconds",
    "to_seconds",
    "Event",
    "EventHandle",
    "RunStats",
    "Uniform",
    "Gaussian",
    "Bernoulli",
    "RngStream",
    "draw",
    "derive_seed",
    "Engine",
    "airtime_us",
]
