"""Per-thermometer smoothing, alerting and run metrics."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import SimTime


class MonitorError(ValueError):
    pass


class OutOfOrderRecord(MonitorError):
    pass


class InsufficientData(MonitorError):
    pass


class EmptyRun(MonitorError):
    pass


class EmptyInput(MonitorError):
    pass


@dataclass(frozen=True)
class ReadingRecord:
    thermometer: int
    patient: str
    at: SimTime
    raw: float
    smoothed: float | None = None


class AlertKind(str, enum.Enum):
    HighTemperature = "HighTemperature"
    RapidIncrease = "RapidIncrease"
    ConnectivityLoss = "ConnectivityLoss"


@dataclass(frozen=True)
class Alert:
    kind: AlertKind
    thermometer: int
    at: SimTime
    value: float
    patient: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "time_s": self.at / 1e6,
                "thermometer": f"{self.thermometer:#018x}",
                "patient": self.patient,
                "kind": self.kind.value,
                "value": self.value,
            }
        )


@dataclass(frozen=True)
class PipelineConfig:
    window: int = 5
    fever_threshold: float = 38.0
    rate_threshold: float = 1.0  # °C/min
    rate_window: int = 10
    miss_threshold: int = 5
    hysteresis: float = 0.2

    def __post_init__(self) -> None:
        if self.window < 1:
            raise MonitorError("window must be >= 1")
        if self.rate_window < 2:
            raise MonitorError("rate_window must be >= 2")
        if self.miss_threshold < 1:
            raise MonitorError("miss_threshold must be >= 1")
        if not (self.fever_threshold > 0 and self.rate_threshold > 0):
            raise MonitorError("thresholds must be > 0")
        if self.hysteresis < 0:
            raise MonitorError("hysteresis must be >= 0")


def moving_average(tail: Sequence[float], window: int) -> float:
    if not len(tail):
        raise EmptyInput("moving average of an empty series")
    recent = list(tail)[-window:]
    return float(sum(recent) / len(recent))


def rate_estimate(times_s: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``values`` against time, in °C per minute."""
    t = np.asarray(times_s, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 2 or t.size != y.size:
        raise InsufficientData("need at least two (time, value) pairs")
    tc = t - t.mean()
    denom = float(tc @ tc)
    if denom == 0.0:
        raise InsufficientData("all samples share one timestamp")
    return float(tc @ (y - y.mean()) / denom) * 60.0


@dataclass
class _Track:
    patient: str
    last_at: SimTime | None = None
    raw: deque = field(default_factory=deque)
    warm: deque = field(default_factory=deque)  # (t_s, smoothed) from full windows only
    prev_smoothed: float | None = None
    open: set = field(default_factory=set)
    misses: int = 0


class Pipeline:
    """Consumes reading records and raises edge-triggered alerts.

    Smoothed values use the last ``window`` raw readings (fewer at start-up).
    The rapid-increase slope only looks at smoothed values computed from a
    full window, so the first few partially averaged values cannot trip it.
    """

    def __init__(self, config: PipelineConfig | None = None, patients: dict[int, str] | None = None):
        self.config = config or PipelineConfig()
        self.patients = dict(patients or {})
        self._tracks: dict[int, _Track] = {}
        self.alerts: list[Alert] = []
        self.records: list[ReadingRecord] = []

    def register(self, thermometer: int, patient: str) -> None:
        self.patients[thermometer] = patient

    def _track(self, thermometer: int) -> _Track:
        if thermometer not in self._tracks:
            if thermometer not in self.patients:
                raise MonitorError(f"unknown thermometer {thermometer:#x}")
            self._tracks[thermometer] = _Track(self.patients[thermometer])
        return self._tracks[thermometer]

    def _emit(self, alerts: list, kind: AlertKind, tr: _Track, thermometer: int, at: SimTime, value: float):
        alert = Alert(kind, thermometer, at, value, tr.patient)
        tr.open.add(kind)
        alerts.append(alert)
        self.alerts.append(alert)

    def ingest(self, record: ReadingRecord) -> list[Alert]:
        cfg = self.config
        tr = self._track(record.thermometer)
        if tr.last_at is not None and record.at <= tr.last_at:
            raise OutOfOrderRecord(f"record at {record.at} not after {tr.last_at}")
        tr.last_at = record.at
        tr.raw.append(record.raw)
        if len(tr.raw) > cfg.window:
            tr.raw.popleft()
        smoothed = moving_average(tr.raw, cfg.window)
        stored = ReadingRecord(record.thermometer, tr.patient, record.at, record.raw, smoothed)
        self.records.append(stored)
        alerts: list[Alert] = []

        if tr.misses >= cfg.miss_threshold:
            tr.open.discard(AlertKind.ConnectivityLoss)
        tr.misses = 0

        high = AlertKind.HighTemperature
        if high in tr.open:
            if smoothed < cfg.fever_threshold - cfg.hysteresis:
                tr.open.discard(high)
        elif smoothed >= cfg.fever_threshold and (tr.prev_smoothed is None or tr.prev_smoothed < cfg.fever_threshold):
            self._emit(alerts, high, tr, record.thermometer, record.at, smoothed)
        tr.prev_smoothed = smoothed

        if len(tr.raw) == cfg.window:
            tr.warm.append((record.at / 1e6, smoothed))
            if len(tr.warm) > cfg.rate_window:
                tr.warm.popleft()
        if len(tr.warm) == cfg.rate_window:
            ts, vs = zip(*tr.warm)
            slope = rate_estimate(ts, vs)
            rapid = AlertKind.RapidIncrease
            if rapid in tr.open:
                if slope <= cfg.rate_threshold:
                    tr.open.discard(rapid)
            elif slope > cfg.rate_threshold:
                self._emit(alerts, rapid, tr, record.thermometer, record.at, slope)
        return alerts

    def note_miss(self, thermometer: int, at: SimTime) -> list[Alert]:
        """Counts a missed poll; raises ConnectivityLoss once misses run consecutively."""
        tr = self._track(thermometer)
        tr.misses += 1
        alerts: list[Alert] = []
        loss = AlertKind.ConnectivityLoss
        if tr.misses >= self.config.miss_threshold and loss not in tr.open:
            self._emit(alerts, loss, tr, thermometer, at, float(tr.misses))
        return alerts

    def smoothed_series(self, thermometer: int) -> list[ReadingRecord]:
        return [r for r in self.records if r.thermometer == thermometer]

    def alert_log(self) -> str:
        return "".join(a.to_json() + "\n" for a in self.alerts)


# -- run metrics -----------------------------------------------------------


@dataclass(frozen=True)
class SlotResult:
    acknowledged: bool
    raw: float | None = None
    sample_time_s: float | None = None


def connectivity(
    slots: Iterable[SlotResult], truth: Callable[[float], float], accuracy: float
) -> float:
    """Fraction of scheduled slots that returned an acknowledged, accurate reading."""
    total = good = 0
    for slot in slots:
        total += 1
        if slot.acknowledged and slot.raw is not None:
            if abs(slot.raw - truth(slot.sample_time_s)) <= accuracy:
                good += 1
    if total == 0:
        raise EmptyRun("no scheduled slots in the run")
    return good / total


@dataclass(frozen=True)
class MseResult:
    mse: float
    rmse: float


def mse(readings: Sequence[float], reference: Sequence[float]) -> MseResult:
    r = np.asarray(readings, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if r.size == 0:
        raise EmptyInput("no (reading, reference) pairs")
    if r.shape != ref.shape:
        raise MonitorError("readings and reference differ in length")
    value = float(np.mean((r - ref) ** 2))
    return MseResult(value, value**0.5)


__all__ = [
    "MonitorError",
    "OutOfOrderRecord",
    "InsufficientData",
    "EmptyRun",
    "EmptyInput",
    "ReadingRecord",
    "AlertKind",
    "Alert",
    "PipelineConfig",
    "moving_average",
    "rate_estimate",
    "Pipeline",
    "SlotResult",
    "connectivity",
    "MseResult",
    "mse",
]
