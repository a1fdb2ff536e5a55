"""Shared 2.4 GHz medium: log-distance path loss, carrier sense, collisions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any

from .engine import RngStream, SimTime, airtime_us

REF_DISTANCE_M = 1.0
# free-space loss at 1 m and 2.4 GHz: 20*log10(4*pi*2.4e9/3e8)
FREE_SPACE_REF_LOSS_DB = 40.05

MASTER_ID = 0


class ChannelError(ValueError):
    pass


class DistanceTooSmall(ChannelError):
    pass


class UnknownNode(KeyError):
    pass


class SelfDelivery(ChannelError):
    pass


class ScenarioKind(str, enum.Enum):
    S1_FurnishedRoom = "S1"
    S2_EmptyRoom = "S2"
    S3_MovingAway = "S3"
    S4_LineOfSight = "S4"

    @property
    def line_of_sight(self) -> bool:
        return self is ScenarioKind.S4_LineOfSight

    @classmethod
    def parse(cls, value: "str | ScenarioKind") -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown scenario {value!r}; expected one of S1, S2, S3, S4")


# (exponent, shadow sigma dB) per scenario
SCENARIO_DEFAULTS: dict[ScenarioKind, tuple[float, float]] = {
    ScenarioKind.S1_FurnishedRoom: (3.0, 4.0),
    ScenarioKind.S2_EmptyRoom: (3.0, 2.0),
    ScenarioKind.S3_MovingAway: (3.0, 4.0),
    ScenarioKind.S4_LineOfSight: (2.0, 0.0),
}


@dataclass(frozen=True)
class ChannelParams:
    tx_power_dbm: float = 0.0
    ref_loss_db: float = FREE_SPACE_REF_LOSS_DB
    exponent: float = 2.0
    shadow_sigma_db: float = 0.0
    sensitivity_dbm: float = -89.0
    cs_threshold_dbm: float = -75.0
    bitrate_bps: int = 250_000

    def validate(self, line_of_sight: bool | None = None) -> "ChannelParams":
        if line_of_sight is True and self.exponent != 2.0:
            raise ChannelError(f"exponent must equal 2 for line-of-sight, got {self.exponent}")
        if line_of_sight is False and self.exponent < 2.0:
            raise ChannelError(f"exponent must be >= 2 for non-line-of-sight, got {self.exponent}")
        if self.shadow_sigma_db < 0:
            raise ChannelError("shadow_sigma_db must be >= 0")
        if not self.sensitivity_dbm <= self.cs_threshold_dbm <= self.tx_power_dbm:
            raise ChannelError("need sensitivity_dbm <= cs_threshold_dbm <= tx_power_dbm")
        if self.bitrate_bps <= 0:
            raise ChannelError("bitrate_bps must be positive")
        return self

    @classmethod
    def for_scenario(cls, kind: ScenarioKind | str, **overrides: Any) -> "ChannelParams":
        kind = ScenarioKind.parse(kind)
        exponent, sigma = SCENARIO_DEFAULTS[kind]
        params = cls(exponent=exponent, shadow_sigma_db=sigma)
        params = replace(params, **{k: v for k, v in overrides.items() if v is not None})
        return params.validate(kind.line_of_sight)


def received_power(params: ChannelParams, distance: float, shadow_draw: float = 0.0) -> float:
    """Log-distance received power in dBm."""
    if distance < REF_DISTANCE_M:
        raise DistanceTooSmall(f"distance {distance} m is inside the 1 m reference distance")
    return (
        params.tx_power_dbm
        - params.ref_loss_db
        - 10.0 * params.exponent * math.log10(distance)
        + shadow_draw
    )


@dataclass
class NodeKinematics:
    node_id: int
    position: float
    velocity: float = 0.0

    def __post_init__(self) -> None:
        if not self.position > 0 and self.node_id != MASTER_ID:
            raise ChannelError(f"node {self.node_id:#x}: position must be > 0")


@dataclass(frozen=True)
class Transmission:
    tx_id: int
    sender: int
    start: SimTime
    airtime: SimTime
    power_dbm: float
    payload: Any = None
    size_bytes: int = 0

    @property
    def end(self) -> SimTime:
        return self.start + self.airtime

    def active_at(self, at: SimTime) -> bool:
        return self.start <= at < self.end

    def overlaps(self, other: "Transmission") -> bool:
        return self.start < other.end and other.start < self.end


class CarrierState(str, enum.Enum):
    Idle = "idle"
    Busy = "busy"


@dataclass(frozen=True)
class Delivered:
    rssi_dbm: float


@dataclass(frozen=True)
class LostWeakSignal:
    rssi_dbm: float


@dataclass(frozen=True)
class Collided:
    interferers: tuple[int, ...]


DeliveryOutcome = Delivered | LostWeakSignal | Collided


@dataclass
class Channel:
    """One shared medium owned by a single engine.

    Node positions are scalar distances from the central node; the distance
    between two nodes is ``|p_a - p_b|`` clamped to the 1 m reference
    distance. Shadowing is drawn once per (transmission, receiver) link from
    the channel stream and cached, so carrier sense and delivery see the
    same fade.
    """

    params: ChannelParams
    rng: RngStream | None = None
    keep_log: bool = False
    nodes: dict[int, NodeKinematics] = field(default_factory=dict)
    log: list[Transmission] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._active: list[Transmission] = []
        self._shadow: dict[tuple[int, int], float] = {}
        self._next_tx = 0
        self._clock: SimTime = 0
        if MASTER_ID not in self.nodes:
            self.nodes[MASTER_ID] = NodeKinematics(MASTER_ID, 0.0)

    def add_node(self, kin: NodeKinematics) -> None:
        if kin.node_id in self.nodes:
            raise ChannelError(f"node {kin.node_id:#x} already registered")
        self.nodes[kin.node_id] = kin

    def node(self, node_id: int) -> NodeKinematics:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    # kinematics

    def advance_kinematics(self, dt: float) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        for kin in self.nodes.values():
            if kin.velocity:
                kin.position += kin.velocity * dt

    def sync(self, now: SimTime) -> None:
        """Move every node to its position at ``now``."""
        if now > self._clock:
            self.advance_kinematics((now - self._clock) / 1e6)
            self._clock = now

    def distance(self, a: int, b: int) -> float:
        return max(abs(self.node(a).position - self.node(b).position), REF_DISTANCE_M)

    # transmissions

    def transmit(self, sender: int, size_bytes: int, now: SimTime, payload: Any = None) -> Transmission:
        self.node(sender)
        self.sync(now)
        tx = Transmission(
            tx_id=self._next_tx,
            sender=sender,
            start=now,
            airtime=airtime_us(size_bytes, self.params.bitrate_bps),
            power_dbm=self.params.tx_power_dbm,
            payload=payload,
            size_bytes=size_bytes,
        )
        self._next_tx += 1
        self._prune(now)
        self._active.append(tx)
        if self.keep_log:
            self.log.append(tx)
        return tx

    def _prune(self, now: SimTime) -> None:
        # a finished transmission only matters to deliveries of overlapping ones
        horizon = now - 1_000_000
        if self._active and self._active[0].end < horizon:
            self._active = [tx for tx in self._active if tx.end >= horizon]
            live = {tx.tx_id for tx in self._active}
            self._shadow = {k: v for k, v in self._shadow.items() if k[0] in live}

    def link_shadow(self, tx: Transmission, receiver: int) -> float:
        key = (tx.tx_id, receiver)
        if key not in self._shadow:
            sigma = self.params.shadow_sigma_db
            if sigma > 0 and self.rng is not None:
                self._shadow[key] = self.rng.gaussian(0.0, sigma)
            else:
                self._shadow[key] = 0.0
        return self._shadow[key]

    def power_at(self, tx: Transmission, receiver: int, shadow_draw: float | None = None) -> float:
        if shadow_draw is None:
            shadow_draw = self.link_shadow(tx, receiver)
        d = self.distance(tx.sender, receiver)
        return received_power(self.params, d, shadow_draw) + (tx.power_dbm - self.params.tx_power_dbm)

    def carrier_sense(self, node: int, at: SimTime) -> CarrierState:
        self.node(node)
        self.sync(at)
        for tx in self._active:
            if tx.sender != node and tx.active_at(at):
                if self.power_at(tx, node) > self.params.cs_threshold_dbm:
                    return CarrierState.Busy
        return CarrierState.Idle

    def deliver(self, tx: Transmission, receiver: int, shadow_draw: float | None = None) -> DeliveryOutcome:
        if receiver == tx.sender:
            raise SelfDelivery(f"node {receiver:#x} cannot receive its own transmission")
        self.node(receiver)
        interferers = []
        for other in self._active:
            if other.tx_id == tx.tx_id or not other.overlaps(tx):
                continue
            # half duplex: a receiver that is itself transmitting hears nothing
            if other.sender == receiver or self.power_at(other, receiver) >= self.params.sensitivity_dbm:
                interferers.append(other.tx_id)
        if interferers:
            return Collided(tuple(interferers))
        power = self.power_at(tx, receiver, shadow_draw)
        if power < self.params.sensitivity_dbm:
            return LostWeakSignal(power)
        return Delivered(power)


__all__ = [
    "MASTER_ID",
    "FREE_SPACE_REF_LOSS_DB",
    "ChannelError",
    "DistanceTooSmall",
    "UnknownNode",
    "SelfDelivery",
    "ScenarioKind",
    "SCENARIO_DEFAULTS",
    "ChannelParams",
    "received_power",
    "NodeKinematics",
    "Transmission",
    "CarrierState",
    "Delivered",
    "LostWeakSignal",
    "Collided",
    "DeliveryOutcome",
    "Channel",
]
