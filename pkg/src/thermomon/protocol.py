"""ID-MAC: identification-addressed polling over the shared channel.

The central node (master) owns a rigid slot schedule. At each slot start it
broadcasts a Poll naming one thermometer; only the named slave answers,
after sensing the carrier, with a Data packet; the master confirms with an
Ack. Lost exchanges are re-polled inside the slot, then recorded as misses.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .channel import MASTER_ID, CarrierState, Channel, Delivered, Transmission
from .engine import MASTER_STREAM, Engine, EventHandle, RngStream, SimTime, seconds
from .sensor import Probe

SEQ_MOD = 1 << 16


class ProtocolError(RuntimeError):
    pass


class EmptyRoster(ProtocolError):
    pass


class SlotOverrun(ProtocolError):
    pass


class StaleData(ProtocolError):
    pass


# -- packets ---------------------------------------------------------------


class Tag(enum.IntEnum):
    POLL = 1
    DATA = 2
    ACK = 3


@dataclass(frozen=True)
class Poll:
    target: int
    seq: int
    FRAME_BYTES = 12


@dataclass(frozen=True)
class Data:
    sender: int
    seq: int
    reading: float
    sample_time: SimTime
    FRAME_BYTES = 16


@dataclass(frozen=True)
class Ack:
    target: int
    seq: int
    FRAME_BYTES = 12


Packet = Poll | Data | Ack

_HEADER = struct.Struct(">BQH")
_DATA = struct.Struct(">BQHh")


def encode(packet: Packet) -> bytes:
    """Trace-dump layout: tag (1 B), id (8 B), seq (2 B), centi-degrees (2 B, Data only).

    Frame sizes used for airtime (``FRAME_BYTES``) additionally cover link
    framing; the CRC is not modelled.
    """
    if isinstance(packet, Data):
        centi = int(round(packet.reading * 100))
        return _DATA.pack(Tag.DATA, packet.sender, packet.seq % SEQ_MOD, centi)
    tag = Tag.POLL if isinstance(packet, Poll) else Tag.ACK
    return _HEADER.pack(tag, packet.target, packet.seq % SEQ_MOD)


def decode(raw: bytes) -> Packet:
    tag = Tag(raw[0])
    if tag is Tag.DATA:
        _, sender, seq, centi = _DATA.unpack(raw)
        return Data(sender, seq, centi / 100, 0)
    _, node, seq = _HEADER.unpack(raw)
    return Poll(node, seq) if tag is Tag.POLL else Ack(node, seq)


# -- timing ----------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolTiming:
    round_period: float = 1.0
    cs_delay: float = 0.001
    cs_retries: int = 3
    cs_backoff: float = 0.002
    poll_timeout: float = 0.020
    data_retries: int = 2
    ack_timeout: float = 0.003
    ack_retries: int = 1
    min_slot: float = 0.100

    def __post_init__(self) -> None:
        for name in ("round_period", "cs_delay", "cs_backoff", "poll_timeout", "ack_timeout", "min_slot"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("cs_retries", "data_retries", "ack_retries"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def worst_case_exchange(self) -> float:
        """Longest time a slot can stay open: every poll runs to its timeout."""
        return (1 + self.data_retries) * self.poll_timeout

    @property
    def feasible_slot(self) -> float:
        return max(self.min_slot, self.worst_case_exchange)


class Policy(str, enum.Enum):
    Sequential = "sequential"
    Random = "random"


@dataclass(frozen=True)
class DelayStats:
    n: int
    round_period: float
    slot: float
    per_node_interval: float
    worst_case_wait: float
    min_feasible_round: float
    feasible: bool


def measurement_delay(n: int, round_period: float = 1.0, min_slot: float = 0.100) -> DelayStats:
    """Polling-delay arithmetic for ``n`` thermometers.

    With the round fixed, each node is sampled once per round and its slot
    shrinks as ``1/n``; the shortest workable round is ``n * min_slot``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    slot = round_period / n
    return DelayStats(
        n=n,
        round_period=round_period,
        slot=slot,
        per_node_interval=round_period,
        worst_case_wait=round_period,
        min_feasible_round=n * min_slot,
        feasible=slot >= min_slot - 1e-12,
    )


# -- master ----------------------------------------------------------------


@dataclass(frozen=True)
class SlotOutcome:
    index: int
    target: int
    start: SimTime
    polls: int
    acknowledged: bool
    record_at: SimTime | None = None


@dataclass
class Pending:
    target: int
    seq: int
    deadline: SimTime
    polls: int
    timer: EventHandle | None = None


@dataclass
class MasterCounters:
    polls: int = 0
    timeouts: int = 0
    misses: int = 0
    stale: int = 0
    acks: int = 0
    records: int = 0


class MasterState:
    """Roster, schedule and bookkeeping of the central node."""

    def __init__(self, roster: Sequence[int], timing: ProtocolTiming, policy: Policy = Policy.Sequential):
        self.roster = list(roster)
        if len(set(self.roster)) != len(self.roster):
            raise ProtocolError("duplicate identification codes in roster")
        self.timing = timing
        self.policy = Policy(policy)
        self.seq = 0
        self.cursor = 0
        self.pending: Pending | None = None
        self.misses: dict[int, int] = {n: 0 for n in self.roster}
        self.consecutive_misses: dict[int, int] = {n: 0 for n in self.roster}
        self.counters = MasterCounters()

    @property
    def round_ticks(self) -> SimTime:
        return seconds(self.timing.round_period)

    @property
    def slot(self) -> float:
        return self.timing.round_period / len(self.roster)

    def slot_start(self, k: int) -> SimTime:
        # integer boundaries; N slots sum exactly to one round
        return k * self.round_ticks // len(self.roster)

    def next_seq(self) -> int:
        self.seq = (self.seq + 1) % SEQ_MOD
        return self.seq


def master_next_target(state: MasterState, rng: RngStream | None = None) -> int:
    if not state.roster:
        raise EmptyRoster("roster is empty")
    if state.policy is Policy.Sequential:
        target = state.roster[state.cursor % len(state.roster)]
        state.cursor += 1
        return target
    if rng is None:
        raise ProtocolError("random policy needs an RNG stream")
    return state.roster[rng.integer(len(state.roster))]


RecordSink = Callable[[int, SimTime, float, SimTime], None]


class Master:
    """Central node state machine driven by engine events."""

    def __init__(
        self,
        engine: Engine,
        channel: Channel,
        state: MasterState,
        on_record: RecordSink | None = None,
        on_miss: Callable[[int, SimTime], None] | None = None,
    ) -> None:
        if not state.roster:
            raise EmptyRoster("roster is empty")
        self.engine = engine
        self.channel = channel
        self.state = state
        self.on_record = on_record
        self.on_miss = on_miss
        self.rng = engine.stream(MASTER_STREAM)
        self.slots: list[SlotOutcome] = []
        self._slot_index = -1
        self._slot_start: SimTime = 0
        self._slot_target = 0
        self.slaves: dict[int, "Slave"] = {}
        engine.register(self, self._dispatch)

    def attach(self, slave: "Slave") -> None:
        self.slaves[slave.id] = slave

    def start(self, until: SimTime) -> None:
        """Schedule every slot start strictly before ``until``."""
        k = 0
        while (t := self.state.slot_start(k)) < until:
            self.engine.schedule(t, self, ("slot", k))
            k += 1

    def _dispatch(self, event) -> None:
        kind, arg = event.payload
        if kind == "slot":
            self.master_start_slot(arg)
        elif kind == "timeout":
            self.master_on_timeout(arg)
        elif kind == "tx_end":
            self._on_tx_end(arg)

    # transmissions

    def _send(self, packet: Packet) -> Transmission:
        tx = self.channel.transmit(MASTER_ID, packet.FRAME_BYTES, self.engine.now, packet)
        self.engine.schedule(tx.end, self, ("tx_end", tx))
        return tx

    def _on_tx_end(self, tx: Transmission) -> None:
        packet = tx.payload
        if isinstance(packet, Poll):
            # broadcast: every slave hears the poll and filters by id
            for slave in self.slaves.values():
                if isinstance(self.channel.deliver(tx, slave.id), Delivered):
                    slave.slave_on_poll(packet)
        elif isinstance(packet, Ack):
            slave = self.slaves.get(packet.target)
            if slave is not None and isinstance(self.channel.deliver(tx, slave.id), Delivered):
                slave.slave_on_ack(packet)

    def receive(self, tx: Transmission) -> None:
        """Called when a slave's transmission ends."""
        if isinstance(self.channel.deliver(tx, MASTER_ID), Delivered):
            try:
                self.master_on_data(tx.payload)
            except StaleData:
                pass

    # protocol operations

    def master_start_slot(self, k: int) -> Transmission:
        st = self.state
        if st.pending is not None:
            raise SlotOverrun(f"slot {k} starts while the exchange with {st.pending.target:#x} is open")
        target = master_next_target(st, self.rng)
        self._slot_index = k
        self._slot_start = self.engine.now
        self._slot_target = target
        return self._poll(target, polls=1)

    def _poll(self, target: int, polls: int) -> Transmission:
        st = self.state
        seq = st.next_seq()
        deadline = self.engine.now + seconds(st.timing.poll_timeout)
        st.pending = Pending(target, seq, deadline, polls)
        st.pending.timer = self.engine.schedule(deadline, self, ("timeout", seq))
        st.counters.polls += 1
        return self._send(Poll(target, seq))

    def master_on_data(self, data: Data) -> Transmission:
        st = self.state
        pending = st.pending
        if pending is None or data.seq != pending.seq or data.sender != pending.target:
            st.counters.stale += 1
            raise StaleData(f"data seq {data.seq} from {data.sender:#x} matches no pending poll")
        if pending.timer is not None:
            pending.timer.cancel()
        st.pending = None
        st.consecutive_misses[data.sender] = 0
        ack = self._send(Ack(data.sender, data.seq))
        st.counters.acks += 1
        st.counters.records += 1
        self.slots.append(
            SlotOutcome(self._slot_index, pending.target, self._slot_start, pending.polls, True, data.sample_time)
        )
        if self.on_record is not None:
            self.on_record(data.sender, data.sample_time, data.reading, self.engine.now)
        return ack

    def master_on_timeout(self, seq: int) -> str:
        st = self.state
        pending = st.pending
        if pending is None or pending.seq != seq:
            return "ignored"
        st.counters.timeouts += 1
        if pending.polls <= st.timing.data_retries:
            self._poll(pending.target, pending.polls + 1)
            return "retry"
        st.pending = None
        st.counters.misses += 1
        st.misses[pending.target] += 1
        st.consecutive_misses[pending.target] += 1
        self.slots.append(SlotOutcome(self._slot_index, pending.target, self._slot_start, pending.polls, False))
        if self.on_miss is not None:
            self.on_miss(pending.target, self.engine.now)
        return "miss"


# -- slave -----------------------------------------------------------------


class Phase(str, enum.Enum):
    Idle = "idle"
    Sensing = "sensing"
    Transmitting = "transmitting"
    AwaitAck = "await_ack"


@dataclass
class SlaveState:
    id: int
    phase: Phase = Phase.Idle
    cs_left: int = 0
    ack_left: int = 0
    outgoing: Data | None = None
    timer: EventHandle | None = None
    transmissions: int = 0
    abandoned: int = 0


class Slave:
    """Thermometer node: answers polls carrying its own identification code."""

    def __init__(self, engine: Engine, channel: Channel, master: Master, node_id: int, probe: Probe):
        self.engine = engine
        self.channel = channel
        self.master = master
        self.state = SlaveState(node_id)
        self.probe = probe
        self.rng = engine.stream(node_id)
        engine.register(self, self._dispatch)
        master.attach(self)

    @property
    def id(self) -> int:
        return self.state.id

    @property
    def timing(self) -> ProtocolTiming:
        return self.master.state.timing

    def _dispatch(self, event) -> None:
        kind, arg = event.payload
        if kind == "cs":
            self._carrier_sense(arg)
        elif kind == "tx_end":
            self._on_tx_end(arg)
        elif kind == "ack_timeout":
            self._on_ack_timeout(arg)

    def _clear_timer(self) -> None:
        if self.state.timer is not None:
            self.state.timer.cancel()
            self.state.timer = None

    def sample_now(self) -> tuple[float, SimTime]:
        now = self.engine.now
        amp = self.probe.spec.noise_amp
        noise = self.rng.uniform(-amp, amp)
        return self.probe.read(now / 1e6, noise), now

    def slave_on_poll(self, poll: Poll) -> bool:
        """Returns True when the poll addressed this node and an answer is under way."""
        st = self.state
        if poll.target != st.id:
            return False
        self._clear_timer()
        reading, at = self.sample_now()
        st.outgoing = Data(st.id, poll.seq, reading, at)
        st.phase = Phase.Sensing
        st.cs_left = self.timing.cs_retries
        st.ack_left = self.timing.ack_retries
        st.timer = self.engine.schedule_in(seconds(self.timing.cs_delay), self, ("cs", poll.seq))
        return True

    def _carrier_sense(self, seq: int) -> None:
        st = self.state
        if st.phase is not Phase.Sensing or st.outgoing is None or st.outgoing.seq != seq:
            return
        st.timer = None
        if self.channel.carrier_sense(st.id, self.engine.now) is CarrierState.Idle:
            st.phase = Phase.Transmitting
            st.transmissions += 1
            tx = self.channel.transmit(st.id, Data.FRAME_BYTES, self.engine.now, st.outgoing)
            self.engine.schedule(tx.end, self, ("tx_end", tx))
        elif st.cs_left > 0:
            st.cs_left -= 1
            st.timer = self.engine.schedule_in(seconds(self.timing.cs_backoff), self, ("cs", seq))
        else:
            st.abandoned += 1
            st.phase = Phase.Idle
            st.outgoing = None

    def _on_tx_end(self, tx: Transmission) -> None:
        st = self.state
        self.master.receive(tx)
        if st.phase is Phase.Transmitting and st.outgoing is tx.payload:
            st.phase = Phase.AwaitAck
            st.timer = self.engine.schedule_in(seconds(self.timing.ack_timeout), self, ("ack_timeout", tx.payload.seq))

    def slave_on_ack(self, ack: Ack) -> None:
        st = self.state
        if st.phase is Phase.AwaitAck and st.outgoing is not None and ack.seq == st.outgoing.seq:
            self._clear_timer()
            st.phase = Phase.Idle
            st.outgoing = None

    def _on_ack_timeout(self, seq: int) -> None:
        st = self.state
        if st.phase is not Phase.AwaitAck or st.outgoing is None or st.outgoing.seq != seq:
            return
        st.timer = None
        if st.ack_left > 0:
            # resend the same reading under the same seq; the master drops it if already acked
            st.ack_left -= 1
            st.phase = Phase.Sensing
            st.cs_left = self.timing.cs_retries
            self._carrier_sense(seq)
        else:
            st.phase = Phase.Idle
            st.outgoing = None


def slave_on_poll(slave: Slave, poll: Poll) -> bool:
    return slave.slave_on_poll(poll)


def master_start_slot(master: Master, k: int) -> Transmission:
    return master.master_start_slot(k)


def master_on_data(master: Master, data: Data) -> Transmission:
    return master.master_on_data(data)


def master_on_timeout(master: Master, seq: int) -> str:
    return master.master_on_timeout(seq)


__all__ = [
    "ProtocolError",
    "EmptyRoster",
    "SlotOverrun",
    "StaleData",
    "Tag",
    "Poll",
    "Data",
    "Ack",
    "Packet",
    "encode",
    "decode",
    "ProtocolTiming",
    "Policy",
    "DelayStats",
    "measurement_delay",
    "SlotOutcome",
    "MasterState",
    "MasterCounters",
    "master_next_target",
    "Master",
    "Phase",
    "SlaveState",
    "Slave",
    "slave_on_poll",
    "master_start_slot",
    "master_on_data",
    "master_on_timeout",
]
