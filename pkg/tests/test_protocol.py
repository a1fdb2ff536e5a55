from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermomon.channel import MASTER_ID, LostWeakSignal, NodeKinematics
from thermomon.engine import RngStream, seconds
from thermomon.protocol import (
    Ack,
    Data,
    EmptyRoster,
    MasterState,
    Phase,
    Policy,
    Poll,
    ProtocolTiming,
    SlotOverrun,
    StaleData,
    decode,
    encode,
    master_next_target,
    measurement_delay,
)


def data_tx(dep):
    return [tx for tx in dep.channel.log if isinstance(tx.payload, Data)]


def acks(dep):
    return [tx for tx in dep.channel.log if isinstance(tx.payload, Ack)]


def polls(dep):
    return [tx for tx in dep.channel.log if isinstance(tx.payload, Poll)]


# -- packets


@pytest.mark.parametrize(
    "packet", [Poll(0x1122334455667788, 7), Ack(0xFFFFFFFFFFFFFFFF, 65535), Data(0xABC, 3, 36.99, 0)]
)
def test_wire_roundtrip(packet):
    raw = encode(packet)
    assert len(raw) == (13 if isinstance(packet, Data) else 11)
    assert decode(raw) == packet


def test_data_reading_is_signed_centidegrees():
    raw = encode(Data(1, 1, -12.34, 0))
    assert raw[-2:] == (-1234).to_bytes(2, "big", signed=True)
    assert raw[0] == 2


# -- target selection


def test_sequential_cycles_roster():
    st_ = MasterState(["A", "B", "C"], ProtocolTiming(round_period=0.3))
    assert [master_next_target(st_) for _ in range(4)] == ["A", "B", "C", "A"]


def test_random_singleton():
    st_ = MasterState([9], ProtocolTiming(), Policy.Random)
    rng = RngStream(1, 0)
    assert {master_next_target(st_, rng) for _ in range(50)} == {9}


def test_random_is_uniform():
    st_ = MasterState(["A", "B"], ProtocolTiming(), Policy.Random)
    rng = RngStream(2024, 0)
    counts = Counter(master_next_target(st_, rng) for _ in range(10_000))
    assert abs(counts["A"] / 10_000 - 0.5) <= 0.03
    assert abs(counts["B"] / 10_000 - 0.5) <= 0.03


def test_empty_roster():
    with pytest.raises(EmptyRoster):
        master_next_target(MasterState([], ProtocolTiming()))


def test_duplicate_ids_rejected():
    with pytest.raises(Exception):
        MasterState([1, 1], ProtocolTiming())


# -- slot timing


def test_two_nodes_polled_at_slot_offsets(make_deployment):
    dep = make_deployment(n=2)
    dep.run(3.0)
    starts = [tx.start for tx in polls(dep)]
    assert starts == [0, 500_000, 1_000_000, 1_500_000, 2_000_000, 2_500_000]
    assert [tx.payload.target for tx in polls(dep)] == [0x100, 0x101] * 3


def test_single_node_polled_once_per_second(make_deployment):
    dep = make_deployment(n=1)
    dep.run(60.0)
    assert [tx.start for tx in polls(dep)] == [seconds(k) for k in range(60)]
    assert len(dep.pipeline.records) == 60


def test_slot_times_n_equal_round(make_deployment):
    dep = make_deployment(n=3, timing=ProtocolTiming(round_period=0.9))
    st_ = dep.state
    assert st_.slot_start(3) == st_.round_ticks
    assert st_.slot * 3 == pytest.approx(0.9)


def test_happy_path_exchange(make_deployment):
    dep = make_deployment(n=1)
    dep.run(1.0)
    (poll,), (data,), (ack,) = polls(dep), data_tx(dep), acks(dep)
    timing = dep.state.timing
    assert data.start == poll.end + seconds(timing.cs_delay)
    assert ack.start == data.end
    assert data.payload.seq == poll.payload.seq == ack.payload.seq
    assert dep.slaves[0x100].state.phase is Phase.Idle
    assert len(dep.pipeline.records) == 1


def test_mismatched_target_is_ignored(make_deployment):
    dep = make_deployment(n=2)
    other = dep.slaves[0x101]
    assert other.slave_on_poll(Poll(0x100, 1)) is False
    assert other.state.phase is Phase.Idle
    dep.engine.run_until(seconds(0.1))
    assert data_tx(dep) == []


def test_lossless_channel_has_no_timeouts(make_deployment):
    dep = make_deployment(n=4)
    dep.run(30.0)
    c = dep.state.counters
    assert c.timeouts == c.misses == c.stale == 0
    assert c.records == c.acks == 120


def test_forced_loss_repolls_then_misses(make_deployment, monkeypatch):
    dep = make_deployment(n=1)
    monkeypatch.setattr(dep.channel, "deliver", lambda tx, rx, shadow_draw=None: LostWeakSignal(-120.0))
    dep.run(2.0)
    timing = dep.state.timing
    assert dep.state.counters.polls == 2 * (1 + timing.data_retries)
    assert dep.state.counters.misses == 2
    # re-polls at each timeout; slot boundaries unchanged by the miss
    starts = [tx.start for tx in polls(dep)]
    step = seconds(timing.poll_timeout)
    assert starts == [0, step, 2 * step, 1_000_000, 1_000_000 + step, 1_000_000 + 2 * step]
    assert [s.acknowledged for s in dep.master.slots] == [False, False]


def test_forced_busy_medium_abandons_slot(make_deployment):
    dep = make_deployment(n=1)
    # a jammer beside the slave holds the medium for 50 ms after the poll
    dep.channel.add_node(NodeKinematics(0xDEAD, 5.5))
    dep.master.start(seconds(0.5))
    dep.engine.run_until(500)  # poll on air
    dep.channel.transmit(0xDEAD, 1600, 400)
    dep.engine.run_until(seconds(0.5))
    slave = dep.slaves[0x100]
    # first poll heard then abandoned; re-polls overlap the jammer and collide at the slave
    assert slave.state.abandoned == 1
    assert data_tx(dep) == []
    assert dep.state.counters.misses == 1


def test_busy_retries_follow_backoff(make_deployment):
    dep = make_deployment(n=1)
    dep.channel.add_node(NodeKinematics(0xDEAD, 5.5))
    calls = []
    original = dep.channel.carrier_sense

    def spy(node, at):
        calls.append(at)
        return original(node, at)

    dep.channel.carrier_sense = spy
    dep.master.start(1)
    dep.engine.run_until(500)
    dep.channel.transmit(0xDEAD, 1600, 400)  # 51.2 ms on air
    dep.engine.run_until(seconds(0.019))
    timing = dep.state.timing
    first = 384 + seconds(timing.cs_delay)
    assert calls == [first + k * seconds(timing.cs_backoff) for k in range(1 + timing.cs_retries)]
    assert dep.slaves[0x100].state.abandoned == 1
    assert data_tx(dep) == []


def test_lost_ack_retransmission_is_dropped_as_stale(make_deployment, monkeypatch):
    dep = make_deployment(n=1)
    real = dep.channel.deliver
    dropped = []

    def lose_first_ack(tx, rx, shadow_draw=None):
        if isinstance(tx.payload, Ack) and not dropped:
            dropped.append(tx)
            return LostWeakSignal(-120.0)
        return real(tx, rx, shadow_draw)

    monkeypatch.setattr(dep.channel, "deliver", lose_first_ack)
    dep.run(1.0)
    sent = data_tx(dep)
    assert len(sent) == 2 and sent[0].payload == sent[1].payload
    assert dep.state.counters.stale == 1
    assert len(dep.pipeline.records) == 1
    assert len(acks(dep)) == 1


def test_data_after_timeout_is_stale(make_deployment):
    dep = make_deployment(n=1)
    dep.master.master_start_slot(0)
    first_seq = dep.state.pending.seq
    dep.state.pending.timer.cancel()
    for _ in range(1 + dep.state.timing.data_retries):
        dep.master.master_on_timeout(dep.state.pending.seq)
    assert dep.state.pending is None
    with pytest.raises(StaleData):
        dep.master.master_on_data(Data(0x100, first_seq, 37.0, 0))
    assert dep.state.counters.stale == 1


def test_slot_overrun_when_exchange_open(make_deployment):
    dep = make_deployment(n=1)
    dep.master.master_start_slot(0)
    with pytest.raises(SlotOverrun):
        dep.master.master_start_slot(1)


def test_every_record_has_one_ack_under_loss(make_deployment):
    dep = make_deployment(n=3, distance=36.0, scenario="S1", seed=5)
    dep.run(120.0)
    assert len(dep.pipeline.records) == len(acks(dep)) == dep.state.counters.records
    assert dep.state.counters.misses > 0


# -- delay arithmetic


def test_measurement_delay_examples():
    assert measurement_delay(1, min_slot=0.020).min_feasible_round == pytest.approx(0.020)
    assert measurement_delay(10, min_slot=0.020).min_feasible_round == pytest.approx(0.200)
    two = measurement_delay(2, round_period=1.0)
    assert two.per_node_interval == 1.0 and two.slot == 0.5
    with pytest.raises(ValueError):
        measurement_delay(0)


@given(st.integers(1, 200))
def test_min_round_linear_in_n(n):
    assert measurement_delay(n, min_slot=0.1).min_feasible_round == pytest.approx(0.1 * n)


def test_feasible_slot_covers_worst_exchange():
    t = ProtocolTiming(poll_timeout=0.05, data_retries=3, min_slot=0.1)
    assert t.worst_case_exchange == pytest.approx(0.2)
    assert t.feasible_slot == pytest.approx(0.2)
