"""A wireless deployment: one central node, N thermometers, one pipeline."""

from __future__ import annotations

from dataclasses import dataclass

from ..channel import Channel, ChannelParams, NodeKinematics
from ..engine import CHANNEL_STREAM, Engine, SimTime, seconds
from ..monitor import Pipeline, PipelineConfig, ReadingRecord, SlotResult
from ..protocol import Master, MasterState, Policy, ProtocolTiming, Slave
from ..sensor import Probe, SensorSpec, TemperatureSource


@dataclass(frozen=True)
class Node:
    id: int
    patient: str
    distance_m: float
    velocity_mps: float = 0.0


@dataclass(frozen=True)
class SeriesRow:
    time_s: float
    thermometer: int
    raw: float
    smoothed: float | None
    truth: float


class Deployment:
    """Builds and runs one seeded wireless monitoring scenario."""

    def __init__(
        self,
        nodes: list[Node],
        source: TemperatureSource,
        channel_params: ChannelParams,
        timing: ProtocolTiming,
        sensor: SensorSpec,
        seed: int,
        pipeline_config: PipelineConfig | None = None,
        policy: Policy | str = Policy.Sequential,
        bias_fraction: float = 0.0,
        keep_log: bool = False,
        trace: bool = False,
    ) -> None:
        self.engine = Engine(seed=seed, trace_enabled=trace)
        self.channel = Channel(channel_params, self.engine.stream(CHANNEL_STREAM), keep_log=keep_log)
        self.pipeline = Pipeline(pipeline_config, {n.id: n.patient for n in nodes})
        self.state = MasterState([n.id for n in nodes], timing, Policy(policy))
        self.master = Master(self.engine, self.channel, self.state, self._on_record, self._on_miss)
        self.slaves: dict[int, Slave] = {}
        self.rows: list[SeriesRow] = []
        self._results: dict[int, list[SlotResult]] = {n.id: [] for n in nodes}
        for node in nodes:
            self.channel.add_node(NodeKinematics(node.id, node.distance_m, node.velocity_mps))
            spec = sensor
            if bias_fraction:
                spec = sensor.with_unit_bias(self.engine.stream(node.id), bias_fraction)
            self.slaves[node.id] = Slave(self.engine, self.channel, self.master, node.id, Probe(spec, source))

    def _on_record(self, node_id: int, sample_time: SimTime, reading: float, _received: SimTime) -> None:
        self.pipeline.ingest(ReadingRecord(node_id, self.pipeline.patients[node_id], sample_time, reading))
        stored = self.pipeline.records[-1]
        t = sample_time / 1e6
        truth = self.slaves[node_id].probe.truth(t)
        self.rows.append(SeriesRow(t, node_id, reading, stored.smoothed, truth))
        self._results[node_id].append(SlotResult(True, reading, t))

    def _on_miss(self, node_id: int, at: SimTime) -> None:
        self.pipeline.note_miss(node_id, at)
        self._results[node_id].append(SlotResult(False))

    def run(self, duration_s: float) -> None:
        """Poll every slot starting before ``duration_s``, then let the last exchange close."""
        until = seconds(duration_s)
        self.master.start(until)
        self.engine.run_until(until + seconds(self.state.timing.worst_case_exchange) + 1)

    def slot_results(self, node_id: int) -> list[SlotResult]:
        return list(self._results[node_id])
