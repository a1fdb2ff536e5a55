import pytest

from thermomon.channel import ChannelParams
from thermomon.experiments.network import Deployment, Node
from thermomon.protocol import ProtocolTiming
from thermomon.sensor import BodyConstant, SensorSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def make_deployment():
    def build(n=1, distance=5.0, scenario="S4", seed=1, timing=None, keep_log=True, trace=False, **params):
        nodes = [Node(0x100 + i, f"p{i}", distance) for i in range(n)]
        return Deployment(
            nodes,
            BodyConstant(37.0),
            ChannelParams.for_scenario(scenario, **params),
            timing or ProtocolTiming(),
            SensorSpec(),
            seed,
            keep_log=keep_log,
            trace=trace,
        )

    return build


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
