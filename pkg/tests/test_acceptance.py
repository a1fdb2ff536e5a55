"""End-to-end acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (also shown in the pytest terminal
summary) before asserting, so a red criterion still reports its measured value.
"""

from conftest import ACCEPTANCE_LINES
from thermomon.channel import ChannelParams
from thermomon.experiments import default_spec, run, spec_from_dict
from thermomon.experiments.config import KINDS
from thermomon.experiments.network import Deployment, Node
from thermomon.experiments.runners import (
    connectivity_lookup,
    run_agility,
    run_linearity,
    run_response_time,
    run_scaling,
    run_stability,
    run_wired_baseline,
)
from thermomon.protocol import Ack, Data, Poll, ProtocolTiming
from thermomon.sensor import BodyConstant, Probe, ProbeState, RoomAmbient, SensorSpec


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_stability():
    worst_raw = worst_p2p = 0.0
    for seed in range(1, 21):
        m = run_stability(default_spec("stability").with_seed(seed)).metrics
        worst_raw = max(worst_raw, m["raw_peak_deviation_c"])
        worst_p2p = max(worst_p2p, m["smoothed_peak_to_peak_c"])
    ok = worst_raw <= 0.125 + 0.005 + 1e-9 and worst_p2p < 0.25
    report(1, "stability", ok, f"20 seeds, max |raw-37|={worst_raw:.3f} (<=0.130), smoothed p-p={worst_p2p:.3f} (<0.25)")


def test_criterion_02_wired_baseline():
    worst = max(
        run_wired_baseline(default_spec("wired").with_seed(seed)).metrics["max_deviation_c"] for seed in range(1, 21)
    )
    report(2, "wired baseline", worst <= 0.059 + 1e-9, f"20 seeds, max |reading-37|={worst:.3f} (<=0.059)")


def test_criterion_03_linearity():
    ideal = run_linearity(spec_from_dict({"kind": "linearity", "sensor": {"noise_amp": 0.0}})).metrics
    slope_ok = abs(ideal["fit_slope"] - 1.0) <= 1e-6 and abs(ideal["fit_intercept"]) <= 1e-6
    biased = spec_from_dict({"kind": "linearity", "sensor": {"bias_fraction": 1.0}})
    mses = [run_linearity(biased.with_seed(seed)).metrics["mse_c2"] for seed in range(1, 6)]
    ok = slope_ok and max(mses) <= 0.357
    report(
        3,
        "linearity",
        ok,
        f"zero-noise slope={ideal['fit_slope']:.9f} intercept={ideal['fit_intercept']:.2e}; "
        f"biased MSE over 5 seeds max={max(mses):.4f} (<=0.357)",
    )


def test_criterion_04_response_time():
    worst = {"slow": 0.0, "fast": 0.0}
    ordered = True
    for seed in range(1, 21):
        m = run_response_time(default_spec("response").with_seed(seed)).metrics
        for name in worst:
            got, want = m[f"steady_lag_{name}_c"], m[f"expected_lag_{name}_c"]
            worst[name] = max(worst[name], abs(got - want) / want)
        ordered &= m["steady_lag_fast_c"] > m["steady_lag_slow_c"]
    ok = ordered and max(worst.values()) <= 0.02
    report(
        4,
        "response time",
        ok,
        f"20 seeds, worst relative lag error slow={worst['slow']:.2%} fast={worst['fast']:.2%} (<=2%), "
        f"fast>slow on every seed={ordered}",
    )


def test_criterion_05_agility():
    found = [run_agility(default_spec("agility").with_seed(seed)).metrics["qualifying_td_s"] for seed in range(1, 101)]
    tally = {td: found.count(td) for td in sorted(set(found), key=lambda v: (v is None, v))}
    hits = tally.get(12.0, 0)
    report(5, "agility", hits == 100, f"smallest qualifying t_d == 12 s on {hits}/100 seeds; tally {tally}")


def test_criterion_06_connectivity():
    look = connectivity_lookup(run(default_spec("connectivity")))
    problems = []
    for scen in ("S1", "S2"):
        for d in (10.0, 20.0, 30.0):
            if look[(scen, d)] < 0.95:
                problems.append(f"{scen}@{d:g}m={look[(scen, d)]:.3f}")
        far = [look[(scen, d)] for d in (30.0, 40.0, 50.0)]
        if not (far[0] > far[1] > far[2]):
            problems.append(f"{scen} 30-50m not strictly decreasing {far}")
    s4 = [look[("S4", d)] for d in (10.0, 20.0, 30.0, 40.0, 50.0)]
    if min(s4) < 0.95:
        problems.append(f"S4 min={min(s4):.3f}")
    summary = ", ".join(
        f"{s}: " + "/".join(f"{look[(s, d)]:.2f}" for d in (10.0, 20.0, 30.0, 40.0, 50.0)) for s in ("S1", "S2", "S4")
    )
    report(6, "connectivity", not problems, f"means 10..50 m {summary}" + (f"; {problems}" if problems else ""))


def _trace_transmissions(trace):
    return [ev[3][1] for ev in trace if isinstance(ev[3], tuple) and ev[3][0] == "tx_end"]


def test_criterion_07_protocol_safety():
    n = 8
    nodes = [Node(0x5E1100000001 + i, f"patient-{i + 1}", 28.0 + 2.0 * i) for i in range(n)]
    dep = Deployment(
        nodes,
        BodyConstant(37.0),
        ChannelParams.for_scenario("S1"),
        ProtocolTiming(),
        SensorSpec(),
        seed=20240607,
        keep_log=True,
        trace=True,
    )
    slots = 10_000
    dep.run(slots / n)
    txs = _trace_transmissions(dep.engine.trace)
    assert len(txs) == len(dep.channel.log)

    data = sorted((tx for tx in txs if isinstance(tx.payload, Data)), key=lambda tx: tx.start)
    collisions = sum(1 for a, b in zip(data, data[1:]) if b.start < a.end)
    # with sorted starts, any overlap implies an overlap between neighbours
    acks = sum(isinstance(tx.payload, Ack) for tx in txs)
    records = len(dep.pipeline.records)

    slot_events = [ev for ev in dep.engine.trace if isinstance(ev[3], tuple) and ev[3][0] == "slot"]
    poll_at = {}
    for tx in txs:
        if isinstance(tx.payload, Poll):
            poll_at.setdefault(tx.start, tx.payload.target)
    # the opening poll of each slot goes out at the slot-start instant
    targets = [poll_at[fire_at] for fire_at, *_ in slot_events]
    roster = [node.id for node in nodes]
    fair = len(targets) == slots and all(
        sorted(targets[i : i + n]) == roster for i in range(0, slots, n)
    )
    lossy = dep.state.counters.misses > 0 and dep.state.counters.timeouts > 0
    ok = collisions == 0 and acks == records and fair and lossy
    report(
        7,
        "protocol safety",
        ok,
        f"{len(slot_events)} slots, {len(txs)} transmissions, data/data collisions={collisions}, "
        f"records={records} acks={acks}, each node once per {n} slots={fair}, "
        f"timeouts={dep.state.counters.timeouts} misses={dep.state.counters.misses}",
    )


def test_criterion_08_scaling():
    m = run_scaling(default_spec("scaling")).metrics
    ok = m["fit_residual"] < 0.01 and not any(m["overruns"])
    report(
        8,
        "scaling",
        ok,
        f"N={m['n_grid']} round={m['min_round_period_s']} slope={m['slope_s_per_node']:.4f} s/node "
        f"residual={m['fit_residual']:.2e} (<1%)",
    )


def test_criterion_09_determinism():
    differing = []
    for kind in KINDS:
        spec = default_spec(kind).with_seed(7)
        a, b = run(spec), run(spec)
        if a.metrics_json() != b.metrics_json() or a.series_csv() != b.series_csv():
            differing.append(kind)
    report(9, "determinism", not differing, f"{len(KINDS)} experiments re-run at seed 7, differing={differing}")


def _rk4(f, y, t, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_criterion_10_probe_oracle():
    spec = default_spec("agility")
    p = spec.params
    tau = spec.sensor.tau
    bundle = run_agility(spec)
    # contact windows in whole milliseconds, recovered from the buffered readings
    windows = [
        (round((t - td) * 1000), round(t * 1000)) for (t, *_), td in zip(bundle.series, p.td_grid_s)
    ]
    end_ms = windows[-1][1] + 30_000

    def env_at(ms: int) -> float:
        return p.body_c if any(a <= ms < b for a, b in windows) else p.room_c

    probe = Probe(spec.sensor.spec(), BodyConstant(p.body_c), RoomAmbient(p.room_c), ProbeState(p.room_c, False, 0.0))
    switches = {x for w in windows for x in w}
    y = p.room_c
    h = 1e-3
    worst = 0.0
    checks = 0
    for ms in range(end_ms):
        if ms in switches:
            probe.set_contact(env_at(ms) == p.body_c, ms / 1000)
        env = env_at(ms)
        y = _rk4(lambda _t, v: (env - v) / tau, y, ms * h, h)
        if (ms + 1) % 100 == 0:
            closed = probe.advance_to((ms + 1) / 1000).probe_temp
            worst = max(worst, abs(closed - y))
            checks += 1
    report(
        10,
        "probe physics oracle",
        worst <= 1e-6,
        f"{checks} checkpoints over {end_ms / 1000:.0f} s, max |closed form - RK4(1 ms)|={worst:.2e} (<=1e-6)",
    )
