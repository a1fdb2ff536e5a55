"""The seven experiments. Each takes an ``ExperimentSpec`` and returns a ``ReportBundle``."""

from __future__ import annotations

import math
import warnings
from dataclasses import replace

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from ..channel import ScenarioKind
from ..engine import Engine, derive_seed, seconds
from ..monitor import connectivity, mse
from ..protocol import SlotOverrun, measurement_delay
from ..sensor import BodyConstant, HeaterProfile, Probe, ProbeState, RoomAmbient
from .config import (
    AgilityParams,
    ConfigError,
    ConnectivityParams,
    ExperimentSpec,
    LinearityParams,
    ResponseParams,
    ScalingParams,
    default_thermometers,
    validate,
)
from .network import Deployment, Node
from .report import ReportBundle, node_label

METRIC_KEYS = {
    "stability": {
        "samples_per_thermometer", "raw_peak_deviation_c", "smoothed_peak_deviation_c",
        "smoothed_peak_to_peak_c", "mean_spread_c", "per_thermometer",
    },
    "wired": {"samples", "max_deviation_c", "mean_c", "noise_amp_c"},
    "linearity": {
        "setpoints_c", "readings_c", "mse_c2", "rmse_c", "max_deviation_c", "fit_slope", "fit_intercept",
    },
    "response": {
        "tau_s", "segments", "max_lag_slow_c", "max_lag_fast_c", "steady_lag_slow_c", "steady_lag_fast_c",
        "expected_lag_slow_c", "expected_lag_fast_c", "plateau_c", "settling_time_s", "samples",
    },
    "agility": {
        "td_grid_s", "readings_c", "errors_c", "qualifying_td_s", "accuracy_c", "mercury_dwell_s", "speedup",
    },
    "connectivity": {"table", "repeats", "duration_s"},
    "scaling": {
        "n_grid", "min_slot_s", "min_round_period_s", "per_node_interval_s", "measured_interval_s",
        "slope_s_per_node", "fit_residual", "overruns",
    },
}


def _nodes(spec: ExperimentSpec, velocity: float = 0.0, distance: float | None = None) -> list[Node]:
    d = spec.scenario.distance_m if distance is None else distance
    return [Node(t.id, t.patient, t.distance_m if t.distance_m is not None else d, velocity) for t in spec.thermometers]


def _deployment(spec: ExperimentSpec, source, seed: int | None = None, **kw) -> Deployment:
    scenario = kw.pop("scenario", spec.scenario.kind)
    velocity = kw.pop("velocity", spec.scenario.speed_mps)
    nodes = kw.pop("nodes", None) or _nodes(spec, velocity, kw.pop("distance", None))
    timing = kw.pop("timing", None) or spec.protocol.timing()
    return Deployment(
        nodes,
        source,
        spec.channel.params(scenario),
        timing,
        spec.sensor.spec(),
        spec.seed if seed is None else seed,
        pipeline_config=spec.pipeline,
        policy=spec.protocol.policy,
        bias_fraction=spec.sensor.bias_fraction,
        **kw,
    )


def _rows(dep: Deployment) -> list[tuple]:
    return [(r.time_s, r.thermometer, r.raw, r.smoothed, r.truth) for r in dep.rows]


def _bundle(spec: ExperimentSpec, metrics: dict, series=(), alerts=()) -> ReportBundle:
    missing = METRIC_KEYS[spec.kind] ^ set(metrics)
    if missing:
        raise AssertionError(f"metric keys drifted: {sorted(missing)}")
    return ReportBundle(spec.kind, spec.seed, spec.config_hash(), metrics, list(series), list(alerts))


def _require(spec: ExperimentSpec, kind: str) -> None:
    if spec.kind != kind:
        raise ConfigError(f"kind: expected a {kind} spec, got {spec.kind!r}")
    validate(spec)


# -- stability -------------------------------------------------------------


def run_stability(spec: ExperimentSpec) -> ReportBundle:
    _require(spec, "stability")
    body = spec.params.body_c
    dep = _deployment(spec, BodyConstant(body))
    dep.run(spec.duration_s)
    per = {}
    for t in spec.thermometers:
        recs = dep.pipeline.smoothed_series(t.id)
        if not recs:
            raise ConfigError(f"thermometer {t.id:#x} delivered no readings; move it closer")
        raw = np.array([r.raw for r in recs])
        sm = np.array([r.smoothed for r in recs])
        per[node_label(t.id)] = {
            "samples": len(recs),
            "mean_c": float(raw.mean()),
            "raw_peak_deviation_c": float(np.max(np.abs(raw - body))),
            "smoothed_peak_deviation_c": float(np.max(np.abs(sm - body))),
            "smoothed_peak_to_peak_c": float(sm.max() - sm.min()),
        }
    means = [v["mean_c"] for v in per.values()]
    metrics = {
        "samples_per_thermometer": min(v["samples"] for v in per.values()),
        "raw_peak_deviation_c": max(v["raw_peak_deviation_c"] for v in per.values()),
        "smoothed_peak_deviation_c": max(v["smoothed_peak_deviation_c"] for v in per.values()),
        "smoothed_peak_to_peak_c": max(v["smoothed_peak_to_peak_c"] for v in per.values()),
        "mean_spread_c": max(means) - min(means),
        "per_thermometer": per,
    }
    return _bundle(spec, metrics, _rows(dep), dep.pipeline.alerts)


# -- wired baseline --------------------------------------------------------


def run_wired_baseline(spec: ExperimentSpec) -> ReportBundle:
    """Direct, lossless readout of one probe; no radio and no smoothing."""
    _require(spec, "wired")
    body = spec.params.body_c
    node = spec.thermometers[0].id
    engine = Engine(seed=spec.seed)
    sensor = spec.sensor.spec()
    if spec.sensor.bias_fraction:
        sensor = sensor.with_unit_bias(engine.stream(node), spec.sensor.bias_fraction)
    probe = Probe(sensor, BodyConstant(body))
    rng = engine.stream(node)
    rows: list[tuple] = []

    def on_sample(event) -> None:
        t = engine.now / 1e6
        noise = rng.uniform(-sensor.noise_amp, sensor.noise_amp)
        rows.append((t, node, probe.read(t, noise), None, body))

    engine.register("sampler", on_sample)
    period = seconds(spec.params.sample_period_s)
    k = 0
    while k * period < seconds(spec.duration_s):
        engine.schedule(k * period, "sampler")
        k += 1
    engine.run_until(seconds(spec.duration_s))
    raw = np.array([r[2] for r in rows])
    metrics = {
        "samples": len(rows),
        "max_deviation_c": float(np.max(np.abs(raw - body))),
        "mean_c": float(raw.mean()),
        "noise_amp_c": sensor.noise_amp,
    }
    return _bundle(spec, metrics, rows)


# -- linearity -------------------------------------------------------------


def run_linearity(spec: ExperimentSpec) -> ReportBundle:
    """Heater staircase over the setpoints; the reading closing each dwell is compared to the setpoint."""
    _require(spec, "linearity")
    p: LinearityParams = spec.params
    heater = HeaterProfile.staircase(p.setpoints_c, p.dwell_s, p.step_rate)
    dep = _deployment(spec, heater)
    dep.run(max(spec.duration_s, len(p.setpoints_c) * p.dwell_s))
    node = spec.thermometers[0].id
    recs = dep.pipeline.smoothed_series(node)
    readings, rows = [], []
    for i, setpoint in enumerate(p.setpoints_c):
        hold_end = (i + 1) * p.dwell_s
        window = [r for r in recs if hold_end - p.dwell_s / 2 <= r.at / 1e6 < hold_end]
        if not window:
            raise ConfigError(f"no reading closed the {setpoint} °C dwell; the link is too lossy")
        last = window[-1]
        readings.append(last.raw)
        rows.append((last.at / 1e6, node, last.raw, None, float(setpoint)))
    ref = np.array(p.setpoints_c, dtype=float)
    got = np.array(readings)
    err = mse(got, ref)
    if len(ref) >= 2 and np.ptp(ref) > 0:
        slope, intercept = np.polyfit(ref, got, 1)
    else:
        slope, intercept = float("nan"), float("nan")
    metrics = {
        "setpoints_c": [float(x) for x in ref],
        "readings_c": [float(x) for x in got],
        "mse_c2": err.mse,
        "rmse_c": err.rmse,
        "max_deviation_c": float(np.max(np.abs(got - ref))),
        "fit_slope": float(slope),
        "fit_intercept": float(intercept),
    }
    return _bundle(spec, metrics, rows, dep.pipeline.alerts)


# -- response time ---------------------------------------------------------


def _lag_model(t, steady, amplitude, tau):
    return steady - amplitude * np.exp(-t / tau)


def fit_steady_lag(t: np.ndarray, lag: np.ndarray) -> tuple[float, float]:
    """Fit ``lag(t) = L - A exp(-t / tau)`` and return ``(L, tau)``.

    ``t`` is measured from the start of the ramp segment.
    """
    if t.size < 4:
        return float("nan"), float("nan")
    guess = (float(lag[-1]), float(lag[-1] - lag[0]), max(float(t[-1]) / 4, 0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        try:
            (steady, _, tau), _ = curve_fit(_lag_model, t, lag, p0=guess, maxfev=20000)
        except RuntimeError:
            return float("nan"), float("nan")
    return float(steady), float(tau)


def run_response_time(spec: ExperimentSpec) -> ReportBundle:
    _require(spec, "response")
    p: ResponseParams = spec.params
    heater = HeaterProfile(p.start_c, p.segments, p.hold_s)
    dep = _deployment(spec, heater)
    duration = max(spec.duration_s, heater.total_duration)
    dep.run(duration)
    node = spec.thermometers[0].id
    recs = dep.pipeline.smoothed_series(node)
    t = np.array([r.at / 1e6 for r in recs])
    raw = np.array([r.raw for r in recs])
    truth = np.array([heater.value_at(x) for x in t])
    lag = truth - raw
    tau = spec.sensor.tau

    segments = []
    edges = heater.breakpoints()
    for (rate, seg_len), a, b in zip(heater.segments, edges, edges[1:]):
        m = (t > a) & (t <= b)
        entry = {
            "rate_c_per_s": rate,
            "duration_s": seg_len,
            "samples": int(m.sum()),
            "max_lag_c": float(lag[m].max()) if m.any() else float("nan"),
            "expected_lag_c": rate * tau,
            "steady_lag_c": float("nan"),
            "fitted_tau_s": float("nan"),
        }
        if rate != 0 and m.any():
            entry["steady_lag_c"], entry["fitted_tau_s"] = fit_steady_lag(t[m] - a, lag[m])
        segments.append(entry)
    ramps = [s for s in segments if s["rate_c_per_s"] != 0]
    slow = min(ramps, key=lambda s: abs(s["rate_c_per_s"]))
    fast = max(ramps, key=lambda s: abs(s["rate_c_per_s"]))

    plateau = heater.plateau
    after = t >= heater.ramp_end
    settling = None
    if after.any():
        bad = np.nonzero(after & (np.abs(raw - plateau) > spec.sensor.accuracy))[0]
        first_after = int(np.nonzero(after)[0][0])
        idx = first_after if bad.size == 0 else int(bad[-1]) + 1
        if idx < len(t):
            settling = float(t[idx] - heater.ramp_end)

    metrics = {
        "tau_s": tau,
        "segments": segments,
        "max_lag_slow_c": slow["max_lag_c"],
        "max_lag_fast_c": fast["max_lag_c"],
        "steady_lag_slow_c": slow["steady_lag_c"],
        "steady_lag_fast_c": fast["steady_lag_c"],
        "expected_lag_slow_c": slow["expected_lag_c"],
        "expected_lag_fast_c": fast["expected_lag_c"],
        "plateau_c": plateau,
        "settling_time_s": settling,
        "samples": len(recs),
    }
    return _bundle(spec, metrics, _rows(dep), dep.pipeline.alerts)


# -- agility ---------------------------------------------------------------


def run_agility(spec: ExperimentSpec) -> ReportBundle:
    """Contact for each t_d, buffer the reading at t_d, rest until the probe reads room temperature."""
    _require(spec, "agility")
    p: AgilityParams = spec.params
    node = spec.thermometers[0].id
    engine = Engine(seed=spec.seed)
    sensor = spec.sensor.spec()
    if spec.sensor.bias_fraction:
        sensor = sensor.with_unit_bias(engine.stream(node), spec.sensor.bias_fraction)
    rng = engine.stream(node)
    probe = Probe(sensor, BodyConstant(p.body_c), RoomAmbient(p.room_c), ProbeState(p.room_c, False, 0.0))
    readings: list[float] = []
    rows: list[tuple] = []
    grid = list(p.td_grid_s)
    rest_started = [0.0]

    def rested(t: float) -> bool:
        return abs(probe.advance_to(t).probe_temp - p.room_c) < sensor.resolution / 2

    def handler(event) -> None:
        kind = event.payload
        t = engine.now / 1e6
        if kind == "contact":
            probe.set_contact(True, t)
            engine.schedule_in(seconds(grid[len(readings)]), "agility", "buffer")
        elif kind == "buffer":
            noise = rng.uniform(-sensor.noise_amp, sensor.noise_amp)
            value = probe.read(t, noise)
            readings.append(value)
            rows.append((t, node, value, None, p.body_c))
            probe.set_contact(False, t)
            rest_started[0] = t
            if len(readings) < len(grid):
                engine.schedule_in(seconds(p.rest_check_s), "agility", "rest")
        elif kind == "rest":
            if rested(t) or t - rest_started[0] >= p.max_rest_s:
                engine.schedule(engine.now, "agility", "contact")
            else:
                engine.schedule_in(seconds(p.rest_check_s), "agility", "rest")

    engine.register("agility", handler)
    engine.schedule(0, "agility", "contact")
    engine.run_until(seconds(sum(grid) + len(grid) * (p.max_rest_s + p.rest_check_s)))

    errors = [abs(r - p.body_c) for r in readings]
    qualifying = next((td for td, e in zip(grid, errors) if e <= sensor.accuracy + 1e-9), None)
    metrics = {
        "td_grid_s": [float(x) for x in grid],
        "readings_c": readings,
        "errors_c": errors,
        "qualifying_td_s": qualifying,
        "accuracy_c": sensor.accuracy,
        "mercury_dwell_s": p.mercury_dwell_s,
        "speedup": None if not qualifying else p.mercury_dwell_s / qualifying,
    }
    return _bundle(spec, metrics, rows)


# -- connectivity ----------------------------------------------------------


def run_connectivity(spec: ExperimentSpec) -> ReportBundle:
    """Connectivity per (scenario, distance), averaged over ``repeats`` derived seeds."""
    _require(spec, "connectivity")
    p: ConnectivityParams = spec.params
    therm = (spec.thermometers or default_thermometers(1))[:1]
    single = replace(spec, thermometers=therm)
    body = BodyConstant(p.body_c)
    table = []
    alerts = []
    for si, scen in enumerate(p.scenarios):
        kind = ScenarioKind.parse(scen)
        velocity = p.s3_speed_mps if kind is ScenarioKind.S3_MovingAway else 0.0
        for distance in p.distances_m:
            values = []
            for rep in range(p.repeats):
                seed = derive_seed(spec.seed, si, int(round(distance * 1000)), rep)
                nodes = [Node(therm[0].id, therm[0].patient, distance, velocity)]
                dep = _deployment(single, body, seed, scenario=kind, nodes=nodes)
                dep.run(spec.duration_s)
                values.append(connectivity(dep.slot_results(therm[0].id), lambda _t: p.body_c, spec.sensor.accuracy))
                alerts.extend(dep.pipeline.alerts)
            arr = np.array(values)
            table.append(
                {
                    "scenario": kind.value,
                    "distance_m": float(distance),
                    "mean": float(arr.mean()),
                    "min": float(arr.min()),
                    "max": float(arr.max()),
                    "std": float(arr.std()),
                    "per_seed": [float(v) for v in values],
                }
            )
    metrics = {"table": table, "repeats": p.repeats, "duration_s": spec.duration_s}
    return _bundle(spec, metrics, (), alerts)


def connectivity_lookup(bundle: ReportBundle) -> dict[tuple[str, float], float]:
    return {(row["scenario"], row["distance_m"]): row["mean"] for row in bundle.metrics["table"]}


# -- scaling ---------------------------------------------------------------


def run_scaling(spec: ExperimentSpec) -> ReportBundle:
    """Shortest workable round per N, checked by simulating a few rounds at exactly that period."""
    _require(spec, "scaling")
    p: ScalingParams = spec.params
    base = spec.protocol.timing()
    min_slot = base.feasible_slot
    rounds, intervals, measured, overruns = [], [], [], []
    for n in p.n_grid:
        stats = measurement_delay(n, n * min_slot, min_slot)
        timing = replace(base, round_period=stats.min_feasible_round)
        therms = default_thermometers(n, p.distance_m)
        dep = _deployment(
            replace(spec, thermometers=therms), BodyConstant(), derive_seed(spec.seed, n),
            nodes=[Node(t.id, t.patient, p.distance_m) for t in therms], timing=timing,
        )
        try:
            dep.run(p.rounds * stats.min_feasible_round)
            overruns.append(0)
        except SlotOverrun:
            overruns.append(1)
        gaps = []
        for t in therms:
            times = [r.at / 1e6 for r in dep.pipeline.smoothed_series(t.id)]
            gaps.extend(np.diff(times))
        rounds.append(stats.min_feasible_round)
        intervals.append(stats.per_node_interval)
        measured.append(float(np.mean(gaps)) if gaps else float("nan"))
    n_arr = np.array(p.n_grid, dtype=float)
    r_arr = np.array(rounds)
    slope = float(n_arr @ r_arr / (n_arr @ n_arr))
    residual = float(np.sqrt(np.mean((r_arr - slope * n_arr) ** 2)) / np.mean(r_arr))
    metrics = {
        "n_grid": [int(n) for n in p.n_grid],
        "min_slot_s": min_slot,
        "min_round_period_s": rounds,
        "per_node_interval_s": intervals,
        "measured_interval_s": measured,
        "slope_s_per_node": slope,
        "fit_residual": residual,
        "overruns": overruns,
    }
    return _bundle(spec, metrics)


RUNNERS = {
    "stability": run_stability,
    "wired": run_wired_baseline,
    "linearity": run_linearity,
    "response": run_response_time,
    "agility": run_agility,
    "connectivity": run_connectivity,
    "scaling": run_scaling,
}


def run(spec: ExperimentSpec) -> ReportBundle:
    return RUNNERS[spec.kind](spec)


# -- threshold checks ------------------------------------------------------


def check_bundle(bundle: ReportBundle) -> list[tuple[str, bool, str]]:
    """Acceptance pass/fail lines for a finished run."""
    m = bundle.metrics
    kind = bundle.kind
    out: list[tuple[str, bool, str]] = []
    if kind == "stability":
        out.append(("raw within 37 ± 0.130", m["raw_peak_deviation_c"] <= 0.13 + 1e-9, f"{m['raw_peak_deviation_c']:.3f}"))
        out.append(("smoothed peak-to-peak < 0.25", m["smoothed_peak_to_peak_c"] < 0.25, f"{m['smoothed_peak_to_peak_c']:.3f}"))
    elif kind == "wired":
        out.append(("max deviation <= 0.059", m["max_deviation_c"] <= 0.059 + 1e-9, f"{m['max_deviation_c']:.3f}"))
    elif kind == "linearity":
        out.append(("mse <= 0.357", m["mse_c2"] <= 0.357, f"{m['mse_c2']:.4f}"))
    elif kind == "response":
        for name in ("slow", "fast"):
            got, want = m[f"steady_lag_{name}_c"], m[f"expected_lag_{name}_c"]
            ok = math.isfinite(got) and abs(got - want) <= 0.02 * abs(want)
            out.append((f"{name} ramp lag within 2% of rate*tau", ok, f"{got:.3f} vs {want:.3f}"))
        out.append(("fast lag > slow lag", m["steady_lag_fast_c"] > m["steady_lag_slow_c"], ""))
    elif kind == "agility":
        out.append(("smallest qualifying t_d == 12 s", m["qualifying_td_s"] == 12.0, str(m["qualifying_td_s"])))
    elif kind == "connectivity":
        look = connectivity_lookup(bundle)
        for scen in ("S1", "S2"):
            near = [look[(scen, d)] for d in (10.0, 20.0, 30.0) if (scen, d) in look]
            far = [look[(scen, d)] for d in (30.0, 40.0, 50.0) if (scen, d) in look]
            if near:
                out.append((f"{scen} >= 0.95 up to 30 m", min(near) >= 0.95, f"{near}"))
            if len(far) > 1:
                ok = all(a > b for a, b in zip(far, far[1:]))
                out.append((f"{scen} strictly decreasing 30->50 m", ok, f"{far}"))
        s4 = [v for (s, _), v in look.items() if s == "S4"]
        if s4:
            out.append(("S4 >= 0.95 through 50 m", min(s4) >= 0.95, f"{s4}"))
    elif kind == "scaling":
        out.append(("linear through origin, residual < 1%", m["fit_residual"] < 0.01, f"{m['fit_residual']:.2e}"))
        out.append(("no slot overruns at the minimum round", not any(m["overruns"]), ""))
    return out
