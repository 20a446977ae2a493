"""Deterministic time-stepped simulation of planning scenarios.

The event loop owns all mutable state: it binds and plans the apps at t=0,
advances time in fixed dt steps, integrates each device's temperature with
the exact exponential update, fires scripted availability events and
wear-prediction windows, and replans on each event. Temperature and energy
integrate piecewise between events, so an event landing inside a step does
not smear across it.

Three policies share this loop: the orchestrator (beam planner), a
two-device split baseline, and a DVFS-only policy that pins each app to its
sensor device and throttles the clock instead of offloading.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import orchestrator
from .cost_model import device_utilizations, workload_cost
from .errors import (
    InfeasibleError,
    NoOutputError,
    NoRouteError,
    NoSensorError,
    OutOfResourceError,
    ParseError,
    ScenarioError,
    ValidationError,
)
from .fleet import (
    AppSpec,
    AvailabilityChange,
    AvailabilityEvent,
    AvailabilitySnapshot,
    Fleet,
    ResourceNeed,
    WearStatus,
    available_at,
    bind_virtual,
    load_fleet,
)
from .model_ir import ModelGraph, load_model
from .orchestrator import WorkloadPlan, plan_workload, replan_on_event
from .plans import (
    ExecutionPlan,
    Objective,
    ObjectiveKind,
    PlannedApp,
    PlanSegment,
    SearchConfig,
    memory_violations,
)
from .thermal import (
    SensorWindow,
    ThermalConfig,
    dvfs_max_utilization,
    power_of_utilization,
    predict_wear_status,
    temp_step,
)

log = logging.getLogger("bodynet.simulator")

POLICY_ORCHESTRATOR = "orchestrator"
POLICY_BASELINE = "neurosurgeon_baseline"
POLICY_DVFS = "dvfs_only"

POLICIES = (POLICY_ORCHESTRATOR, POLICY_BASELINE, POLICY_DVFS)

# Default integration step as a fraction of the fastest thermal time constant.
DT_TAU_FRACTION = 0.05


@dataclass(frozen=True)
class TimedWindow:
    time_s: float
    window: SensorWindow


@dataclass(frozen=True)
class Scenario:
    """A fully resolved simulation input."""

    fleet: Fleet
    models: Mapping[str, ModelGraph]
    apps: tuple[AppSpec, ...]
    events: tuple[AvailabilityEvent, ...]
    sensor_windows: tuple[TimedWindow, ...]
    duration_s: float
    dt_s: float
    thermal: ThermalConfig
    search: SearchConfig
    objective: Objective
    seed: int

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ScenarioError("duration_s must be > 0")
        if self.dt_s <= 0:
            raise ScenarioError("dt_s must be > 0")


def default_dt(fleet: Fleet) -> float:
    tau_min = min(d.r_th * d.c_th for d in fleet.devices)
    return DT_TAU_FRACTION * tau_min


def _parse_objective(data) -> Objective:
    if data is None:
        return Objective.max_throughput()
    if isinstance(data, str):
        data = {"kind": data}
    try:
        kind = ObjectiveKind(data["kind"])
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"objective: {exc}") from None
    if kind is ObjectiveKind.MIN_ENERGY:
        return Objective.min_energy(data.get("throughput_floor"))
    return Objective.max_throughput()


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file; file references resolve relative to its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    base_dir = path.parent
    try:
        fleet = load_fleet(base_dir / data["fleet"])
        models: dict[str, ModelGraph] = {}
        for ref in data["models"]:
            model = load_model(base_dir / ref)
            if model.name in models:
                raise ScenarioError(f"duplicate model name {model.name!r}")
            models[model.name] = model
        apps = []
        for raw in data["apps"]:
            sensor = raw["sensor"]
            output = raw["output"]
            apps.append(
                AppSpec(
                    id=raw["id"],
                    sensor_need=ResourceNeed(tag=sensor["modality"],
                                             location=sensor.get("location")),
                    model=raw["model"],
                    postprocess=raw["postprocess"],
                    output_need=ResourceNeed(tag=output["interface"],
                                             location=output.get("location")),
                    postprocess_latency_s=raw.get("postprocess_latency_s", 0.0),
                )
            )
        events = tuple(
            AvailabilityEvent(
                time_s=raw["time_s"],
                device=raw["device"],
                change=AvailabilityChange(raw["change"]),
            )
            for raw in data.get("events", ())
        )
        windows = tuple(
            TimedWindow(
                time_s=raw["time_s"],
                window=SensorWindow(
                    device=raw["device"],
                    imu_std_g=raw["imu_std_g"],
                    proximity=raw["proximity"],
                    window_s=raw.get("window_s", 1.0),
                ),
            )
            for raw in data.get("sensor_windows", ())
        )
        thermal_cfg = ThermalConfig(**data.get("thermal", {}))
        search_cfg = SearchConfig(**data.get("search", {}))
        duration = data["duration_s"]
    except KeyError as exc:
        raise ScenarioError(f"{path}: missing required field {exc.args[0]!r}") from None
    except (ValidationError, ParseError):
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None

    scenario = Scenario(
        fleet=fleet,
        models=models,
        apps=tuple(apps),
        events=events,
        sensor_windows=windows,
        duration_s=duration,
        dt_s=data.get("dt_s") or default_dt(fleet),
        thermal=thermal_cfg,
        search=search_cfg,
        objective=_parse_objective(data.get("objective")),
        seed=data.get("seed", 0),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: Scenario) -> None:
    ids = set()
    for app in scenario.apps:
        if app.id in ids:
            raise ScenarioError(f"duplicate app id {app.id!r}")
        ids.add(app.id)
        if app.model not in scenario.models:
            raise ScenarioError(f"app {app.id!r} references unknown model {app.model!r}")
    for event in scenario.events:
        if not scenario.fleet.has_device(event.device):
            raise ScenarioError(f"event references unknown device {event.device!r}")
    for timed in scenario.sensor_windows:
        if not scenario.fleet.has_device(timed.window.device):
            raise ScenarioError(
                f"sensor window references unknown device {timed.window.device!r}"
            )
        if timed.time_s < 0:
            raise ScenarioError("sensor window time must be >= 0")
    for limit_name in ("t_skin_max_c", "t_doffed_max_c"):
        if getattr(scenario.thermal, limit_name) <= scenario.fleet.ambient_c:
            raise ScenarioError(f"{limit_name} must be above ambient")


# ---------------------------------------------------------------------------
# Trace structures.

APP_RUNNING = "running"
APP_SUSPENDED = "suspended"


@dataclass(frozen=True)
class TraceRow:
    t_s: float
    temps_c: tuple[float, ...]
    utils: tuple[float, ...]
    throughputs: tuple[float, ...]
    states: tuple[str, ...]
    energy_j: float


@dataclass(frozen=True)
class EventRow:
    t_s: float
    kind: str
    subject: str
    detail: str


@dataclass
class Trace:
    device_order: tuple[str, ...]
    app_order: tuple[str, ...]
    rows: list[TraceRow] = field(default_factory=list)
    events: list[EventRow] = field(default_factory=list)

    def summary(self) -> dict:
        n = len(self.rows)
        temps = {dev: [] for dev in self.device_order}
        tputs = {app: [] for app in self.app_order}
        for row in self.rows:
            for dev, temp in zip(self.device_order, row.temps_c):
                temps[dev].append(temp)
            for app, tput in zip(self.app_order, row.throughputs):
                tputs[app].append(tput)
        return {
            "rows": n,
            "mean_temp_c": {d: (sum(v) / n if n else 0.0) for d, v in temps.items()},
            "max_temp_c": {d: (max(v) if v else 0.0) for d, v in temps.items()},
            "mean_throughput": {a: (sum(v) / n if n else 0.0) for a, v in tputs.items()},
            "total_energy_j": self.rows[-1].energy_j if self.rows else 0.0,
            "replan_count": sum(1 for e in self.events if e.kind == "replan"),
            "oor_count": sum(1 for e in self.events if e.kind == "oor"),
            "final_states": {
                a: s for a, s in zip(self.app_order, self.rows[-1].states)
            } if self.rows else {a: APP_SUSPENDED for a in self.app_order},
        }


# ---------------------------------------------------------------------------
# Policy planners.


class _Policy:
    """Strategy hooks: how to plan at t=0 and how to react to an event."""

    name = POLICY_ORCHESTRATOR

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def effective_fleet(self, snapshot: AvailabilitySnapshot) -> Fleet:
        return self.scenario.fleet

    def plan_initial(self, snapshot: AvailabilitySnapshot) -> WorkloadPlan:
        s = self.scenario
        return plan_workload(
            s.apps, s.models, self.effective_fleet(snapshot), snapshot,
            s.search, s.thermal, s.objective,
        )

    def replan(
        self,
        plan: WorkloadPlan,
        event: AvailabilityEvent,
        snapshot: AvailabilitySnapshot,
        event_ordinal: int,
    ) -> tuple[WorkloadPlan, Mapping[str, str]]:
        s = self.scenario
        cfg = dataclasses.replace(s.search, seed=s.search.seed + event_ordinal)
        outcome = replan_on_event(
            plan.planned, plan.suspended, event, s.apps, s.models,
            self.effective_fleet(snapshot), snapshot, cfg, s.thermal, s.objective,
        )
        return (
            WorkloadPlan(planned=outcome.planned, suspended=dict(outcome.suspended)),
            outcome.replanned,
        )


class _BaselinePolicy(_Policy):
    """Thermally unaware two-device split planning, app by app."""

    name = POLICY_BASELINE

    def _plan_apps(
        self, app_ids: Sequence[str], snapshot: AvailabilitySnapshot,
        base: tuple[PlannedApp, ...],
    ) -> WorkloadPlan:
        s = self.scenario
        planned = list(base)
        suspended: dict[str, str] = {}
        for app in s.apps:
            if app.id not in app_ids:
                continue
            model = s.models[app.model]
            try:
                binding = bind_virtual(app, s.fleet, snapshot, model)
                plan = orchestrator.neurosurgeon_baseline(
                    app, binding, s.fleet, snapshot, model, base=planned
                )
            except NoSensorError:
                suspended[app.id] = "sensor"
                continue
            except NoOutputError:
                suspended[app.id] = "output"
                continue
            except OutOfResourceError as exc:
                suspended[app.id] = exc.constraint
                continue
            planned.append(PlannedApp(app=app, model=model, binding=binding, plan=plan))
        return WorkloadPlan(planned=tuple(planned), suspended=suspended)

    def plan_initial(self, snapshot: AvailabilitySnapshot) -> WorkloadPlan:
        return self._plan_apps([a.id for a in self.scenario.apps], snapshot, ())

    def replan(self, plan, event, snapshot, event_ordinal):
        affected = _affected_apps(plan, snapshot)
        kept = tuple(e for e in plan.planned if e.app.id not in affected)
        retry = list(affected) + [a for a in plan.suspended if a not in affected]
        result = self._plan_apps(retry, snapshot, kept)
        replanned = {
            a: affected.get(a, "retry") for a in retry if a not in result.suspended
        }
        return result, replanned


class _DvfsPolicy(_Policy):
    """Pin each app to its sensor device; throttle clocks to stay cool."""

    name = POLICY_DVFS

    def effective_fleet(self, snapshot: AvailabilitySnapshot) -> Fleet:
        """Fleet with each device slowed to its thermally safe frequency scale."""
        s = self.scenario
        devices = []
        for dev in s.fleet.devices:
            wear = snapshot.wear.get(dev.id, WearStatus.WORN)
            try:
                alpha, _ = dvfs_max_utilization(dev, wear, s.fleet.ambient_c, s.thermal)
            except InfeasibleError:
                alpha = 0.0
            if alpha <= 0.0:
                devices.append(dev)  # unusable; plans on it will be rejected thermally
                continue
            delta = dev.active_power_w - dev.idle_power_w
            devices.append(
                dataclasses.replace(
                    dev,
                    clock_hz=dev.clock_hz * alpha,
                    active_power_w=dev.idle_power_w + alpha**3 * delta,
                )
            )
        return Fleet(
            devices=tuple(devices),
            links=s.fleet.links,
            ambient_c=s.fleet.ambient_c,
            initial_wear=s.fleet.initial_wear,
        )

    def _plan_apps(
        self, app_ids: Sequence[str], snapshot: AvailabilitySnapshot,
        base: tuple[PlannedApp, ...],
    ) -> WorkloadPlan:
        s = self.scenario
        fleet = self.effective_fleet(snapshot)
        planned = list(base)
        suspended: dict[str, str] = {}
        for app in s.apps:
            if app.id not in app_ids:
                continue
            model = s.models[app.model]
            try:
                binding = bind_virtual(app, fleet, snapshot, model)
            except NoSensorError:
                suspended[app.id] = "sensor"
                continue
            except NoOutputError:
                suspended[app.id] = "output"
                continue
            plan = ExecutionPlan(
                app=app.id,
                segments=(
                    PlanSegment(device=binding.sensor_device, start=0, end=len(model.layers)),
                ),
            )
            attempt = planned + [PlannedApp(app=app, model=model, binding=binding, plan=plan)]
            problems = memory_violations(attempt, fleet)
            if problems:
                suspended[app.id] = problems[0].split(" ", 1)[0].rstrip(":")
                continue
            try:
                workload_cost(attempt, fleet)
            except NoRouteError:
                suspended[app.id] = "route"
                continue
            planned = attempt
        return WorkloadPlan(planned=tuple(planned), suspended=suspended)

    def plan_initial(self, snapshot: AvailabilitySnapshot) -> WorkloadPlan:
        return self._plan_apps([a.id for a in self.scenario.apps], snapshot, ())

    def replan(self, plan, event, snapshot, event_ordinal):
        affected = _affected_apps(plan, snapshot)
        if event.change in (AvailabilityChange.WORN, AvailabilityChange.DOFFED):
            # Throttle levels changed: recompute every app touching the device.
            for entry in plan.planned:
                if any(seg.device == event.device for seg in entry.plan.segments):
                    affected.setdefault(entry.app.id, "thermal")
        kept = tuple(e for e in plan.planned if e.app.id not in affected)
        retry = list(affected) + [a for a in plan.suspended if a not in affected]
        result = self._plan_apps(retry, snapshot, kept)
        replanned = {
            a: affected.get(a, "retry") for a in retry if a not in result.suspended
        }
        return result, replanned


def _affected_apps(plan: WorkloadPlan, snapshot: AvailabilitySnapshot) -> dict[str, str]:
    affected: dict[str, str] = {}
    for entry in plan.planned:
        if (
            entry.binding.sensor_device not in snapshot.available
            or entry.binding.output_device not in snapshot.available
        ):
            affected[entry.app.id] = "binding"
        elif any(seg.device not in snapshot.available for seg in entry.plan.segments):
            affected[entry.app.id] = "device_lost"
    return affected


_POLICY_CLASSES: dict[str, type[_Policy]] = {
    POLICY_ORCHESTRATOR: _Policy,
    POLICY_BASELINE: _BaselinePolicy,
    POLICY_DVFS: _DvfsPolicy,
}


# ---------------------------------------------------------------------------
# The event loop.


@dataclass
class _LoopState:
    plan: WorkloadPlan
    utils: dict[str, float]
    throughput: dict[str, float]
    link_energy_rate_w: float
    powers: dict[str, float]


def _steady_rates(
    plan: WorkloadPlan, fleet: Fleet, scenario: Scenario
) -> _LoopState:
    """Per-device utilization/power and per-app throughput for the current plans."""
    utils: dict[str, float] = {d.id: 0.0 for d in fleet.devices}
    throughput = {app.id: 0.0 for app in scenario.apps}
    link_rate = 0.0
    if plan.planned:
        cost = workload_cost(plan.planned, fleet)
        utils.update(device_utilizations(cost))
        period = cost.shared_period_s
        for entry in plan.planned:
            throughput[entry.app.id] = 1.0 / period if period > 0 else float("inf")
        if period > 0:
            link_rate = sum(c.link_energy_j for c in cost.per_app.values()) / period
    powers = {
        d.id: power_of_utilization(d, min(1.0, utils.get(d.id, 0.0)))
        for d in fleet.devices
    }
    return _LoopState(
        plan=plan, utils=utils, throughput=throughput,
        link_energy_rate_w=link_rate, powers=powers,
    )


def run(scenario: Scenario, policy: str = POLICY_ORCHESTRATOR) -> Trace:
    """Simulate one scenario under one policy; deterministic for a fixed seed."""
    if policy not in _POLICY_CLASSES:
        raise ScenarioError(f"unknown policy {policy!r}")
    validate_scenario(scenario)
    fleet = scenario.fleet
    planner = _POLICY_CLASSES[policy](scenario)
    trace = Trace(
        device_order=fleet.device_ids(),
        app_order=tuple(app.id for app in scenario.apps),
    )

    applied_events: list[AvailabilityEvent] = []
    snapshot = available_at(fleet, applied_events, 0.0)
    wear_state = dict(snapshot.wear)

    plan = planner.plan_initial(snapshot)
    for entry in plan.planned:
        devices = "+".join(dict.fromkeys(s.device for s in entry.plan.segments))
        trace.events.append(EventRow(0.0, "plan", entry.app.id, devices))
    for app_id, constraint in sorted(plan.suspended.items()):
        trace.events.append(EventRow(0.0, "oor", app_id, constraint))

    state = _steady_rates(plan, planner.effective_fleet(snapshot), scenario)
    temps = {d.id: fleet.ambient_c for d in fleet.devices}
    energy = 0.0

    # Timeline: scripted events first at equal times, then sensor windows.
    timeline: list[tuple[float, int, int, object]] = []
    for i, event in enumerate(scenario.events):
        timeline.append((event.time_s, 0, i, event))
    for i, timed in enumerate(scenario.sensor_windows):
        timeline.append((timed.time_s, 1, i, timed))
    timeline.sort(key=lambda item: (item[0], item[1], item[2]))
    pending = list(timeline)

    def integrate(t_from: float, t_to: float) -> None:
        nonlocal energy
        span = t_to - t_from
        if span <= 0:
            return
        for dev in fleet.devices:
            power = state.powers[dev.id]
            temps[dev.id] = temp_step(temps[dev.id], dev, power, fleet.ambient_c, span)
            energy += power * span
        energy += state.link_energy_rate_w * span

    def apply_event(event: AvailabilityEvent, ordinal: int, detail: str) -> None:
        nonlocal snapshot, plan, state
        suspended_before = set(plan.suspended)
        applied_events.append(event)
        snapshot = available_at(fleet, applied_events, event.time_s)
        wear_state.update(snapshot.wear)
        trace.events.append(EventRow(event.time_s, event.change.value, event.device, detail))
        plan, replanned = planner.replan(plan, event, snapshot, ordinal)
        for app_id in sorted(replanned):
            entry_plan = plan.plan_for(app_id)
            devices = (
                "+".join(dict.fromkeys(s.device for s in entry_plan.segments))
                if entry_plan else ""
            )
            trace.events.append(
                EventRow(event.time_s, "replan", app_id, f"{replanned[app_id]}:{devices}")
            )
        # Log OOR only on fresh suspensions; repeated failed retries stay quiet.
        for app_id in sorted(set(plan.suspended) - suspended_before):
            trace.events.append(EventRow(event.time_s, "oor", app_id, plan.suspended[app_id]))
        state = _steady_rates(plan, planner.effective_fleet(snapshot), scenario)

    t_prev = 0.0
    ordinal = 0
    steps = int(math.floor(scenario.duration_s / scenario.dt_s + 1e-9))
    for k in range(1, steps + 1):
        t_row = k * scenario.dt_s
        while pending and pending[0][0] <= t_row + 1e-12:
            t_item, tag, _, item = pending.pop(0)
            integrate(t_prev, t_item)
            t_prev = t_item
            if tag == 0:
                ordinal += 1
                apply_event(item, ordinal, "scripted")
            else:
                timed: TimedWindow = item
                predicted = predict_wear_status(timed.window)
                if predicted != wear_state[timed.window.device]:
                    ordinal += 1
                    change = (
                        AvailabilityChange.WORN
                        if predicted is WearStatus.WORN
                        else AvailabilityChange.DOFFED
                    )
                    apply_event(
                        AvailabilityEvent(
                            time_s=t_item, device=timed.window.device, change=change
                        ),
                        ordinal,
                        "predicted",
                    )
        integrate(t_prev, t_row)
        t_prev = t_row
        states = tuple(
            APP_RUNNING if state.throughput.get(app_id, 0.0) > 0 else APP_SUSPENDED
            for app_id in trace.app_order
        )
        trace.rows.append(
            TraceRow(
                t_s=t_row,
                temps_c=tuple(temps[d] for d in trace.device_order),
                utils=tuple(round(state.utils.get(d, 0.0), 12) for d in trace.device_order),
                throughputs=tuple(state.throughput.get(a, 0.0) for a in trace.app_order),
                states=states,
                energy_j=energy,
            )
        )
    return trace


@dataclass(frozen=True)
class PolicyComparison:
    summaries: Mapping[str, dict]
    throughput_ratio_vs_baseline: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "summaries": dict(self.summaries),
            "throughput_ratio_vs_baseline": dict(self.throughput_ratio_vs_baseline),
        }


def compare_policies(scenario: Scenario) -> tuple[Mapping[str, Trace], PolicyComparison]:
    """Run all three policies on identical inputs and summarize side by side."""
    traces = {name: run(scenario, policy=name) for name in POLICIES}
    summaries = {name: trace.summary() for name, trace in traces.items()}

    def total_tput(name: str) -> float:
        return sum(summaries[name]["mean_throughput"].values())

    base = total_tput(POLICY_BASELINE)
    ratios = {}
    for name in POLICIES:
        ratios[name] = (total_tput(name) / base) if base > 0 else float("inf")
    return traces, PolicyComparison(summaries=summaries, throughput_ratio_vs_baseline=ratios)


# ---------------------------------------------------------------------------
# Trace files.


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace(trace: Trace, out_dir: str | Path) -> None:
    """Write trace.csv, events.csv, and summary.json with stable layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = (
        ["t_s"]
        + [f"dev:{d}:temp_c" for d in trace.device_order]
        + [f"dev:{d}:util" for d in trace.device_order]
        + [f"app:{a}:tput" for a in trace.app_order]
        + [f"app:{a}:state" for a in trace.app_order]
        + ["energy_j"]
    )
    lines = [",".join(columns)]
    for row in trace.rows:
        cells = [_fmt(row.t_s)]
        cells += [_fmt(v) for v in row.temps_c]
        cells += [_fmt(v) for v in row.utils]
        cells += [_fmt(v) for v in row.throughputs]
        cells += list(row.states)
        cells.append(_fmt(row.energy_j))
        lines.append(",".join(cells))
    (out / "trace.csv").write_text("\n".join(lines) + "\n")

    event_lines = ["t_s,kind,subject,detail"]
    for event in trace.events:
        event_lines.append(f"{_fmt(event.t_s)},{event.kind},{event.subject},{event.detail}")
    (out / "events.csv").write_text("\n".join(event_lines) + "\n")

    (out / "summary.json").write_text(
        json.dumps(trace.summary(), indent=2, sort_keys=True) + "\n"
    )
