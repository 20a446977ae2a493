"""Analytic latency, energy, and throughput prediction for execution plans.

Latency of a plan is the exact sum of its stage times: input transfer,
per-segment compute, inter-segment transfers, output transfer, and the
post-processing charge. Throughput comes from pipeline accounting: each
device is busy for its compute time per round and each directed link for
its transfer time per round; the steady-state period is the maximum busy
time over all of those resources, summed across apps when they share a
device or link.

Compute latency is a MAC-throughput model with a fixed per-layer overhead:
``macs / (num_processors * macs_per_cycle_per_processor * clock_hz) +
per_layer_overhead_s``. Weight-loading time is excluded because plans are
long-lived and weights stay resident. Per-inference energy charges only the
active-minus-idle compute power plus per-byte link energy; idle power is
accounted by the simulator over wall-clock time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DomainError, NoRouteError
from .fleet import Binding, DeviceSpec, Fleet, LinkSpec
from .model_ir import LayerSpec, ModelGraph
from .plans import ExecutionPlan, PlannedApp


@dataclass(frozen=True)
class PlanCost:
    """Predicted cost of one plan: end-to-end latency, pipeline period, energy.

    ``device_busy_s`` maps device id to compute seconds per round;
    ``link_busy_s`` maps directed (src, dst) pairs to transfer seconds per
    round. ``link_energy_j`` is the transfer-only share of ``energy_j``.
    """

    latency_s: float
    period_s: float
    energy_j: float
    link_energy_j: float
    device_busy_s: Mapping[str, float]
    link_busy_s: Mapping[tuple[str, str], float]


@dataclass(frozen=True)
class WorkloadCost:
    """Joint cost of several apps sharing one fleet snapshot."""

    per_app: Mapping[str, PlanCost]
    shared_period_s: float
    device_busy_s: Mapping[str, float]
    link_busy_s: Mapping[tuple[str, str], float]

    @property
    def total_energy_j(self) -> float:
        return sum(cost.energy_j for cost in self.per_app.values())

    def throughput(self) -> float:
        if self.shared_period_s <= 0:
            return float("inf")
        return 1.0 / self.shared_period_s


def layer_compute_latency(layer: LayerSpec, device: DeviceSpec) -> float:
    """Seconds to run one layer on one device."""
    return layer.macs / device.macs_per_second + device.per_layer_overhead_s


def segment_compute_latency(model: ModelGraph, span: tuple[int, int], device: DeviceSpec) -> float:
    start, stop = span
    return sum(layer_compute_latency(model.layers[i], device) for i in range(start, stop))


def transfer_latency(nbytes: int, link: LinkSpec) -> float:
    """Seconds to move ``nbytes`` over a link: fixed latency plus serialization."""
    if nbytes < 0:
        raise DomainError(f"transfer size must be >= 0, got {nbytes}")
    return link.latency_s + nbytes / link.bandwidth_bytes_per_s


def route_transfer(fleet: Fleet, src: str, dst: str, nbytes: int) -> tuple[float, LinkSpec | None]:
    """Single-hop transfer time between devices; zero (and no link) when co-located."""
    if src == dst:
        return 0.0, None
    link = fleet.link(src, dst)
    if link is None:
        raise NoRouteError(f"no link {src!r} -> {dst!r}")
    return transfer_latency(nbytes, link), link


def plan_cost(
    plan: ExecutionPlan,
    model: ModelGraph,
    fleet: Fleet,
    binding: Binding,
    postprocess_latency_s: float = 0.0,
) -> PlanCost:
    """Evaluate one plan in isolation. Raises NoRouteError on missing links."""
    device_busy: dict[str, float] = {}
    link_busy: dict[tuple[str, str], float] = {}
    compute_energy = 0.0
    link_energy = 0.0
    latency = 0.0

    def add_transfer(src: str, dst: str, nbytes: int) -> None:
        nonlocal latency, link_energy
        seconds, link = route_transfer(fleet, src, dst, nbytes)
        latency += seconds
        if link is not None:
            key = (link.src, link.dst)
            link_busy[key] = link_busy.get(key, 0.0) + seconds
            link_energy += nbytes * link.energy_per_byte_j

    add_transfer(binding.sensor_device, plan.segments[0].device, model.input_bytes)
    for i, seg in enumerate(plan.segments):
        device = fleet.device(seg.device)
        compute = segment_compute_latency(model, seg.span, device)
        latency += compute
        device_busy[seg.device] = device_busy.get(seg.device, 0.0) + compute
        compute_energy += (device.active_power_w - device.idle_power_w) * compute
        if i + 1 < len(plan.segments):
            handoff = model.layers[seg.end - 1].out_activation_bytes
            add_transfer(seg.device, plan.segments[i + 1].device, handoff)
    add_transfer(plan.segments[-1].device, binding.output_device, model.output_bytes)
    if postprocess_latency_s > 0:
        latency += postprocess_latency_s
        device_busy[binding.output_device] = (
            device_busy.get(binding.output_device, 0.0) + postprocess_latency_s
        )
        out_dev = fleet.device(binding.output_device)
        compute_energy += (out_dev.active_power_w - out_dev.idle_power_w) * postprocess_latency_s

    period = max([*device_busy.values(), *link_busy.values()], default=0.0)
    return PlanCost(
        latency_s=latency,
        period_s=period,
        energy_j=compute_energy + link_energy,
        link_energy_j=link_energy,
        device_busy_s=device_busy,
        link_busy_s=link_busy,
    )


def workload_cost(planned: Sequence[PlannedApp], fleet: Fleet) -> WorkloadCost:
    """Joint cost under serialized sharing: busy times add per device and link,
    and every app runs at the shared bottleneck period."""
    per_app: dict[str, PlanCost] = {}
    device_busy: dict[str, float] = {}
    link_busy: dict[tuple[str, str], float] = {}
    for entry in planned:
        cost = plan_cost(
            entry.plan, entry.model, fleet, entry.binding, entry.app.postprocess_latency_s
        )
        per_app[entry.app.id] = cost
        for dev_id, busy in cost.device_busy_s.items():
            device_busy[dev_id] = device_busy.get(dev_id, 0.0) + busy
        for key, busy in cost.link_busy_s.items():
            link_busy[key] = link_busy.get(key, 0.0) + busy
    shared = max([*device_busy.values(), *link_busy.values()], default=0.0)
    return WorkloadCost(
        per_app=per_app,
        shared_period_s=shared,
        device_busy_s=device_busy,
        link_busy_s=link_busy,
    )


def device_utilizations(workload: WorkloadCost) -> dict[str, float]:
    """Fraction of each round a device spends computing, at the shared period."""
    period = workload.shared_period_s
    if period <= 0:
        return {dev_id: 0.0 for dev_id in workload.device_busy_s}
    return {dev_id: min(1.0, busy / period) for dev_id, busy in workload.device_busy_s.items()}


def fixture_energy_check(fixture: ModelGraph, device: DeviceSpec) -> float:
    """Per-inference compute energy of a whole model resident on one device."""
    total_compute = segment_compute_latency(fixture, (0, len(fixture.layers)), device)
    return (device.active_power_w - device.idle_power_w) * total_compute
