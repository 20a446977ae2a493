"""Plan data types shared by the cost model, the planner, and the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ValidationError
from .fleet import AppSpec, AvailabilitySnapshot, Binding, Fleet
from .model_ir import ModelGraph, bias_footprint, weight_footprint


@dataclass(frozen=True)
class PlanSegment:
    """A contiguous half-open layer range assigned to one device."""

    device: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValidationError(f"segment [{self.start}, {self.end}) is empty or negative")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class ExecutionPlan:
    """Ordered device assignment of a model's layer segments for one app."""

    app: str
    segments: tuple[PlanSegment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValidationError(f"plan for {self.app!r} has no segments")

    def devices(self) -> tuple[str, ...]:
        return tuple(seg.device for seg in self.segments)

    def cuts(self) -> tuple[int, ...]:
        return tuple(seg.start for seg in self.segments[1:])

    def to_dict(self) -> dict:
        return {
            "app": self.app,
            "segments": [
                {"device": s.device, "start": s.start, "end": s.end} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExecutionPlan":
        return cls(
            app=data["app"],
            segments=tuple(
                PlanSegment(device=s["device"], start=s["start"], end=s["end"])
                for s in data["segments"]
            ),
        )


@dataclass(frozen=True)
class PlannedApp:
    """An app together with its binding and selected plan."""

    app: AppSpec
    model: ModelGraph
    binding: Binding
    plan: ExecutionPlan


class ObjectiveKind(str, Enum):
    MAX_THROUGHPUT = "max_throughput"
    MIN_ENERGY = "min_energy"


@dataclass(frozen=True)
class Objective:
    kind: ObjectiveKind
    throughput_floor: float | None = None

    def __post_init__(self) -> None:
        if self.throughput_floor is not None:
            if self.kind is not ObjectiveKind.MIN_ENERGY:
                raise ValidationError("throughput_floor only applies to min_energy")
            if self.throughput_floor <= 0:
                raise ValidationError("throughput_floor must be > 0")

    @classmethod
    def max_throughput(cls) -> "Objective":
        return cls(kind=ObjectiveKind.MAX_THROUGHPUT)

    @classmethod
    def min_energy(cls, throughput_floor: float | None = None) -> "Objective":
        return cls(kind=ObjectiveKind.MIN_ENERGY, throughput_floor=throughput_floor)


@dataclass(frozen=True)
class SearchConfig:
    max_segments_per_model: int = 4
    beam_width: int = 16
    local_search_iters: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_segments_per_model < 1:
            raise ValidationError("max_segments_per_model must be >= 1")
        if self.beam_width < 1:
            raise ValidationError("beam_width must be >= 1")
        if self.local_search_iters < 0:
            raise ValidationError("local_search_iters must be >= 0")


def segment_data_bytes(model: ModelGraph, span: tuple[int, int]) -> int:
    """Data-memory charge of one resident segment: its largest input plus
    largest output activation (double buffering of the biggest tensors)."""
    start, stop = span
    max_in = max(model.layer_input_bytes(i) for i in range(start, stop))
    max_out = max(model.layers[i].out_activation_bytes for i in range(start, stop))
    return max_in + max_out


def validate_plan_structure(
    plan: ExecutionPlan, model: ModelGraph, snapshot: AvailabilitySnapshot
) -> None:
    """Check segment coverage/order and device availability; raises ValidationError."""
    expected = 0
    for seg in plan.segments:
        if seg.start != expected:
            raise ValidationError(
                f"plan for {plan.app!r}: segment starts at {seg.start}, expected {expected}"
            )
        expected = seg.end
        if seg.device not in snapshot.available:
            raise ValidationError(f"plan for {plan.app!r}: device {seg.device!r} not available")
    if expected != len(model.layers):
        raise ValidationError(
            f"plan for {plan.app!r}: segments cover {expected} of {len(model.layers)} layers"
        )


@dataclass(frozen=True)
class MemoryUse:
    """Per-device memory charges accumulated across all resident plans."""

    weight: Mapping[str, int] = field(default_factory=dict)
    bias: Mapping[str, int] = field(default_factory=dict)
    data: Mapping[str, int] = field(default_factory=dict)


def memory_use(planned: Sequence[PlannedApp]) -> MemoryUse:
    weight: dict[str, int] = {}
    bias: dict[str, int] = {}
    data: dict[str, int] = {}
    for entry in planned:
        model = entry.model
        for i, seg in enumerate(entry.plan.segments):
            weight[seg.device] = weight.get(seg.device, 0) + weight_footprint(model, seg.span)
            bias[seg.device] = bias.get(seg.device, 0) + bias_footprint(model, seg.span)
            charge = segment_data_bytes(model, seg.span)
            if i == 0:
                charge += model.input_bytes  # receive buffer for the sensor stream
            data[seg.device] = data.get(seg.device, 0) + charge
    return MemoryUse(weight=weight, bias=bias, data=data)


def memory_violations(planned: Sequence[PlannedApp], fleet: Fleet) -> list[str]:
    """Human-readable list of per-device memory capacity violations."""
    use = memory_use(planned)
    problems = []
    for dev_id, used in sorted(use.weight.items()):
        cap = fleet.device(dev_id).weight_mem_bytes
        if used > cap:
            problems.append(f"weight_mem on {dev_id}: {used} > {cap}")
    for dev_id, used in sorted(use.bias.items()):
        cap = fleet.device(dev_id).bias_mem_bytes
        if used > cap:
            problems.append(f"bias_mem on {dev_id}: {used} > {cap}")
    for dev_id, used in sorted(use.data.items()):
        cap = fleet.device(dev_id).data_mem_bytes
        if used > cap:
            problems.append(f"data_mem on {dev_id}: {used} > {cap}")
    return problems
