"""Device fleet: capacities, links, availability over time, and virtual-to-physical binding.

The fleet is immutable after loading. Availability is a pure function of
(fleet, event list, time): all devices start joined and worn unless the
fleet file's ``initial_status`` says otherwise, and events apply in
(time, file order) sequence so equal-time events are deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import NoOutputError, NoSensorError, ParseError, ValidationError
from .model_ir import ModelGraph


class DeviceClass(str, Enum):
    ACCELERATOR = "accelerator"
    MCU = "mcu"


class WearStatus(str, Enum):
    WORN = "worn"
    DOFFED = "doffed"


class AvailabilityChange(str, Enum):
    JOIN = "join"
    LEAVE = "leave"
    WORN = "worn"
    DOFFED = "doffed"


@dataclass(frozen=True)
class DeviceSpec:
    """Static capacities and physical parameters of one device.

    ``r_th`` (degC/W) and ``c_th`` (J/degC) parameterize the single-node
    thermal model; ``skin_contact`` marks devices whose temperature is
    comfort-constrained while worn.
    """

    id: str
    device_class: DeviceClass
    weight_mem_bytes: int
    bias_mem_bytes: int
    data_mem_bytes: int
    num_processors: int
    macs_per_cycle_per_processor: float
    clock_hz: float
    per_layer_overhead_s: float
    idle_power_w: float
    active_power_w: float
    r_th: float
    c_th: float
    skin_contact: bool
    sensors: frozenset[str] = frozenset()
    outputs: frozenset[str] = frozenset()
    body_location: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("device id must be non-empty")
        positive = (
            "weight_mem_bytes",
            "bias_mem_bytes",
            "data_mem_bytes",
            "num_processors",
            "macs_per_cycle_per_processor",
            "clock_hz",
            "idle_power_w",
            "active_power_w",
            "r_th",
            "c_th",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"device {self.id!r}: {name} must be strictly positive")
        if self.active_power_w < self.idle_power_w:
            raise ValidationError(f"device {self.id!r}: active_power_w must be >= idle_power_w")
        if self.per_layer_overhead_s < 0:
            raise ValidationError(f"device {self.id!r}: per_layer_overhead_s must be >= 0")

    @property
    def macs_per_second(self) -> float:
        return self.num_processors * self.macs_per_cycle_per_processor * self.clock_hz


@dataclass(frozen=True)
class LinkSpec:
    """A directed point-to-point link with fixed per-message latency."""

    src: str
    dst: str
    bandwidth_bytes_per_s: float
    latency_s: float = 0.0
    energy_per_byte_j: float = 0.0

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValidationError(f"link {self.src!r}->{self.dst!r}: endpoints must differ")
        if self.bandwidth_bytes_per_s <= 0:
            raise ValidationError(f"link {self.src!r}->{self.dst!r}: bandwidth must be > 0")
        if self.latency_s < 0 or self.energy_per_byte_j < 0:
            raise ValidationError(f"link {self.src!r}->{self.dst!r}: latency and energy must be >= 0")


@dataclass(frozen=True)
class Fleet:
    devices: tuple[DeviceSpec, ...]
    links: tuple[LinkSpec, ...]
    ambient_c: float
    initial_wear: Mapping[str, WearStatus] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.devices:
            raise ValidationError("fleet must contain >=1 device")
        by_id: dict[str, DeviceSpec] = {}
        for dev in self.devices:
            if dev.id in by_id:
                raise ValidationError(f"duplicate device id {dev.id!r}")
            by_id[dev.id] = dev
        link_map: dict[tuple[str, str], LinkSpec] = {}
        for link in self.links:
            for endpoint in (link.src, link.dst):
                if endpoint not in by_id:
                    raise ValidationError(f"link references unknown device {endpoint!r}")
            key = (link.src, link.dst)
            if key in link_map:
                raise ValidationError(f"duplicate link {link.src!r}->{link.dst!r}")
            link_map[key] = link
        for dev_id in self.initial_wear:
            if dev_id not in by_id:
                raise ValidationError(f"initial_status references unknown device {dev_id!r}")
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_link_map", link_map)

    def device(self, dev_id: str) -> DeviceSpec:
        try:
            return self._by_id[dev_id]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError(f"unknown device {dev_id!r}") from None

    def has_device(self, dev_id: str) -> bool:
        return dev_id in self._by_id  # type: ignore[attr-defined]

    def link(self, src: str, dst: str) -> LinkSpec | None:
        return self._link_map.get((src, dst))  # type: ignore[attr-defined]

    def device_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.devices)


@dataclass(frozen=True)
class AvailabilityEvent:
    time_s: float
    device: str
    change: AvailabilityChange

    def __post_init__(self) -> None:
        if self.time_s < 0:
            raise ValidationError(f"event time must be >= 0, got {self.time_s}")


@dataclass(frozen=True)
class ResourceNeed:
    """A capability tag plus an optional preferred body location."""

    tag: str
    location: str | None = None

    def __post_init__(self) -> None:
        if not self.tag:
            raise ValidationError("capability tag must be non-empty")


@dataclass(frozen=True)
class AppSpec:
    """An application pipeline: sensing need, model, post-processing, output need.

    ``model`` names a loaded ModelGraph; resolution happens at registration
    or scenario load. ``postprocess`` is an opaque label whose only runtime
    effect is a fixed latency charge on the output device.
    """

    id: str
    sensor_need: ResourceNeed
    model: str
    postprocess: str
    output_need: ResourceNeed
    postprocess_latency_s: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("app id must be non-empty")
        if not self.model:
            raise ValidationError(f"app {self.id!r}: model reference must be non-empty")
        if not self.postprocess:
            raise ValidationError(f"app {self.id!r}: postprocess tag must be non-empty")
        if self.postprocess_latency_s < 0:
            raise ValidationError(f"app {self.id!r}: postprocess_latency_s must be >= 0")


@dataclass(frozen=True)
class Binding:
    """Resolved physical devices for an app's virtual sensor and output needs."""

    app: str
    sensor_device: str
    output_device: str


@dataclass(frozen=True)
class AvailabilitySnapshot:
    """Joined devices and per-device wear status at one instant."""

    available: frozenset[str]
    wear: Mapping[str, WearStatus]

    def is_available(self, dev_id: str) -> bool:
        return dev_id in self.available


def load_fleet(path: str | Path) -> Fleet:
    """Load and validate a fleet file (JSON per the documented schema)."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return fleet_from_dict(data)


def fleet_from_dict(data: Mapping) -> Fleet:
    if not isinstance(data, Mapping):
        raise ValidationError("fleet file must decode to an object")
    if "devices" not in data:
        raise ValidationError("fleet: missing required field 'devices'")
    devices = []
    for i, raw in enumerate(data["devices"]):
        ctx = f"device[{i}]"
        try:
            devices.append(
                DeviceSpec(
                    id=raw["id"],
                    device_class=DeviceClass(raw["class"]),
                    weight_mem_bytes=raw["weight_mem_bytes"],
                    bias_mem_bytes=raw["bias_mem_bytes"],
                    data_mem_bytes=raw["data_mem_bytes"],
                    num_processors=raw["num_processors"],
                    macs_per_cycle_per_processor=raw["macs_per_cycle_per_processor"],
                    clock_hz=raw["clock_hz"],
                    per_layer_overhead_s=raw.get("per_layer_overhead_s", 0.0),
                    idle_power_w=raw["idle_power_w"],
                    active_power_w=raw["active_power_w"],
                    r_th=raw["r_th"],
                    c_th=raw["c_th"],
                    skin_contact=raw.get("skin_contact", True),
                    sensors=frozenset(raw.get("sensors", ())),
                    outputs=frozenset(raw.get("outputs", ())),
                    body_location=raw.get("body_location"),
                )
            )
        except KeyError as exc:
            raise ValidationError(f"fleet {ctx}: missing required field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ValidationError(f"fleet {ctx}: {exc}") from None
    links = []
    for i, raw in enumerate(data.get("links", ())):
        try:
            links.append(
                LinkSpec(
                    src=raw["src"],
                    dst=raw["dst"],
                    bandwidth_bytes_per_s=raw["bandwidth_bytes_per_s"],
                    latency_s=raw.get("latency_s", 0.0),
                    energy_per_byte_j=raw.get("energy_per_byte_j", 0.0),
                )
            )
        except KeyError as exc:
            raise ValidationError(f"fleet link[{i}]: missing required field {exc.args[0]!r}") from None
    initial_wear = {}
    for dev_id, tag in (data.get("initial_status") or {}).items():
        try:
            initial_wear[dev_id] = WearStatus(tag)
        except ValueError:
            raise ValidationError(f"initial_status[{dev_id!r}]: unknown status {tag!r}") from None
    return Fleet(
        devices=tuple(devices),
        links=tuple(links),
        ambient_c=data.get("ambient_c", 25.0),
        initial_wear=initial_wear,
    )


def fleet_to_dict(fleet: Fleet) -> dict:
    return {
        "ambient_c": fleet.ambient_c,
        "devices": [
            {
                "id": d.id,
                "class": d.device_class.value,
                "weight_mem_bytes": d.weight_mem_bytes,
                "bias_mem_bytes": d.bias_mem_bytes,
                "data_mem_bytes": d.data_mem_bytes,
                "num_processors": d.num_processors,
                "macs_per_cycle_per_processor": d.macs_per_cycle_per_processor,
                "clock_hz": d.clock_hz,
                "per_layer_overhead_s": d.per_layer_overhead_s,
                "idle_power_w": d.idle_power_w,
                "active_power_w": d.active_power_w,
                "r_th": d.r_th,
                "c_th": d.c_th,
                "skin_contact": d.skin_contact,
                "sensors": sorted(d.sensors),
                "outputs": sorted(d.outputs),
                "body_location": d.body_location,
            }
            for d in fleet.devices
        ],
        "links": [
            {
                "src": l.src,
                "dst": l.dst,
                "bandwidth_bytes_per_s": l.bandwidth_bytes_per_s,
                "latency_s": l.latency_s,
                "energy_per_byte_j": l.energy_per_byte_j,
            }
            for l in fleet.links
        ],
        "initial_status": {k: v.value for k, v in sorted(fleet.initial_wear.items())},
    }


def write_fleet(fleet: Fleet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fleet_to_dict(fleet), indent=2) + "\n")


def available_at(
    fleet: Fleet, events: Sequence[AvailabilityEvent], t: float
) -> AvailabilitySnapshot:
    """Availability and wear status after applying all events with time <= t.

    Equal-time events apply in list order; the sort is stable so the file
    order is the documented total order.
    """
    available = {d.id for d in fleet.devices}
    wear = {d.id: fleet.initial_wear.get(d.id, WearStatus.WORN) for d in fleet.devices}
    ordered = sorted(enumerate(events), key=lambda pair: (pair[1].time_s, pair[0]))
    for _, event in ordered:
        if event.time_s > t:
            break
        if not fleet.has_device(event.device):
            raise ValidationError(f"event references unknown device {event.device!r}")
        if event.change is AvailabilityChange.JOIN:
            available.add(event.device)
        elif event.change is AvailabilityChange.LEAVE:
            available.discard(event.device)
        elif event.change is AvailabilityChange.WORN:
            wear[event.device] = WearStatus.WORN
        else:
            wear[event.device] = WearStatus.DOFFED
    return AvailabilitySnapshot(available=frozenset(available), wear=wear)


def _transfer_seconds(fleet: Fleet, src: str, dst: str, nbytes: int) -> float:
    if src == dst:
        return 0.0
    link = fleet.link(src, dst)
    if link is None:
        return math.inf
    return link.latency_s + nbytes / link.bandwidth_bytes_per_s


def _pick_candidate(
    candidates: list[DeviceSpec],
    need: ResourceNeed,
    fleet: Fleet,
    anchor: str,
    nbytes: int,
    toward_anchor: bool,
) -> DeviceSpec:
    if need.location is not None:
        located = [d for d in candidates if d.body_location == need.location]
        if located:
            candidates = located

    def cost(dev: DeviceSpec) -> tuple[float, str]:
        if toward_anchor:
            seconds = _transfer_seconds(fleet, dev.id, anchor, nbytes)
        else:
            seconds = _transfer_seconds(fleet, anchor, dev.id, nbytes)
        return (seconds, dev.id)

    return min(candidates, key=cost)


def bind_virtual(
    app: AppSpec, fleet: Fleet, availability: AvailabilitySnapshot, model: ModelGraph
) -> Binding:
    """Resolve the app's virtual sensor/output needs to physical devices.

    Exact body-location matches win; otherwise the candidate minimizing
    transfer cost to the largest-weight-memory available device is chosen,
    with ties broken by lexicographic device id.
    """
    avail_devices = [d for d in fleet.devices if availability.is_available(d.id)]
    sensor_candidates = [d for d in avail_devices if app.sensor_need.tag in d.sensors]
    if not sensor_candidates:
        raise NoSensorError(
            f"app {app.id!r}: no available device offers sensor {app.sensor_need.tag!r}"
        )
    output_candidates = [d for d in avail_devices if app.output_need.tag in d.outputs]
    if not output_candidates:
        raise NoOutputError(
            f"app {app.id!r}: no available device offers output {app.output_need.tag!r}"
        )
    # The compute anchor: where the bulk of the model is most likely to live.
    anchor = sorted(avail_devices, key=lambda d: (-d.weight_mem_bytes, d.id))[0].id
    sensor = _pick_candidate(
        sensor_candidates, app.sensor_need, fleet, anchor, model.input_bytes, toward_anchor=True
    )
    output = _pick_candidate(
        output_candidates, app.output_need, fleet, anchor, model.output_bytes, toward_anchor=False
    )
    return Binding(app=app.id, sensor_device=sensor.id, output_device=output.id)
