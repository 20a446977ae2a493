from __future__ import annotations

from pathlib import Path

import pytest

from bodynet import (
    AppSpec,
    DeviceClass,
    DeviceSpec,
    Fleet,
    LayerKind,
    LayerSpec,
    LinkSpec,
    ModelGraph,
    QuantConfig,
    ResourceNeed,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
SCENARIOS = REPO_ROOT / "scenarios"


def make_layer(
    i: int,
    kind: LayerKind = LayerKind.CONV,
    macs: int = 1_000_000,
    weights: int = 10_000,
    bias: int = 16,
    act: int = 4000,
) -> LayerSpec:
    return LayerSpec(
        id=f"l{i}",
        kind=kind,
        macs=macs,
        weight_count=weights if kind not in (LayerKind.POOL, LayerKind.ELEMENTWISE) else 0,
        bias_count=bias,
        out_activation_bytes=act,
    )


def make_model(
    nlayers: int = 4,
    quant_bits: int = 8,
    input_bytes: int = 8000,
    name: str = "m",
    **layer_kwargs,
) -> ModelGraph:
    return ModelGraph(
        name=name,
        layers=tuple(make_layer(i, **layer_kwargs) for i in range(nlayers)),
        quant=QuantConfig(weight_bits=quant_bits),
        input_bytes=input_bytes,
    )


def make_device(
    dev_id: str = "d0",
    sensors: tuple[str, ...] = (),
    outputs: tuple[str, ...] = (),
    location: str | None = None,
    **over,
) -> DeviceSpec:
    params = dict(
        id=dev_id,
        device_class=DeviceClass.ACCELERATOR,
        weight_mem_bytes=442_000,
        bias_mem_bytes=2_000,
        data_mem_bytes=512_000,
        num_processors=64,
        macs_per_cycle_per_processor=1.0,
        clock_hz=50e6,
        per_layer_overhead_s=1e-5,
        idle_power_w=0.005,
        active_power_w=0.03,
        r_th=60.0,
        c_th=2.0,
        skin_contact=True,
        sensors=frozenset(sensors),
        outputs=frozenset(outputs),
        body_location=location,
    )
    params.update(over)
    return DeviceSpec(**params)


def mesh_fleet(
    devices: tuple[DeviceSpec, ...],
    bandwidth: float = 1e6,
    latency: float = 1e-4,
    energy_per_byte: float = 1e-8,
    ambient: float = 25.0,
    initial_wear=None,
) -> Fleet:
    links = tuple(
        LinkSpec(
            src=a.id,
            dst=b.id,
            bandwidth_bytes_per_s=bandwidth,
            latency_s=latency,
            energy_per_byte_j=energy_per_byte,
        )
        for a in devices
        for b in devices
        if a.id != b.id
    )
    return Fleet(
        devices=devices, links=links, ambient_c=ambient, initial_wear=initial_wear or {}
    )


def make_app(
    app_id: str = "a1",
    modality: str = "ppg",
    model: str = "m",
    interface: str = "haptic",
    **over,
) -> AppSpec:
    params = dict(
        id=app_id,
        sensor_need=ResourceNeed(modality),
        model=model,
        postprocess="post",
        output_need=ResourceNeed(interface),
    )
    params.update(over)
    return AppSpec(**params)


@pytest.fixture
def two_device_fleet() -> Fleet:
    return mesh_fleet(
        (
            make_device("d0", sensors=("ppg",), outputs=("haptic",)),
            make_device("d1"),
        )
    )
