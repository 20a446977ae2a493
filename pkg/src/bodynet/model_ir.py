"""Model graphs: linear layer chains with quantization-dependent memory footprints.

Models are linear chains of layers; every planning operation works on
contiguous index ranges ``(start, stop)`` (half-open). Weight storage is
packed per segment, so byte ceilings are applied per segment, not per layer.
Biases are stored at a fixed 8 bits each regardless of weight quantization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import CutError, ParseError, RangeError, ValidationError

VALID_QUANT_BITS = (1, 2, 4, 8)

BIAS_BITS = 8


class LayerKind(str, Enum):
    CONV = "conv"
    POOL = "pool"
    FC = "fc"
    ELEMENTWISE = "elementwise"


# Layer kinds that carry no trainable weights.
_WEIGHTLESS_KINDS = (LayerKind.POOL, LayerKind.ELEMENTWISE)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model chain with its per-inference resource counts."""

    id: str
    kind: LayerKind
    macs: int
    weight_count: int
    bias_count: int
    out_activation_bytes: int

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("layer id must be non-empty")
        for name in ("macs", "weight_count", "bias_count", "out_activation_bytes"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValidationError(f"layer {self.id!r}: {name} must be a non-negative integer")
        if self.kind in _WEIGHTLESS_KINDS and self.weight_count != 0:
            raise ValidationError(
                f"layer {self.id!r}: {self.kind.value} layers must have weight_count = 0"
            )


@dataclass(frozen=True)
class QuantConfig:
    """Weight quantization width in bits."""

    weight_bits: int

    def __post_init__(self) -> None:
        if self.weight_bits not in VALID_QUANT_BITS:
            raise ValidationError("quant bits must be 1,2,4,8")


@dataclass(frozen=True)
class ModelGraph:
    """A named linear chain of layers plus its quantization config.

    ``metadata_accuracy`` is informational only (reported accuracy per
    quantization width); nothing in the planner computes with it.
    """

    name: str
    layers: tuple[LayerSpec, ...]
    quant: QuantConfig
    input_bytes: int
    metadata_accuracy: Mapping[int, float] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("model name must be non-empty")
        if not self.layers:
            raise ValidationError(f"model {self.name!r}: layers must be non-empty")
        seen: set[str] = set()
        for layer in self.layers:
            if layer.id in seen:
                raise ValidationError(f"model {self.name!r}: duplicate layer id {layer.id!r}")
            seen.add(layer.id)
        for layer in self.layers[:-1]:
            if layer.out_activation_bytes < 1:
                raise ValidationError(
                    f"model {self.name!r}: non-terminal layer {layer.id!r} must have "
                    "out_activation_bytes >= 1"
                )
        if not isinstance(self.input_bytes, int) or self.input_bytes < 1:
            raise ValidationError(f"model {self.name!r}: input_bytes must be >= 1")
        if self.metadata_accuracy is not None:
            for bits, acc in self.metadata_accuracy.items():
                if bits not in VALID_QUANT_BITS:
                    raise ValidationError(f"model {self.name!r}: accuracy key {bits} not a valid quant width")
                if not 0.0 <= acc <= 1.0:
                    raise ValidationError(f"model {self.name!r}: accuracy[{bits}] outside [0, 1]")

    def __len__(self) -> int:
        return len(self.layers)

    def layer_input_bytes(self, index: int) -> int:
        """Bytes arriving at layer ``index``: the model input for layer 0."""
        if index == 0:
            return self.input_bytes
        return self.layers[index - 1].out_activation_bytes

    @property
    def output_bytes(self) -> int:
        return self.layers[-1].out_activation_bytes

    def total_weight_footprint(self) -> int:
        return weight_footprint(self, (0, len(self.layers)))


def _check_span(graph: ModelGraph, span: tuple[int, int]) -> tuple[int, int]:
    start, stop = span
    if not (0 <= start < stop <= len(graph.layers)):
        raise RangeError(f"range [{start}, {stop}) out of bounds for {len(graph.layers)} layers")
    return start, stop


def weight_footprint(graph: ModelGraph, span: tuple[int, int]) -> int:
    """Packed weight bytes for the layers in ``span``, ceiling applied once per span."""
    start, stop = _check_span(graph, span)
    bits = sum(layer.weight_count for layer in graph.layers[start:stop]) * graph.quant.weight_bits
    return (bits + 7) // 8


def bias_footprint(graph: ModelGraph, span: tuple[int, int]) -> int:
    """Bias bytes for ``span``; biases are always stored at 8 bits each."""
    start, stop = _check_span(graph, span)
    bits = sum(layer.bias_count for layer in graph.layers[start:stop]) * BIAS_BITS
    return (bits + 7) // 8


def segment(graph: ModelGraph, cuts: Sequence[int]) -> list[tuple[int, int]]:
    """Split the chain at ``cuts`` into contiguous half-open ranges.

    ``k`` cuts yield ``k + 1`` segments covering every layer in order.
    """
    n = len(graph.layers)
    previous = 0
    bounds = [0]
    for cut in cuts:
        if not (0 < cut < n):
            raise CutError(f"cut {cut} out of range (0, {n})")
        if cut <= previous:
            raise CutError(f"cuts must be strictly increasing: {list(cuts)}")
        bounds.append(cut)
        previous = cut
    bounds.append(n)
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise ValidationError(f"{context}: missing required field {key!r}")
    return mapping[key]


def model_from_dict(data: Mapping) -> ModelGraph:
    """Build a validated ModelGraph from a decoded key-value tree."""
    if not isinstance(data, Mapping):
        raise ValidationError("model file must decode to an object")
    name = _require(data, "name", "model")
    quant = QuantConfig(weight_bits=_require(data, "quant_bits", f"model {name!r}"))
    raw_layers = _require(data, "layers", f"model {name!r}")
    if not isinstance(raw_layers, list):
        raise ValidationError(f"model {name!r}: layers must be an array")
    layers = []
    for i, raw in enumerate(raw_layers):
        ctx = f"model {name!r} layer[{i}]"
        kind_tag = _require(raw, "kind", ctx)
        try:
            kind = LayerKind(kind_tag)
        except ValueError:
            raise ValidationError(f"{ctx}: unknown kind {kind_tag!r}") from None
        layers.append(
            LayerSpec(
                id=_require(raw, "id", ctx),
                kind=kind,
                macs=_require(raw, "macs", ctx),
                weight_count=_require(raw, "weight_count", ctx),
                bias_count=_require(raw, "bias_count", ctx),
                out_activation_bytes=_require(raw, "out_activation_bytes", ctx),
            )
        )
    accuracy = None
    if data.get("accuracy") is not None:
        try:
            accuracy = {int(k): float(v) for k, v in data["accuracy"].items()}
        except (TypeError, ValueError):
            raise ValidationError(f"model {name!r}: accuracy must map quant bits to fractions") from None
    return ModelGraph(
        name=name,
        layers=tuple(layers),
        quant=quant,
        input_bytes=_require(data, "input_bytes", f"model {name!r}"),
        metadata_accuracy=accuracy,
    )


def model_to_dict(graph: ModelGraph) -> dict:
    data: dict = {
        "name": graph.name,
        "quant_bits": graph.quant.weight_bits,
        "input_bytes": graph.input_bytes,
        "layers": [
            {
                "id": layer.id,
                "kind": layer.kind.value,
                "macs": layer.macs,
                "weight_count": layer.weight_count,
                "bias_count": layer.bias_count,
                "out_activation_bytes": layer.out_activation_bytes,
            }
            for layer in graph.layers
        ],
    }
    if graph.metadata_accuracy is not None:
        data["accuracy"] = {str(k): v for k, v in sorted(graph.metadata_accuracy.items())}
    return data


def load_model(path: str | Path) -> ModelGraph:
    """Load and validate a model file (JSON per the documented schema)."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return model_from_dict(data)


def write_model(graph: ModelGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(graph), indent=2) + "\n")
