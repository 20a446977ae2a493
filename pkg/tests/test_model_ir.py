from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodynet import (
    CutError,
    LayerKind,
    LayerSpec,
    ModelGraph,
    QuantConfig,
    RangeError,
    ValidationError,
    bias_footprint,
    load_model,
    segment,
    weight_footprint,
    write_model,
)
from bodynet.model_ir import model_from_dict, model_to_dict

from conftest import make_model


def _model_dict(nlayers=3, quant_bits=8):
    return {
        "name": "demo",
        "quant_bits": quant_bits,
        "input_bytes": 1000,
        "layers": [
            {
                "id": f"l{i}",
                "kind": "conv",
                "macs": 1000,
                "weight_count": 100,
                "bias_count": 4,
                "out_activation_bytes": 64,
            }
            for i in range(nlayers)
        ],
    }


class TestLoadModel:
    def test_well_formed_chain_round_trips_in_order(self, tmp_path):
        path = tmp_path / "demo.model"
        path.write_text(json.dumps(_model_dict(3)))
        graph = load_model(path)
        assert [l.id for l in graph.layers] == ["l0", "l1", "l2"]
        assert graph.quant.weight_bits == 8

    def test_duplicate_layer_id_names_the_id(self):
        data = _model_dict(2)
        data["layers"][1]["id"] = "l0"
        with pytest.raises(ValidationError, match="l0"):
            model_from_dict(data)

    def test_quant_bits_three_rejected(self):
        with pytest.raises(ValidationError, match="1,2,4,8"):
            model_from_dict(_model_dict(quant_bits=3))

    def test_malformed_file_is_parse_error(self, tmp_path):
        from bodynet import ParseError

        path = tmp_path / "bad.model"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_model(path)

    def test_pool_layer_with_weights_rejected(self):
        with pytest.raises(ValidationError, match="weight_count"):
            LayerSpec(id="p", kind=LayerKind.POOL, macs=0, weight_count=5,
                      bias_count=0, out_activation_bytes=10)

    def test_accuracy_metadata_validated(self):
        data = _model_dict()
        data["accuracy"] = {"8": 1.5}
        with pytest.raises(ValidationError):
            model_from_dict(data)
        data["accuracy"] = {"8": 0.65}
        graph = model_from_dict(data)
        assert graph.metadata_accuracy == {8: 0.65}


class TestFootprints:
    def test_1000_weights_at_8_bits_is_1000_bytes(self):
        graph = make_model(1, quant_bits=8, weights=1000)
        assert weight_footprint(graph, (0, 1)) == 1000

    def test_1000_weights_at_4_bits_is_500_bytes(self):
        graph = make_model(1, quant_bits=4, weights=1000)
        assert weight_footprint(graph, (0, 1)) == 500

    def test_3_weights_at_1_bit_rounds_up_to_1_byte(self):
        graph = make_model(1, quant_bits=1, weights=3)
        assert weight_footprint(graph, (0, 1)) == 1

    def test_bias_footprint_is_one_byte_per_bias(self):
        graph = make_model(2, bias=7)
        assert bias_footprint(graph, (0, 2)) == 14

    def test_out_of_bounds_range_raises(self):
        graph = make_model(3)
        with pytest.raises(RangeError):
            weight_footprint(graph, (0, 4))
        with pytest.raises(RangeError):
            weight_footprint(graph, (2, 2))


class TestSegment:
    def test_single_cut(self):
        graph = make_model(5)
        assert segment(graph, [2]) == [(0, 2), (2, 5)]

    def test_no_cuts_is_identity(self):
        graph = make_model(5)
        assert segment(graph, []) == [(0, 5)]

    def test_duplicate_cut_rejected(self):
        graph = make_model(5)
        with pytest.raises(CutError):
            segment(graph, [2, 2])

    def test_out_of_range_cut_rejected(self):
        graph = make_model(5)
        with pytest.raises(CutError):
            segment(graph, [5])
        with pytest.raises(CutError):
            segment(graph, [0])


@st.composite
def models_and_cuts(draw):
    nlayers = draw(st.integers(min_value=1, max_value=12))
    bits = draw(st.sampled_from([1, 2, 4, 8]))
    weights = draw(st.lists(st.integers(0, 5000), min_size=nlayers, max_size=nlayers))
    layers = tuple(
        LayerSpec(id=f"l{i}", kind=LayerKind.CONV, macs=10, weight_count=w,
                  bias_count=1, out_activation_bytes=8)
        for i, w in enumerate(weights)
    )
    graph = ModelGraph(name="g", layers=layers, quant=QuantConfig(bits), input_bytes=16)
    cuts = sorted(draw(st.sets(st.integers(1, nlayers - 1))) if nlayers > 1 else [])
    return graph, list(cuts)


class TestProperties:
    @given(models_and_cuts())
    @settings(max_examples=200, deadline=None)
    def test_segments_cover_chain_in_order(self, case):
        graph, cuts = case
        ranges = segment(graph, cuts)
        assert len(ranges) == len(cuts) + 1
        flat = [i for start, stop in ranges for i in range(start, stop)]
        assert flat == list(range(len(graph.layers)))

    @given(models_and_cuts())
    @settings(max_examples=200, deadline=None)
    def test_footprint_additive_up_to_segment_ceiling(self, case):
        graph, cuts = case
        full = weight_footprint(graph, (0, len(graph.layers)))
        parts = [weight_footprint(graph, r) for r in segment(graph, cuts)]
        assert full <= sum(parts) <= full + len(parts)

    @given(models_and_cuts())
    @settings(max_examples=100, deadline=None)
    def test_serialization_round_trip(self, case):
        graph, _ = case
        assert model_from_dict(model_to_dict(graph)) == graph

    def test_file_round_trip(self, tmp_path):
        graph = make_model(5, quant_bits=4, weights=333)
        path = tmp_path / "g.model"
        write_model(graph, path)
        assert load_model(path) == graph

    def test_dict_round_trip_preserves_accuracy(self):
        graph = ModelGraph(
            name="g",
            layers=(LayerSpec(id="l0", kind=LayerKind.FC, macs=5, weight_count=3,
                              bias_count=1, out_activation_bytes=4),),
            quant=QuantConfig(8),
            input_bytes=4,
            metadata_accuracy={8: 0.65, 4: 0.38},
        )
        assert model_from_dict(model_to_dict(graph)) == graph
