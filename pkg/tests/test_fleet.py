from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodynet import (
    AvailabilityChange,
    AvailabilityEvent,
    NoSensorError,
    ParseError,
    ResourceNeed,
    ValidationError,
    WearStatus,
    available_at,
    bind_virtual,
    load_fleet,
)
from bodynet.fleet import fleet_from_dict, fleet_to_dict, write_fleet

from conftest import FIXTURES, make_app, make_device, make_model, mesh_fleet


class TestLoadFleet:
    def test_max78000_like_profile_loads(self):
        fleet = load_fleet(FIXTURES / "max78000like.fleet")
        acc = fleet.device("acc0")
        assert acc.weight_mem_bytes == 442_000
        assert acc.bias_mem_bytes == 2_000
        assert acc.data_mem_bytes == 512_000
        assert acc.num_processors == 64

    def test_dangling_link_endpoint_rejected(self):
        data = fleet_to_dict(mesh_fleet((make_device("d0"), make_device("d1"))))
        data["links"][0]["dst"] = "ghost"
        with pytest.raises(ValidationError, match="ghost"):
            fleet_from_dict(data)

    def test_empty_device_array_rejected(self):
        with pytest.raises(ValidationError, match=">=1 device"):
            fleet_from_dict({"ambient_c": 25.0, "devices": [], "links": []})

    def test_duplicate_device_id_rejected(self):
        data = fleet_to_dict(mesh_fleet((make_device("d0"), make_device("d1"))))
        data["devices"][1]["id"] = "d0"
        with pytest.raises(ValidationError, match="duplicate"):
            fleet_from_dict(data)

    def test_malformed_json_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.fleet"
        path.write_text("[}")
        with pytest.raises(ParseError):
            load_fleet(path)

    def test_round_trip(self, tmp_path, two_device_fleet):
        path = tmp_path / "f.fleet"
        write_fleet(two_device_fleet, path)
        assert load_fleet(path) == two_device_fleet

    def test_active_power_below_idle_rejected(self):
        with pytest.raises(ValidationError, match="active_power_w"):
            make_device("d0", idle_power_w=0.5, active_power_w=0.1)


class TestAvailableAt:
    def test_no_events_all_worn_and_available(self, two_device_fleet):
        snap = available_at(two_device_fleet, [], 0.0)
        assert snap.available == {"d0", "d1"}
        assert all(w is WearStatus.WORN for w in snap.wear.values())

    def test_leave_applies_at_or_before_query_time(self, two_device_fleet):
        events = [AvailabilityEvent(5.0, "d1", AvailabilityChange.LEAVE)]
        assert "d1" in available_at(two_device_fleet, events, 4.9).available
        assert "d1" not in available_at(two_device_fleet, events, 10.0).available

    def test_last_writer_wins_on_wear(self, two_device_fleet):
        events = [
            AvailabilityEvent(3.0, "d0", AvailabilityChange.DOFFED),
            AvailabilityEvent(7.0, "d0", AvailabilityChange.WORN),
        ]
        snap = available_at(two_device_fleet, events, 5.0)
        assert "d0" in snap.available
        assert snap.wear["d0"] is WearStatus.DOFFED
        assert available_at(two_device_fleet, events, 8.0).wear["d0"] is WearStatus.WORN

    def test_equal_time_events_apply_in_file_order(self, two_device_fleet):
        events = [
            AvailabilityEvent(1.0, "d0", AvailabilityChange.DOFFED),
            AvailabilityEvent(1.0, "d0", AvailabilityChange.WORN),
        ]
        assert available_at(two_device_fleet, events, 1.0).wear["d0"] is WearStatus.WORN

    def test_initial_wear_override_from_fleet(self):
        fleet = mesh_fleet(
            (make_device("d0"), make_device("d1")),
            initial_wear={"d1": WearStatus.DOFFED},
        )
        snap = available_at(fleet, [], 0.0)
        assert snap.wear["d1"] is WearStatus.DOFFED

    @given(st.lists(st.tuples(st.floats(0, 100), st.sampled_from(list(AvailabilityChange))),
                    max_size=20),
           st.floats(0, 100))
    @settings(max_examples=100, deadline=None)
    def test_repeated_queries_agree(self, raw_events, t):
        fleet = mesh_fleet((make_device("d0"), make_device("d1")))
        events = [AvailabilityEvent(time, "d0", change) for time, change in raw_events]
        first = available_at(fleet, events, t)
        second = available_at(fleet, events, t)
        assert first.available == second.available
        assert first.wear == second.wear


class TestBindVirtual:
    def test_ppg_watch_and_earbud_output(self):
        # An app described as (ppg sensing, heart model, anomaly detection,
        # earbud speaker) binds the only ppg device and the only speaker.
        watch = make_device("watch", sensors=("ppg",), outputs=("display",))
        earbud = make_device("earbud", sensors=("microphone",), outputs=("speaker",))
        fleet = mesh_fleet((watch, earbud))
        model = make_model()
        app = make_app("heart", modality="ppg", interface="speaker",
                       postprocess="anomaly_detection")
        binding = bind_virtual(app, fleet, available_at(fleet, [], 0.0), model)
        assert binding.sensor_device == "watch"
        assert binding.output_device == "earbud"

    def test_body_location_match_wins(self):
        left = make_device("a_left", sensors=("ppg",), outputs=("haptic",),
                           location="left_wrist")
        right = make_device("b_right", sensors=("ppg",), outputs=("haptic",),
                            location="right_wrist")
        fleet = mesh_fleet((left, right))
        app = make_app(sensor_need=ResourceNeed("ppg", location="right_wrist"))
        binding = bind_virtual(app, fleet, available_at(fleet, [], 0.0), make_model())
        assert binding.sensor_device == "b_right"

    def test_missing_modality_raises(self, two_device_fleet):
        app = make_app(modality="microphone")
        with pytest.raises(NoSensorError):
            bind_virtual(app, two_device_fleet, available_at(two_device_fleet, [], 0.0),
                         make_model())

    def test_binding_respects_availability(self, two_device_fleet):
        events = [AvailabilityEvent(1.0, "d0", AvailabilityChange.LEAVE)]
        snap = available_at(two_device_fleet, events, 2.0)
        with pytest.raises(NoSensorError):
            bind_virtual(make_app(), two_device_fleet, snap, make_model())

    def test_adding_capable_device_never_breaks_binding(self):
        # Monotonicity: a successful binding stays successful when the fleet grows.
        base = (make_device("d0", sensors=("ppg",), outputs=("haptic",)),)
        fleet_small = mesh_fleet(base)
        app = make_app()
        model = make_model()
        binding_small = bind_virtual(app, fleet_small, available_at(fleet_small, [], 0.0), model)
        assert binding_small.sensor_device == "d0"
        fleet_big = mesh_fleet(base + (make_device("d1", sensors=("ppg",)),))
        binding_big = bind_virtual(app, fleet_big, available_at(fleet_big, [], 0.0), model)
        assert binding_big.sensor_device in {"d0", "d1"}

    def test_bound_devices_always_offer_capability(self):
        # Randomized capability check over shuffled fleets.
        import random

        rng = random.Random(7)
        for trial in range(50):
            devices = []
            for i in range(rng.randint(1, 5)):
                sensors = tuple(rng.sample(["ppg", "imu", "microphone"],
                                           rng.randint(0, 3)))
                outputs = tuple(rng.sample(["haptic", "display"], rng.randint(0, 2)))
                devices.append(make_device(f"d{i}", sensors=sensors, outputs=outputs))
            fleet = mesh_fleet(tuple(devices))
            app = make_app(modality="imu", interface="display")
            snap = available_at(fleet, [], 0.0)
            try:
                binding = bind_virtual(app, fleet, snap, make_model())
            except Exception:
                continue
            assert "imu" in fleet.device(binding.sensor_device).sensors
            assert "display" in fleet.device(binding.output_device).outputs
