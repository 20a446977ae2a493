"""Lumped thermal model, wear-status prediction, comfort constraints, and DVFS throttling.

Each device is a single thermal node with resistance ``r_th`` and capacity
``c_th``. Temperature integrates with the exact exponential update, so
stepping twice by dt equals stepping once by 2*dt and there is no Euler
drift. Comfort constrains the predicted steady-state temperature: 42 degC
for worn skin-contact devices, 60 degC for doffed ones by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import DomainError, InfeasibleError, ValidationError
from .fleet import DeviceSpec, Fleet, WearStatus

DEFAULT_MOTION_THRESHOLD_G = 0.05

DVFS_RELATIVE_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ThermalConfig:
    """Comfort thresholds. Skin temperature = device temperature + offset."""

    t_skin_max_c: float = 42.0
    t_doffed_max_c: float = 60.0
    skin_offset_c: float = 0.0

    def __post_init__(self) -> None:
        if self.t_skin_max_c >= self.t_doffed_max_c:
            raise ValidationError("t_skin_max_c must be below t_doffed_max_c")


@dataclass
class ThermalState:
    """Mutable per-device temperature state, owned by the simulator loop."""

    temperature_c: dict[str, float]
    last_power_w: dict[str, float]

    @classmethod
    def at_ambient(cls, fleet: Fleet) -> "ThermalState":
        return cls(
            temperature_c={d.id: fleet.ambient_c for d in fleet.devices},
            last_power_w={d.id: 0.0 for d in fleet.devices},
        )


class Proximity:
    NEAR = "near"
    FAR = "far"
    ABSENT = "absent"

    ALL = (NEAR, FAR, ABSENT)


@dataclass(frozen=True)
class SensorWindow:
    """Aggregated sensor features over one observation window."""

    device: str
    imu_std_g: float
    proximity: str
    window_s: float

    def __post_init__(self) -> None:
        if self.imu_std_g < 0:
            raise ValidationError("imu_std_g must be >= 0")
        if self.window_s <= 0:
            raise ValidationError("window_s must be > 0")
        if self.proximity not in Proximity.ALL:
            raise ValidationError(f"unknown proximity {self.proximity!r}")


def power_of_utilization(device: DeviceSpec, util: float) -> float:
    """Linear power law: idle power plus utilization-proportional active delta."""
    if not 0.0 <= util <= 1.0:
        raise DomainError(f"utilization {util} outside [0, 1]")
    return device.idle_power_w + util * (device.active_power_w - device.idle_power_w)


def steady_state_temp(power_w: float, device: DeviceSpec, ambient_c: float) -> float:
    """Asymptotic temperature at constant dissipated power."""
    return ambient_c + power_w * device.r_th


def temp_step(
    temp_c: float, device: DeviceSpec, power_w: float, ambient_c: float, dt_s: float
) -> float:
    """Exact exponential step of the single-node model over ``dt_s`` seconds."""
    if dt_s <= 0:
        raise DomainError(f"dt must be > 0, got {dt_s}")
    t_ss = steady_state_temp(power_w, device, ambient_c)
    return t_ss + (temp_c - t_ss) * math.exp(-dt_s / (device.r_th * device.c_th))


def predict_wear_status(
    window: SensorWindow, motion_threshold_g: float = DEFAULT_MOTION_THRESHOLD_G
) -> WearStatus:
    """Rule-based wear classifier: proximity dominates, IMU micro-motion breaks ties.

    With no proximity reading, body micro-motion at or above the threshold
    means the device is being worn; a device resting on a surface is nearly
    still.
    """
    if window.proximity == Proximity.NEAR:
        return WearStatus.WORN
    if window.proximity == Proximity.FAR:
        return WearStatus.DOFFED
    return WearStatus.WORN if window.imu_std_g >= motion_threshold_g else WearStatus.DOFFED


@dataclass(frozen=True)
class ThermalCheck:
    feasible: bool
    temps_c: Mapping[str, float]
    violations: tuple[str, ...] = ()


def applicable_threshold(
    device: DeviceSpec, wear: WearStatus, cfg: ThermalConfig
) -> float | None:
    """Comfort ceiling for a device, or None when unconstrained.

    Worn devices without skin contact carry no comfort constraint.
    """
    if wear is WearStatus.DOFFED:
        return cfg.t_doffed_max_c
    if device.skin_contact:
        return cfg.t_skin_max_c - cfg.skin_offset_c
    return None


def thermal_feasible(
    utils: Mapping[str, float],
    wear: Mapping[str, WearStatus],
    fleet: Fleet,
    cfg: ThermalConfig,
) -> ThermalCheck:
    """Check predicted steady temperatures against the applicable ceilings.

    Devices absent from ``utils`` count as idle; their idle power still
    heats them, so a device can be infeasible while hosting nothing.
    """
    temps: dict[str, float] = {}
    violations: list[str] = []
    for device in fleet.devices:
        util = utils.get(device.id, 0.0)
        power = power_of_utilization(device, util)
        temp = steady_state_temp(power, device, fleet.ambient_c)
        temps[device.id] = temp
        limit = applicable_threshold(device, wear.get(device.id, WearStatus.WORN), cfg)
        if limit is not None and temp > limit + 1e-12:
            violations.append(device.id)
    return ThermalCheck(feasible=not violations, temps_c=temps, violations=tuple(violations))


def max_utilization_for_threshold(
    device: DeviceSpec, wear: WearStatus, ambient_c: float, cfg: ThermalConfig
) -> float:
    """Largest utilization keeping the steady temperature at or below the ceiling.

    Returns 1.0 when unconstrained and a negative value when idle power
    alone already overheats the device (no feasible utilization).
    """
    limit = applicable_threshold(device, wear, cfg)
    if limit is None:
        return 1.0
    max_power = (limit - ambient_c) / device.r_th
    delta = device.active_power_w - device.idle_power_w
    if delta == 0:
        return 1.0 if device.idle_power_w <= max_power else -1.0
    return min(1.0, (max_power - device.idle_power_w) / delta)


def dvfs_max_utilization(
    device: DeviceSpec, wear: WearStatus, ambient_c: float, cfg: ThermalConfig
) -> tuple[float, float]:
    """Largest frequency scale alpha keeping full-load steady temperature legal.

    Dynamic power scales as alpha**3 (frequency times voltage squared with
    voltage tracking frequency), so the root of
    ``idle + alpha**3 * (active - idle) = p_max`` is found by bisection to
    1e-4 relative tolerance. Returns (alpha, compute slowdown = 1/alpha).
    """
    limit = applicable_threshold(device, wear, cfg)
    if limit is None:
        return 1.0, 1.0
    max_power = (limit - ambient_c) / device.r_th

    def power(alpha: float) -> float:
        return device.idle_power_w + alpha**3 * (device.active_power_w - device.idle_power_w)

    if power(0.0) > max_power:
        raise InfeasibleError(
            f"device {device.id!r}: idle power alone exceeds the {limit} degC ceiling"
        )
    if power(1.0) <= max_power:
        return 1.0, 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > DVFS_RELATIVE_TOLERANCE * hi:
        mid = 0.5 * (lo + hi)
        if power(mid) <= max_power:
            lo = mid
        else:
            hi = mid
    alpha = lo
    if alpha <= 0.0:
        raise InfeasibleError(f"device {device.id!r}: no positive frequency scale is feasible")
    return alpha, 1.0 / alpha
