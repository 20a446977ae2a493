"""Exception types shared across the package."""

from __future__ import annotations


class BodynetError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(BodynetError):
    """A model, fleet, or scenario file could not be decoded."""


class ValidationError(BodynetError):
    """A decoded object violates a structural invariant."""


class RangeError(BodynetError):
    """A layer range falls outside the model's layer list."""


class CutError(BodynetError):
    """Cut indices are unsorted, duplicated, or out of range."""


class NoSensorError(BodynetError):
    """No available device offers the sensing modality an app needs."""


class NoOutputError(BodynetError):
    """No available device offers the output interface an app needs."""


class NoRouteError(BodynetError):
    """Two distinct devices have no direct link between them."""


class DomainError(BodynetError):
    """A numeric argument is outside its documented domain."""


class InfeasibleError(BodynetError):
    """No frequency scale satisfies the thermal threshold (idle power alone overheats)."""


class OutOfResourceError(BodynetError):
    """No feasible plan exists for an app (OOR).

    ``constraint`` names the binding limit: one of ``weight_mem``,
    ``bias_mem``, ``data_mem``, ``thermal``, ``route``, ``sensor``, ``output``.
    """

    def __init__(self, app_id: str, constraint: str, detail: str = ""):
        self.app_id = app_id
        self.constraint = constraint
        self.detail = detail
        msg = f"app {app_id!r}: out of resource ({constraint})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InstanceTooLargeError(BodynetError):
    """The instance exceeds the brute-force search guard."""


class NoCandidateMeetsFloorError(BodynetError):
    """No candidate plan reaches the requested throughput floor."""


class DuplicateIdError(BodynetError):
    """An app id is already registered."""


class UnknownIdError(BodynetError):
    """An app id is not registered."""


class UnknownModelError(BodynetError):
    """An app references a model name that is not loaded."""


class ScenarioError(BodynetError):
    """A scenario file is structurally invalid or references missing inputs."""
