"""Application registry: register/unregister with pure state transitions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import DuplicateIdError, UnknownIdError, UnknownModelError
from .fleet import AppSpec
from .model_ir import ModelGraph


class AppStatus(str, Enum):
    PLANNED = "planned"
    RUNNING = "running"
    SUSPENDED = "suspended"


@dataclass(frozen=True)
class Registry:
    """Registered apps and their lifecycle status.

    Instances are immutable; register/unregister return updated copies, so a
    log of operations replays to the same registry from any starting point.
    """

    models: Mapping[str, ModelGraph] = field(default_factory=dict)
    apps: Mapping[str, AppSpec] = field(default_factory=dict)
    status: Mapping[str, AppStatus] = field(default_factory=dict)

    def app_order(self) -> tuple[str, ...]:
        return tuple(self.apps)


def register(registry: Registry, app: AppSpec) -> Registry:
    """Add an app with status ``planned``; the next planning pass includes it."""
    if app.id in registry.apps:
        raise DuplicateIdError(f"app {app.id!r} already registered")
    if app.model not in registry.models:
        raise UnknownModelError(f"app {app.id!r} references unknown model {app.model!r}")
    apps = dict(registry.apps)
    apps[app.id] = app
    status = dict(registry.status)
    status[app.id] = AppStatus.PLANNED
    return Registry(models=registry.models, apps=apps, status=status)


def unregister(registry: Registry, app_id: str) -> Registry:
    """Remove an app; its reservations are released at the next planning pass."""
    if app_id not in registry.apps:
        raise UnknownIdError(f"app {app_id!r} not registered")
    apps = dict(registry.apps)
    del apps[app_id]
    status = dict(registry.status)
    del status[app_id]
    return Registry(models=registry.models, apps=apps, status=status)


def set_status(registry: Registry, app_id: str, new_status: AppStatus) -> Registry:
    if app_id not in registry.apps:
        raise UnknownIdError(f"app {app_id!r} not registered")
    status = dict(registry.status)
    status[app_id] = new_status
    return Registry(models=registry.models, apps=registry.apps, status=status)
