"""bodynet: planning and simulation for body-area fleets of tiny AI accelerators."""

from .errors import (
    BodynetError,
    CutError,
    DomainError,
    DuplicateIdError,
    InfeasibleError,
    InstanceTooLargeError,
    NoCandidateMeetsFloorError,
    NoOutputError,
    NoRouteError,
    NoSensorError,
    OutOfResourceError,
    ParseError,
    RangeError,
    ScenarioError,
    UnknownIdError,
    UnknownModelError,
    ValidationError,
)
from .fleet import (
    AppSpec,
    AvailabilityChange,
    AvailabilityEvent,
    AvailabilitySnapshot,
    Binding,
    DeviceClass,
    DeviceSpec,
    Fleet,
    LinkSpec,
    ResourceNeed,
    WearStatus,
    available_at,
    bind_virtual,
    load_fleet,
)
from .model_ir import (
    LayerKind,
    LayerSpec,
    ModelGraph,
    QuantConfig,
    bias_footprint,
    load_model,
    segment,
    weight_footprint,
    write_model,
)
from .plans import (
    ExecutionPlan,
    Objective,
    ObjectiveKind,
    PlannedApp,
    PlanSegment,
    SearchConfig,
)
from .thermal import (
    SensorWindow,
    ThermalConfig,
    ThermalState,
    dvfs_max_utilization,
    power_of_utilization,
    predict_wear_status,
    steady_state_temp,
    temp_step,
    thermal_feasible,
)

__version__ = "0.1.0"
