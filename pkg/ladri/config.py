"""Configuration types for scenarios, sensing, labeling, sweeps and training.

Every type validates its own invariants on construction and raises
:class:`ConfigError` naming the offending field. The ``*_from_dict`` parsers
mirror the JSON documents field-for-field and prefix nested field paths
(``vehicles[1].speed``, ``fault.magnitude``) so a bad document points at the
exact entry.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from ladri.consts import (
    A_MAX,
    A_MIN,
    CONTROLLABILITY_DECEL_THRESHOLDS,
    FEATURE_NAMES,
    NUM_STAGES,
    SEVERITY_DV_THRESHOLDS,
    STAGE_TABLE,
    TTC_FORCE_C3,
    TTC_RAISE_ONE,
)
from ladri.errors import ConfigError

UINT64_MAX = (1 << 64) - 1
PAPER_LEAD_SPEED = 16.67  # 60 km/h


class Role(str, Enum):
    EGO = "Ego"
    LEAD = "Lead"
    FOLLOWER = "Follower"


class Policy(str, Enum):
    ACC = "ACC"
    CONSTANT_SPEED = "ConstantSpeed"
    SCRIPTED_PROFILE = "ScriptedProfile"


class FaultKind(str, Enum):
    UNINTENDED_ACCEL = "UnintendedAccel"
    UNINTENDED_BRAKE = "UnintendedBrake"


def _finite(path: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value}")
    return value


def _positive(path: str, value) -> float:
    value = _finite(path, value)
    if value <= 0:
        raise ConfigError(path, f"must be > 0, got {value}")
    return value


def _non_negative(path: str, value) -> float:
    value = _finite(path, value)
    if value < 0:
        raise ConfigError(path, f"must be >= 0, got {value}")
    return value


def _seed(path: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an unsigned integer, got {value!r}")
    if value < 0 or value > UINT64_MAX:
        raise ConfigError(path, f"out of unsigned 64-bit range: {value}")
    return value


def _enum(path: str, enum_cls, value):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(member.value for member in enum_cls)
        raise ConfigError(path, f"expected one of {{{allowed}}}, got {value!r}")


@dataclass(frozen=True)
class ActuatorLimits:
    a_min: float = A_MIN
    a_max: float = A_MAX

    def __post_init__(self):
        if _finite("a_min", self.a_min) >= 0:
            raise ConfigError("a_min", f"must be < 0, got {self.a_min}")
        _positive("a_max", self.a_max)


@dataclass(frozen=True)
class AccParams:
    v_set: float = 20.0
    gap_des_time: float = 1.5
    gap_min: float = 2.0
    k_gap: float = 0.5
    k_speed: float = 0.8
    detection_range: float = 150.0

    def __post_init__(self):
        _non_negative("v_set", self.v_set)
        _non_negative("gap_des_time", self.gap_des_time)
        for name in ("gap_min", "k_gap", "k_speed", "detection_range"):
            _positive(name, getattr(self, name))


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    magnitude: float
    t_start: float
    t_end: float

    def __post_init__(self):
        object.__setattr__(self, "kind", _enum("kind", FaultKind, self.kind))
        magnitude = _finite("magnitude", self.magnitude)
        if not 0 < magnitude <= 1:
            raise ConfigError("magnitude", f"must lie in (0, 1], got {magnitude}")
        if _finite("t_start", self.t_start) >= _finite("t_end", self.t_end):
            raise ConfigError("t_end", f"must exceed t_start ({self.t_start}), got {self.t_end}")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class NoiseSpec:
    sigma_range: float = 0.3
    sigma_range_rate: float = 0.2
    sigma_wheel: float = 0.1
    sigma_pedal: float = 0.01
    dropout_prob: float = 0.0

    def __post_init__(self):
        for name in ("sigma_range", "sigma_range_rate", "sigma_wheel", "sigma_pedal"):
            _non_negative(name, getattr(self, name))
        dropout = _finite("dropout_prob", self.dropout_prob)
        if not 0 <= dropout < 1:
            raise ConfigError("dropout_prob", f"must lie in [0, 1), got {dropout}")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class VehicleSetup:
    """Initial state and driving policy of one vehicle.

    ``profile`` holds ``(t, accel)`` breakpoints of a piecewise-constant
    acceleration schedule used by the ScriptedProfile policy.
    """

    role: Role
    position: float
    speed: float
    policy: Policy = Policy.CONSTANT_SPEED
    profile: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "role", _enum("role", Role, self.role))
        object.__setattr__(self, "policy", _enum("policy", Policy, self.policy))
        _finite("position", self.position)
        _non_negative("speed", self.speed)
        object.__setattr__(self, "profile", tuple(tuple(point) for point in self.profile))
        last_t = -math.inf
        for i, point in enumerate(self.profile):
            if len(point) != 2:
                raise ConfigError(f"profile[{i}]", "expected a [t, accel] pair")
            t, accel = point
            t = _non_negative(f"profile[{i}][0]", t)
            _finite(f"profile[{i}][1]", accel)
            if t <= last_t:
                raise ConfigError(f"profile[{i}][0]", "breakpoint times must be strictly increasing")
            last_t = t
        if self.policy == Policy.SCRIPTED_PROFILE and not self.profile:
            raise ConfigError("profile", "ScriptedProfile policy needs at least one breakpoint")

    def scripted_accel(self, t: float) -> float:
        accel = 0.0
        for start, value in self.profile:
            if t < start:
                break
            accel = value
        return accel


_ROLE_ORDER = (Role.FOLLOWER, Role.EGO, Role.LEAD)


@dataclass(frozen=True)
class ScenarioConfig:
    vehicles: Tuple[VehicleSetup, ...]
    dt: float = 0.01
    duration: float = 20.0
    acc_params: AccParams = field(default_factory=AccParams)
    limits: ActuatorLimits = field(default_factory=ActuatorLimits)
    fault: Optional[FaultSpec] = None
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        dt = _positive("dt", self.dt)
        if _finite("duration", self.duration) < dt:
            raise ConfigError("duration", f"must be >= dt ({dt}), got {self.duration}")
        _seed("seed", self.seed)
        roles = [v.role for v in self.vehicles]
        if roles.count(Role.EGO) != 1:
            raise ConfigError("vehicles", f"expected exactly one Ego vehicle, found {roles.count(Role.EGO)}")
        for role in (Role.LEAD, Role.FOLLOWER):
            if roles.count(role) > 1:
                raise ConfigError("vehicles", f"at most one {role.value} vehicle is supported")
        ordered = sorted(self.vehicles, key=lambda v: _ROLE_ORDER.index(v.role))
        for rear, front in zip(ordered, ordered[1:]):
            if front.position <= rear.position:
                index = self.vehicles.index(front)
                raise ConfigError(
                    f"vehicles[{index}].position",
                    f"{front.role.value} must be strictly ahead of {rear.role.value}",
                )
        if self.fault is not None and self.fault.t_end > self.duration:
            raise ConfigError("fault.t_end", f"must be <= duration ({self.duration}), got {self.fault.t_end}")

    def vehicle(self, role: Role) -> Optional[VehicleSetup]:
        for setup in self.vehicles:
            if setup.role == role:
                return setup
        return None

    @property
    def steps(self) -> int:
        # floor(duration/dt) guarded against 20.0/0.01 == 1999.9999999999998
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass(frozen=True)
class OracleThresholds:
    severity_dv: Tuple[float, float, float] = SEVERITY_DV_THRESHOLDS
    controllability_decel: Tuple[float, float, float] = CONTROLLABILITY_DECEL_THRESHOLDS
    ttc_force_c3: float = TTC_FORCE_C3
    ttc_raise_one: float = TTC_RAISE_ONE
    table: Tuple[Tuple[int, ...], ...] = STAGE_TABLE

    def __post_init__(self):
        for name in ("severity_dv", "controllability_decel"):
            values = getattr(self, name)
            if len(values) != 3:
                raise ConfigError(name, f"expected 3 thresholds, got {len(values)}")
            for i, value in enumerate(values):
                _positive(f"{name}[{i}]", value)
            if list(values) != sorted(values) or len(set(values)) != 3:
                raise ConfigError(name, "thresholds must be strictly increasing")
        _non_negative("ttc_force_c3", self.ttc_force_c3)
        if _non_negative("ttc_raise_one", self.ttc_raise_one) < self.ttc_force_c3:
            raise ConfigError("ttc_raise_one", "must be >= ttc_force_c3")
        if len(self.table) != 4 or any(len(row) != 4 for row in self.table):
            raise ConfigError("table", "expected a 4x4 decision table (rows C0..C3, columns S0..S3)")
        for c, row in enumerate(self.table):
            for s, stage in enumerate(row):
                if not isinstance(stage, int) or not 0 <= stage < NUM_STAGES:
                    raise ConfigError(f"table[{c}][{s}]", f"stage must be an integer in [0, 3], got {stage!r}")


@dataclass(frozen=True)
class SweepConfig:
    base: ScenarioConfig
    fault_kinds: Tuple[FaultKind, ...] = (FaultKind.UNINTENDED_ACCEL, FaultKind.UNINTENDED_BRAKE)
    magnitudes: Tuple[float, ...] = (0.2, 0.35, 0.5, 0.65, 0.8)
    include_fault_free: bool = True
    fault_start: float = 3.0
    fault_end: Optional[float] = None
    initial_gaps: Tuple[float, ...] = (20.0, 40.0, 80.0, 200.0)
    lead_speeds: Tuple[float, ...] = (8.33, PAPER_LEAD_SPEED, 22.22, 27.78)
    ego_policies: Tuple[Policy, ...] = (Policy.ACC, Policy.CONSTANT_SPEED)
    noise_on: bool = True
    master_seed: int = 0
    frame_stride: int = 5

    def __post_init__(self):
        object.__setattr__(self, "fault_kinds", tuple(
            _enum(f"fault_kinds[{i}]", FaultKind, k) for i, k in enumerate(self.fault_kinds)
        ))
        object.__setattr__(self, "ego_policies", tuple(
            _enum(f"ego_policies[{i}]", Policy, p) for i, p in enumerate(self.ego_policies)
        ))
        for name in ("magnitudes", "initial_gaps", "lead_speeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.base.vehicle(Role.LEAD) is None:
            raise ConfigError("base.vehicles", "sweep base scenario needs a Lead vehicle")
        for name in ("magnitudes", "initial_gaps", "lead_speeds", "ego_policies"):
            if not getattr(self, name):
                raise ConfigError(name, "grid must not be empty")
        for i, magnitude in enumerate(self.magnitudes):
            if not 0 < _finite(f"magnitudes[{i}]", magnitude) <= 1:
                raise ConfigError(f"magnitudes[{i}]", f"must lie in (0, 1], got {magnitude}")
        for i, gap in enumerate(self.initial_gaps):
            _positive(f"initial_gaps[{i}]", gap)
        for i, speed in enumerate(self.lead_speeds):
            _non_negative(f"lead_speeds[{i}]", speed)
        if not any(abs(speed - PAPER_LEAD_SPEED) < 1e-9 for speed in self.lead_speeds):
            raise ConfigError("lead_speeds", f"grid must include {PAPER_LEAD_SPEED} m/s (60 km/h)")
        if not self.include_fault_free:
            raise ConfigError("include_fault_free", "at least one fault-free scenario is required")
        end = self.base.duration if self.fault_end is None else self.fault_end
        if not 0 <= _finite("fault_start", self.fault_start) < end <= self.base.duration:
            raise ConfigError("fault_end", "fault window must satisfy 0 <= fault_start < fault_end <= base.duration")
        _seed("master_seed", self.master_seed)
        if isinstance(self.frame_stride, bool) or not isinstance(self.frame_stride, int) or self.frame_stride < 1:
            raise ConfigError("frame_stride", f"must be a positive integer, got {self.frame_stride!r}")

    @property
    def fault_window(self) -> Tuple[float, float]:
        end = self.base.duration if self.fault_end is None else self.fault_end
        return self.fault_start, end


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = len(FEATURE_NAMES)
    hidden: Tuple[int, ...] = (16, 16)
    output_dim: int = NUM_STAGES

    def __post_init__(self):
        for name, width in [("input_dim", self.input_dim), ("output_dim", self.output_dim)] + [
            (f"hidden[{i}]", w) for i, w in enumerate(self.hidden)
        ]:
            if isinstance(width, bool) or not isinstance(width, int) or width < 1:
                raise ConfigError(name, f"layer width must be an integer >= 1, got {width!r}")
        if self.output_dim != NUM_STAGES:
            raise ConfigError("output_dim", f"must equal the number of stages ({NUM_STAGES})")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim,) + tuple(self.hidden) + (self.output_dim,)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    l2: float = 0.0
    class_weighting: bool = True

    def __post_init__(self):
        _positive("learning_rate", self.learning_rate)
        for name in ("batch_size", "epochs"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {value!r}")
        for name in ("beta1", "beta2"):
            if not 0 <= _finite(name, getattr(self, name)) < 1:
                raise ConfigError(name, f"must lie in [0, 1), got {getattr(self, name)}")
        _positive("epsilon", self.epsilon)
        _non_negative("l2", self.l2)
        _seed("seed", self.seed)


# --- JSON document parsing ---


def _nested(prefix: str, build, *args):
    try:
        return build(*args)
    except ConfigError as e:
        raise ConfigError(f"{prefix}.{e.field}" if e.field else prefix, _message(e))
    except TypeError as e:
        raise ConfigError(prefix, str(e))


def _message(error: ConfigError) -> str:
    text = str(error)
    head = f"[LADRI] {error.field}: "
    return text[len(head):] if text.startswith(head) else text


def _require_mapping(path: str, data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a JSON object, got {type(data).__name__}")
    return data


def _check_keys(path: str, data: dict, cls) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")


def _simple(cls, data, path: str):
    data = _require_mapping(path or cls.__name__, data)
    _check_keys(path, data, cls)
    return cls(**data)


def vehicle_from_dict(data: dict) -> VehicleSetup:
    data = dict(_require_mapping("vehicle", data))
    _check_keys("", data, VehicleSetup)
    if "profile" in data:
        data["profile"] = tuple(tuple(point) for point in data["profile"])
    for key in ("role", "position", "speed"):
        if key not in data:
            raise ConfigError(key, "missing required field")
    data["role"] = _enum("role", Role, data["role"])
    data["policy"] = _enum("policy", Policy, data.get("policy", Policy.CONSTANT_SPEED.value))
    return VehicleSetup(**data)


def fault_from_dict(data: dict) -> FaultSpec:
    data = dict(_require_mapping("fault", data))
    _check_keys("", data, FaultSpec)
    for key in ("kind", "magnitude", "t_start", "t_end"):
        if key not in data:
            raise ConfigError(key, "missing required field")
    data["kind"] = _enum("kind", FaultKind, data["kind"])
    return FaultSpec(**data)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Builds a ScenarioConfig from its JSON document (an ``oracle`` block is ignored here)."""
    data = dict(_require_mapping("scenario", data))
    data.pop("oracle", None)
    _check_keys("", data, ScenarioConfig)
    if "vehicles" not in data or not isinstance(data["vehicles"], list):
        raise ConfigError("vehicles", "expected a list of vehicles")
    data["vehicles"] = tuple(
        _nested(f"vehicles[{i}]", vehicle_from_dict, v) for i, v in enumerate(data["vehicles"])
    )
    if "acc_params" in data:
        data["acc_params"] = _nested("acc_params", _simple, AccParams, data["acc_params"], "")
    if "limits" in data:
        data["limits"] = _nested("limits", _simple, ActuatorLimits, data["limits"], "")
    if data.get("fault") is not None:
        data["fault"] = _nested("fault", fault_from_dict, data["fault"])
    if "noise" in data:
        data["noise"] = _nested("noise", _simple, NoiseSpec, data["noise"], "")
    return ScenarioConfig(**data)


def oracle_from_dict(data: Optional[dict]) -> OracleThresholds:
    if data is None:
        return OracleThresholds()
    data = dict(_require_mapping("oracle", data))
    _check_keys("", data, OracleThresholds)
    for key in ("severity_dv", "controllability_decel"):
        if key in data:
            data[key] = tuple(data[key])
    if "table" in data:
        data["table"] = tuple(tuple(row) for row in data["table"])
    return _nested("oracle", lambda: OracleThresholds(**data))


def sweep_from_dict(data: dict) -> SweepConfig:
    data = dict(_require_mapping("sweep", data))
    _check_keys("", data, SweepConfig)
    if "base" not in data:
        raise ConfigError("base", "missing required field")
    data["base"] = _nested("base", scenario_from_dict, data["base"])
    if "fault_kinds" in data:
        data["fault_kinds"] = tuple(
            _enum(f"fault_kinds[{i}]", FaultKind, k) for i, k in enumerate(data["fault_kinds"])
        )
    if "ego_policies" in data:
        data["ego_policies"] = tuple(
            _enum(f"ego_policies[{i}]", Policy, p) for i, p in enumerate(data["ego_policies"])
        )
    for key in ("magnitudes", "initial_gaps", "lead_speeds"):
        if key in data:
            data[key] = tuple(data[key])
    return SweepConfig(**data)


def network_from_dict(data: dict) -> Tuple[NetworkSpec, TrainConfig]:
    """Parses a training spec document ``{"network": {...}, "train": {...}}``."""
    data = _require_mapping("spec", data)
    unknown = sorted(set(data) - {"network", "train"})
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    network = dict(_require_mapping("network", data.get("network", {})))
    if "hidden" in network:
        network["hidden"] = tuple(network["hidden"])
    spec = _nested("network", _simple, NetworkSpec, network, "")
    train = _nested("train", _simple, TrainConfig, data.get("train", {}), "")
    return spec, train


def to_dict(obj) -> dict:
    """JSON-ready dict of a config dataclass (enums as their values, tuples as lists)."""

    def convert(value):
        if isinstance(value, Enum):
            return value.value
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, (tuple, list)):
            return [convert(v) for v in value]
        return value

    return convert(obj)
