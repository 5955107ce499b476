"""Fixed-timestep longitudinal simulation of up to three vehicles on one lane.

Vehicles are points on a straight lane; the gap between two vehicles is the
difference of their positions. Each step computes every vehicle's command
from the states at ``t_k``, passes the ego command through the fault layer,
then integrates all vehicles with semi-implicit Euler.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ladri.config import (
    AccParams,
    ActuatorLimits,
    FaultKind,
    FaultSpec,
    NoiseSpec,
    Policy,
    Role,
    ScenarioConfig,
    VehicleSetup,
)
from ladri.errors import InvalidScene, InvalidState
from ladri.telemetry import traced_function

logger = logging.getLogger(__name__)

DEFAULT_LIMITS = ActuatorLimits()


@dataclass(frozen=True)
class VehicleState:
    position: float
    speed: float
    accel: float
    role: Role


@dataclass(frozen=True)
class CollisionEvent:
    front: Role
    rear: Role
    impact_dv: float
    time: float = 0.0


class TerminalKind(str, Enum):
    COMPLETED = "Completed"
    COLLISION = "Collision"


@dataclass(frozen=True)
class TerminalEvent:
    kind: TerminalKind
    time: float
    collision: Optional[CollisionEvent] = None


@dataclass(frozen=True)
class TraceRecord:
    """State of the scene at ``time`` and the ego command issued at that time."""

    time: float
    states: Tuple[VehicleState, ...]
    commanded_accel: float
    effective_accel: float
    fault_active: bool

    def state(self, role: Role) -> Optional[VehicleState]:
        for state in self.states:
            if state.role == role:
                return state
        return None


@dataclass(frozen=True)
class SimulationTrace:
    config: ScenarioConfig
    records: Tuple[TraceRecord, ...]
    terminal: TerminalEvent


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def step_vehicle(
    state: VehicleState,
    accel_cmd: float,
    dt: float,
    limits: ActuatorLimits = DEFAULT_LIMITS,
) -> VehicleState:
    """Advances one vehicle by ``dt`` with semi-implicit Euler.

    The commanded acceleration is clamped to the actuator envelope, speed is
    updated first and clamped at zero, then position moves with the new
    speed. When the zero clamp engages, the recorded acceleration is the one
    that actually stopped the vehicle, ``-v/dt``.
    """
    if not (math.isfinite(accel_cmd) and math.isfinite(dt) and dt > 0):
        raise InvalidState(f"step needs finite accel and dt > 0, got accel={accel_cmd}, dt={dt}")
    if not (math.isfinite(state.position) and math.isfinite(state.speed)):
        raise InvalidState(f"non-finite {state.role.value} state: x={state.position}, v={state.speed}")
    accel = _clamp(accel_cmd, limits.a_min, limits.a_max)
    speed = state.speed + accel * dt
    if speed < 0.0:
        accel = (0.0 - state.speed) / dt
        speed = 0.0
    return VehicleState(state.position + speed * dt, speed, accel, state.role)


def acc_command(
    ego: VehicleState,
    lead: Optional[VehicleState],
    p: AccParams,
    limits: ActuatorLimits = DEFAULT_LIMITS,
) -> float:
    """Linear gap/speed feedback ACC, never commanding more than cruise control would."""
    cruise = p.k_speed * (p.v_set - ego.speed)
    accel = cruise
    if lead is not None:
        gap = lead.position - ego.position
        if gap <= 0:
            raise InvalidScene(
                f"lead must be ahead of the controlled vehicle, gap is {gap} m"
            )
        if gap <= p.detection_range:
            gap_des = p.gap_min + p.gap_des_time * ego.speed
            follow = p.k_gap * (gap - gap_des) + p.k_speed * (lead.speed - ego.speed)
            accel = min(follow, cruise)
    return _clamp(accel, limits.a_min, limits.a_max)


def apply_fault(
    accel_cmd: float,
    fault: Optional[FaultSpec],
    t: float,
    limits: ActuatorLimits = DEFAULT_LIMITS,
) -> float:
    """Injects an actuator fault into the ego command while the fault window is open."""
    if fault is None or not fault.active(t):
        return accel_cmd
    if fault.kind == FaultKind.UNINTENDED_ACCEL:
        return _clamp(accel_cmd + fault.magnitude * limits.a_max, limits.a_min, limits.a_max)
    # brake request overrides the controller
    return _clamp(fault.magnitude * limits.a_min, limits.a_min, 0.0)


def detect_collision(front: VehicleState, rear: VehicleState) -> Optional[CollisionEvent]:
    if front.position - rear.position > 0:
        return None
    return CollisionEvent(front=front.role, rear=rear.role, impact_dv=rear.speed - front.speed)


def _policy_command(
    setup: VehicleSetup,
    state: VehicleState,
    ahead: Optional[VehicleState],
    t: float,
    config: ScenarioConfig,
) -> float:
    if setup.policy == Policy.ACC:
        return acc_command(state, ahead, config.acc_params, config.limits)
    if setup.policy == Policy.SCRIPTED_PROFILE:
        # profiles may ask for more than the actuators deliver
        return _clamp(setup.scripted_accel(t), config.limits.a_min, config.limits.a_max)
    return 0.0


_LANE_ORDER = (Role.FOLLOWER, Role.EGO, Role.LEAD)


@traced_function
def run_scenario(config: ScenarioConfig) -> SimulationTrace:
    """Simulates ``config`` until ``duration`` or the first collision.

    The trace is a pure function of the config: time stamps are computed as
    ``k * dt`` rather than accumulated, and nothing random is drawn here.
    """
    setups = sorted(config.vehicles, key=lambda v: _LANE_ORDER.index(v.role))
    states: Dict[Role, VehicleState] = {
        s.role: VehicleState(float(s.position), float(s.speed), 0.0, s.role) for s in setups
    }
    roles = [s.role for s in setups]
    records: List[TraceRecord] = []
    terminal = None
    ego_cmd = ego_eff = 0.0

    for k in range(config.steps + 1):
        t = round(k * config.dt, 9)
        collision = None
        for rear, front in zip(roles, roles[1:]):
            collision = detect_collision(states[front], states[rear])
            if collision is not None:
                collision = CollisionEvent(collision.front, collision.rear, collision.impact_dv, t)
                break
        if collision is not None:
            ego_state = states[Role.EGO]
            records.append(TraceRecord(
                t, tuple(states[r] for r in roles), ego_state.accel, ego_state.accel,
                config.fault is not None and config.fault.active(t),
            ))
            terminal = TerminalEvent(TerminalKind.COLLISION, t, collision)
            logger.debug(
                f"[LADRI] Collision {collision.rear.value}->{collision.front.value} at t={t}s, dv={collision.impact_dv:.2f} m/s"
            )
            break

        commands = {}
        for i, setup in enumerate(setups):
            ahead = states[roles[i + 1]] if i + 1 < len(roles) else None
            commands[setup.role] = _policy_command(setup, states[setup.role], ahead, t, config)
        ego_cmd = commands[Role.EGO]
        ego_eff = apply_fault(ego_cmd, config.fault, t, config.limits)
        commands[Role.EGO] = ego_eff
        records.append(TraceRecord(
            t, tuple(states[r] for r in roles), ego_cmd, ego_eff,
            config.fault is not None and config.fault.active(t),
        ))
        if k == config.steps:
            break
        states = {
            role: step_vehicle(states[role], commands[role], config.dt, config.limits)
            for role in roles
        }

    if terminal is None:
        terminal = TerminalEvent(TerminalKind.COMPLETED, records[-1].time)
    return SimulationTrace(config=config, records=tuple(records), terminal=terminal)


# --- scenario presets ---


def equilibrium_following(
    lead_speed: float = 16.67,
    v_set: float = 20.0,
    duration: float = 30.0,
    seed: int = 0,
    noise: Optional[NoiseSpec] = None,
) -> ScenarioConfig:
    """Ego on ACC behind a constant-speed lead, started at the controller's equilibrium gap."""
    acc = AccParams(v_set=v_set)
    gap = acc.gap_min + acc.gap_des_time * lead_speed
    return ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.LEAD, gap, lead_speed, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.EGO, 0.0, lead_speed, Policy.ACC),
        ),
        duration=duration,
        acc_params=acc,
        seed=seed,
        noise=noise if noise is not None else NoiseSpec(),
    )


def unintended_acceleration(
    magnitude: float,
    lead_speed: float = 16.67,
    initial_gap: float = 70.0,
    t_start: float = 2.0,
    duration: float = 20.0,
    seed: int = 0,
    noise: Optional[NoiseSpec] = None,
) -> ScenarioConfig:
    """Speed-matched ego holding its speed behind a 60 km/h lead when the throttle fault opens.

    The ego runs the speed-hold policy: an engaged ACC would absorb the additive
    throttle offset as a small gap shift.
    """
    return ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.LEAD, initial_gap, lead_speed, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.EGO, 0.0, lead_speed, Policy.CONSTANT_SPEED),
        ),
        duration=duration,
        acc_params=AccParams(v_set=lead_speed),
        fault=FaultSpec(FaultKind.UNINTENDED_ACCEL, magnitude, t_start, duration),
        seed=seed,
        noise=noise if noise is not None else NoiseSpec(),
    )


def unintended_braking(
    magnitude: float,
    speed: float = 25.0,
    follower_gap: float = 6.0,
    t_start: float = 4.0,
    duration: float = 10.0,
    seed: int = 0,
    noise: Optional[NoiseSpec] = None,
) -> ScenarioConfig:
    """Open road, ego cruising on ACC with a speed-matched follower close behind.

    The brake fault fires with nothing ahead of the ego; the follower keeps its
    speed (no reaction within the window of interest).
    """
    return ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.EGO, follower_gap, speed, Policy.ACC),
            VehicleSetup(Role.FOLLOWER, 0.0, speed, Policy.CONSTANT_SPEED),
        ),
        duration=duration,
        acc_params=AccParams(v_set=speed),
        fault=FaultSpec(FaultKind.UNINTENDED_BRAKE, magnitude, t_start, duration),
        seed=seed,
        noise=noise if noise is not None else NoiseSpec(),
    )
