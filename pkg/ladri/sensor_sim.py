"""Noisy, range-limited on-board sensor readings from ground-truth scene state.

Radar, LiDAR and ultrasonic ranging are fused into one range/range-rate
channel; engine speed is a second, independently noised speed channel.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ladri.config import ActuatorLimits, NoiseSpec, Role
from ladri.errors import InvalidState
from ladri.scenario_engine import DEFAULT_LIMITS, TraceRecord, VehicleState

# Draw order per frame; fixed so a seeded stream yields the same frames.
_DRAWS = ("dropout", "range", "range_rate", "wheel", "engine", "throttle", "brake")


@dataclass(frozen=True)
class SensorFrame:
    """One timestep of readings. ``None`` radar fields mean NoDetection."""

    time: float
    radar_range: Optional[float]
    radar_range_rate: Optional[float]
    wheel_speed: float
    engine_speed_proxy: float
    throttle_pos: float
    brake_pos: float

    @property
    def has_detection(self) -> bool:
        return self.radar_range is not None


@dataclass(frozen=True)
class SceneTruth:
    """Ground truth seen from one vehicle: itself, the vehicle ahead, and its applied accel."""

    time: float
    ego: VehicleState
    lead: Optional[VehicleState]
    effective_accel: float

    @classmethod
    def from_record(cls, record: TraceRecord, rear: Role = Role.EGO, front: Role = Role.LEAD) -> "SceneTruth":
        ego = record.state(rear)
        if ego is None:
            raise InvalidState(f"record at t={record.time} has no {rear.value} vehicle")
        accel = record.effective_accel if rear == Role.EGO else ego.accel
        return cls(record.time, ego, record.state(front), accel)

    @property
    def gap(self) -> Optional[float]:
        return None if self.lead is None else self.lead.position - self.ego.position


def pedals_from_accel(a_eff: float, limits: ActuatorLimits = DEFAULT_LIMITS) -> Tuple[float, float]:
    """Inverse actuator map: acceleration as a throttle or brake fraction of full scale."""
    if not limits.a_min <= a_eff <= limits.a_max:
        raise InvalidState(
            f"effective accel {a_eff} outside actuator range [{limits.a_min}, {limits.a_max}]"
        )
    if a_eff >= 0:
        return a_eff / limits.a_max, 0.0
    return 0.0, a_eff / limits.a_min


def sample_sensors(
    truth: SceneTruth,
    noise: NoiseSpec,
    rng: np.random.Generator,
    detection_range: float = 150.0,
    limits: ActuatorLimits = DEFAULT_LIMITS,
) -> SensorFrame:
    """Samples every channel as truth plus zero-mean Gaussian noise.

    Seven values are drawn from ``rng`` on every call, whether or not a
    channel is in range, so frame ``n`` of a seeded stream never depends on
    what the scene looked like in earlier frames.
    """
    dropped = rng.random() < noise.dropout_prob
    z = rng.standard_normal(len(_DRAWS) - 1).tolist()

    radar_range = radar_range_rate = None
    gap = truth.gap
    if gap is not None and gap <= detection_range and not dropped:
        radar_range = max(0.0, gap + noise.sigma_range * z[0])
        radar_range_rate = (truth.lead.speed - truth.ego.speed) + noise.sigma_range_rate * z[1]

    speed = truth.ego.speed
    throttle, brake = pedals_from_accel(truth.effective_accel, limits)
    return SensorFrame(
        time=truth.time,
        radar_range=radar_range,
        radar_range_rate=radar_range_rate,
        wheel_speed=max(0.0, speed + noise.sigma_wheel * z[2]),
        engine_speed_proxy=max(0.0, speed + noise.sigma_wheel * z[3]),
        throttle_pos=min(max(throttle + noise.sigma_pedal * z[4], 0.0), 1.0),
        brake_pos=min(max(brake + noise.sigma_pedal * z[5], 0.0), 1.0),
    )
