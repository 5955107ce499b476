"""Risk features from sensor frames, plus the z-score normalizer fed to the classifier."""

import math
from dataclasses import astuple, dataclass
from typing import Optional

import numpy as np

from ladri.config import ActuatorLimits
from ladri.consts import DECEL_CAP, HEADWAY_MIN_SPEED, HW_CAP, TTC_CAP
from ladri.errors import InvalidInput
from ladri.scenario_engine import DEFAULT_LIMITS
from ladri.sensor_sim import SceneTruth, SensorFrame, pedals_from_accel


@dataclass(frozen=True)
class FeatureVector:
    rel_distance: float
    rel_speed: float  # positive = closing
    ego_speed: float
    ttc: float
    headway: float
    required_decel: float
    throttle_pos: float
    brake_pos: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


def _check_gap(gap: float) -> None:
    if not gap >= 0:
        raise InvalidInput(f"gap must be >= 0, got {gap}")


def compute_ttc(gap: float, closing_speed: float) -> float:
    _check_gap(gap)
    if closing_speed <= 0:
        return TTC_CAP
    return min(gap / closing_speed, TTC_CAP)


def compute_headway(gap: float, ego_speed: float) -> float:
    _check_gap(gap)
    if not ego_speed >= 0:
        raise InvalidInput(f"ego speed must be >= 0, got {ego_speed}")
    if ego_speed < HEADWAY_MIN_SPEED:
        return HW_CAP
    return min(gap / ego_speed, HW_CAP)


def compute_required_decel(gap: float, closing_speed: float) -> float:
    """Constant deceleration that just avoids impact if the vehicle ahead holds its speed."""
    _check_gap(gap)
    if closing_speed <= 0:
        return 0.0
    if gap == 0:
        return DECEL_CAP
    return min(closing_speed * closing_speed / (2.0 * gap), DECEL_CAP)


def _assemble(gap: float, closing: float, ego_speed: float, throttle: float, brake: float) -> FeatureVector:
    return FeatureVector(
        rel_distance=gap,
        rel_speed=closing,
        ego_speed=ego_speed,
        ttc=compute_ttc(gap, closing),
        headway=compute_headway(gap, ego_speed),
        required_decel=compute_required_decel(gap, closing),
        throttle_pos=throttle,
        brake_pos=brake,
    )


def build_feature_vector(
    frame: SensorFrame,
    prev: Optional[SensorFrame] = None,
    detection_range: float = 150.0,
) -> FeatureVector:
    """Features of one frame. No radar detection encodes as free road: max range, zero closing.

    A frame with range but no range rate takes its closing speed from the
    range change since ``prev``.
    """
    if frame.radar_range is None:
        gap, closing = detection_range, 0.0
    else:
        gap = frame.radar_range
        if frame.radar_range_rate is not None:
            closing = -frame.radar_range_rate
        elif prev is not None and prev.radar_range is not None and frame.time > prev.time:
            closing = -(frame.radar_range - prev.radar_range) / (frame.time - prev.time)
        else:
            closing = 0.0
    return _assemble(gap, closing, frame.wheel_speed, frame.throttle_pos, frame.brake_pos)


def truth_features(
    truth: SceneTruth,
    detection_range: float = 150.0,
    limits: ActuatorLimits = DEFAULT_LIMITS,
) -> FeatureVector:
    """Noise-free features straight from kinematics; the labeling input.

    A vehicle ahead beyond ``detection_range`` is free road, as for the radar.
    Gaps at or below zero (the collision record) count as contact.
    """
    gap = truth.gap
    if gap is None or gap > detection_range:
        gap, closing = detection_range, 0.0
    else:
        gap = max(gap, 0.0)
        closing = truth.ego.speed - truth.lead.speed
    throttle, brake = pedals_from_accel(truth.effective_accel, limits)
    return _assemble(gap, closing, truth.ego.speed, throttle, brake)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, NormStats)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
        )


def fit_normalizer(rows) -> NormStats:
    """Per-feature mean and population standard deviation."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InvalidInput(f"normalizer needs at least 2 rows, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise InvalidInput("normalizer rows contain non-finite values")
    return NormStats(mean=rows.mean(axis=0), std=rows.std(axis=0))


def apply_normalizer(stats: NormStats, v) -> np.ndarray:
    """z-score; a feature with zero spread maps to 0."""
    v = np.asarray(v, dtype=np.float64)
    safe_std = np.where(stats.std > 0, stats.std, 1.0)
    return np.where(stats.std > 0, (v - stats.mean) / safe_std, 0.0)


def invert_normalizer(stats: NormStats, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.where(stats.std > 0, z * stats.std + stats.mean, stats.mean)


def is_finite_vector(v: FeatureVector) -> bool:
    return all(math.isfinite(x) for x in astuple(v))
