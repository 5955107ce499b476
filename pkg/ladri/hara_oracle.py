"""Rule-based HARA labeling: severity (S), controllability (C) and the runtime risk stage.

Exposure (E) is not graded; labels depend only on S and C. The oracle reads
ground-truth kinematics, never noisy sensor frames.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Optional, Tuple

from ladri.config import OracleThresholds, Role
from ladri.errors import InvalidInput
from ladri.feature_extract import FeatureVector, truth_features
from ladri.scenario_engine import SimulationTrace
from ladri.sensor_sim import SceneTruth

DEFAULT_THRESHOLDS = OracleThresholds()


class Severity(IntEnum):
    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3


class Controllability(IntEnum):
    C0 = 0
    C1 = 1
    C2 = 2
    C3 = 3


class RiskStage(IntEnum):
    SAFE = 0
    WARNING = 1
    HAZARDOUS = 2
    CRITICAL = 3


@dataclass(frozen=True)
class RiskLabel:
    severity: Severity
    controllability: Controllability
    stage: RiskStage


def _grade(value: float, thresholds: Tuple[float, ...]) -> int:
    level = 0
    for threshold in thresholds:
        if value < threshold:
            break
        level += 1
    return level


def severity_level(projected_impact_dv: float, thresholds: OracleThresholds = DEFAULT_THRESHOLDS) -> Severity:
    if not projected_impact_dv >= 0:
        raise InvalidInput(f"projected impact dv must be >= 0, got {projected_impact_dv}")
    return Severity(_grade(projected_impact_dv, thresholds.severity_dv))


def controllability_level(
    required_decel: float,
    ttc: float,
    thresholds: OracleThresholds = DEFAULT_THRESHOLDS,
) -> Controllability:
    level = _grade(required_decel, thresholds.controllability_decel)
    if ttc < thresholds.ttc_force_c3:
        level = Controllability.C3
    elif ttc < thresholds.ttc_raise_one:
        level = min(level + 1, Controllability.C3)
    return Controllability(level)


def risk_stage(s: Severity, c: Controllability, thresholds: OracleThresholds = DEFAULT_THRESHOLDS) -> RiskStage:
    return RiskStage(thresholds.table[int(c)][int(s)])


def assess_features(features: FeatureVector, thresholds: OracleThresholds = DEFAULT_THRESHOLDS) -> RiskLabel:
    """Labels one noise-free feature vector."""
    s = severity_level(max(0.0, features.rel_speed), thresholds)
    c = controllability_level(features.required_decel, features.ttc, thresholds)
    return RiskLabel(s, c, risk_stage(s, c, thresholds))


@dataclass(frozen=True)
class LabeledTrace:
    labels: Tuple[RiskLabel, ...]
    times: Tuple[float, ...]
    rear: Role
    front: Role

    def time_to_stage(self, stage: int) -> Optional[float]:
        """First time the stage reaches ``stage`` or above; None if it never does."""
        for t, label in zip(self.times, self.labels):
            if label.stage >= stage:
                return t
        return None

    def times_to_stages(self) -> Dict[RiskStage, Optional[float]]:
        return {stage: self.time_to_stage(stage) for stage in RiskStage}


def label_trace(
    trace: SimulationTrace,
    rear: Role = Role.EGO,
    front: Role = Role.LEAD,
    thresholds: OracleThresholds = DEFAULT_THRESHOLDS,
) -> LabeledTrace:
    """One label per trace record, from the ``rear`` vehicle's view of the vehicle ahead.

    The default pair matches the ego's forward sensors; ``rear=Role.FOLLOWER,
    front=Role.EGO`` gives the follower-relative stage.
    """
    config = trace.config
    if config.vehicle(rear) is None:
        raise InvalidInput(f"trace has no {rear.value} vehicle to label from")
    labels = []
    for record in trace.records:
        truth = SceneTruth.from_record(record, rear, front)
        features = truth_features(truth, config.acc_params.detection_range, config.limits)
        labels.append(assess_features(features, thresholds))
    return LabeledTrace(
        labels=tuple(labels),
        times=tuple(r.time for r in trace.records),
        rear=rear,
        front=front,
    )
