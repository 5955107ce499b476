# tests/test_hara_oracle.py
import itertools

import numpy as np
import pytest

from ladri.config import OracleThresholds, Role
from ladri.errors import ConfigError, InvalidInput
from ladri.feature_extract import FeatureVector, truth_features
from ladri.hara_oracle import (
    Controllability,
    RiskStage,
    Severity,
    assess_features,
    controllability_level,
    label_trace,
    risk_stage,
    severity_level,
)
from ladri.scenario_engine import VehicleState, equilibrium_following, run_scenario
from ladri.sensor_sim import SceneTruth


@pytest.mark.parametrize(
    "dv, expected",
    [(0.0, Severity.S0), (2.77, Severity.S0), (2.78, Severity.S1), (10.0, Severity.S2), (13.89, Severity.S3), (16.67, Severity.S3)],
)
def test_severity_level(dv, expected):
    assert severity_level(dv) == expected


def test_severity_rejects_negative():
    with pytest.raises(InvalidInput):
        severity_level(-0.1)


@pytest.mark.parametrize(
    "decel, ttc, expected",
    [
        (0.4167, 6.0, Controllability.C0),
        (2.0, 1.5, Controllability.C2),
        (0.0, 0.5, Controllability.C3),
        (5.0, 1.9, Controllability.C3),
        (7.0, 1.5, Controllability.C3),
        (3.0, 2.0, Controllability.C2),
        (6.0, 60.0, Controllability.C3),
    ],
)
def test_controllability_level(decel, ttc, expected):
    assert controllability_level(decel, ttc) == expected


@pytest.mark.parametrize(
    "s, c, expected",
    [
        (Severity.S0, Controllability.C0, RiskStage.SAFE),
        (Severity.S3, Controllability.C3, RiskStage.CRITICAL),
        (Severity.S2, Controllability.C1, RiskStage.WARNING),
        (Severity.S3, Controllability.C1, RiskStage.HAZARDOUS),
        (Severity.S0, Controllability.C3, RiskStage.WARNING),
    ],
)
def test_risk_stage(s, c, expected):
    assert risk_stage(s, c) == expected


def test_table_is_monotone_and_exhaustive():
    for s, c in itertools.product(Severity, Controllability):
        stage = risk_stage(s, c)
        assert stage in RiskStage
        if s < Severity.S3:
            assert risk_stage(Severity(s + 1), c) >= stage
        if c < Controllability.C3:
            assert risk_stage(s, Controllability(c + 1)) >= stage


def test_custom_table():
    table = tuple(tuple(3 for _ in range(4)) for _ in range(4))
    thresholds = OracleThresholds(table=table)
    assert risk_stage(Severity.S0, Controllability.C0, thresholds) == RiskStage.CRITICAL


def test_thresholds_must_increase():
    with pytest.raises(ConfigError) as excinfo:
        OracleThresholds(severity_dv=(5.0, 3.0, 10.0))
    assert excinfo.value.field == "severity_dv"


def test_table_entries_validated():
    bad = ((0, 0, 1, 1), (0, 1, 1, 2), (1, 1, 2, 3), (1, 2, 3, 7))
    with pytest.raises(ConfigError):
        OracleThresholds(table=bad)


def test_assess_features_free_road_is_safe():
    v = FeatureVector(150.0, 0.0, 20.0, 60.0, 7.5, 0.0, 0.1, 0.0)
    label = assess_features(v)
    assert (label.severity, label.controllability, label.stage) == (Severity.S0, Controllability.C0, RiskStage.SAFE)


def test_assess_features_opening_uses_zero_dv():
    v = FeatureVector(20.0, -4.0, 10.0, 60.0, 2.0, 0.0, 0.0, 0.0)
    assert assess_features(v).severity == Severity.S0


def test_equilibrium_following_is_all_safe():
    trace = run_scenario(equilibrium_following(duration=20.0))
    labeled = label_trace(trace)
    assert len(labeled.labels) == len(trace.records)
    assert all(label.stage == RiskStage.SAFE for label in labeled.labels)
    assert labeled.time_to_stage(RiskStage.SAFE) == 0.0
    assert labeled.time_to_stage(RiskStage.WARNING) is None
    assert labeled.times_to_stages()[RiskStage.CRITICAL] is None


def test_label_trace_requires_rear_vehicle():
    trace = run_scenario(equilibrium_following(duration=1.0))
    with pytest.raises(InvalidInput):
        label_trace(trace, rear=Role.FOLLOWER, front=Role.EGO)


def _stage(gap, ego_speed, lead_speed):
    truth = SceneTruth(
        0.0,
        VehicleState(0.0, ego_speed, 0.0, Role.EGO),
        VehicleState(gap, lead_speed, 0.0, Role.LEAD),
        0.0,
    )
    return assess_features(truth_features(truth)).stage


def test_stage_never_drops_as_gap_shrinks():
    """1000 randomized gap sweeps at fixed speeds."""
    rng = np.random.default_rng(31)
    for _ in range(1000):
        ego_speed = float(rng.uniform(0.0, 40.0))
        lead_speed = float(rng.uniform(0.0, 40.0))
        gaps = np.sort(rng.uniform(0.0, 200.0, size=25))[::-1]
        stages = [_stage(float(g), ego_speed, lead_speed) for g in gaps]
        assert all(b >= a for a, b in zip(stages, stages[1:]))


def test_stage_never_drops_as_closing_speed_grows():
    """1000 randomized speed sweeps at a fixed gap."""
    rng = np.random.default_rng(32)
    for _ in range(1000):
        gap = float(rng.uniform(0.5, 149.0))
        lead_speed = float(rng.uniform(0.0, 30.0))
        speeds = np.sort(rng.uniform(0.0, 45.0, size=25))
        stages = [_stage(gap, float(v), lead_speed) for v in speeds]
        assert all(b >= a for a, b in zip(stages, stages[1:]))
