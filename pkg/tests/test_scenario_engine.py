# tests/test_scenario_engine.py
import numpy as np
import pytest

from ladri.config import (
    AccParams,
    FaultKind,
    FaultSpec,
    Policy,
    Role,
    ScenarioConfig,
    VehicleSetup,
)
from ladri.errors import ConfigError, InvalidScene, InvalidState
from ladri.hara_oracle import label_trace
from ladri.scenario_engine import (
    TerminalKind,
    VehicleState,
    acc_command,
    apply_fault,
    detect_collision,
    equilibrium_following,
    run_scenario,
    step_vehicle,
    unintended_acceleration,
    unintended_braking,
)


def ego(position=0.0, speed=20.0, accel=0.0):
    return VehicleState(position, speed, accel, Role.EGO)


def lead(position, speed):
    return VehicleState(position, speed, 0.0, Role.LEAD)


# --- step_vehicle ---


def test_step_vehicle_accelerating():
    s = step_vehicle(ego(speed=20.0), 2.0, 0.01)
    assert s.speed == pytest.approx(20.02)
    assert s.position == pytest.approx(0.2002)
    assert s.accel == 2.0


def test_step_vehicle_constant_speed():
    s = step_vehicle(ego(speed=15.0), 0.0, 0.5)
    assert s.speed == 15.0
    assert s.position == 7.5


def test_step_vehicle_clamps_at_standstill():
    s = step_vehicle(ego(speed=0.5), -2.0, 0.5)
    assert s.speed == 0.0
    assert s.position == 0.0
    assert s.accel == pytest.approx(-1.0)


def test_step_vehicle_clamps_command():
    s = step_vehicle(ego(speed=10.0), 50.0, 0.1)
    assert s.accel == 3.0
    assert s.speed == pytest.approx(10.3)
    s = step_vehicle(ego(speed=10.0), -50.0, 0.1)
    assert s.accel == -8.0


@pytest.mark.parametrize("accel, dt", [(float("nan"), 0.01), (float("inf"), 0.01), (1.0, 0.0), (1.0, -0.01)])
def test_step_vehicle_rejects_bad_input(accel, dt):
    with pytest.raises(InvalidState):
        step_vehicle(ego(), accel, dt)


def test_step_vehicle_rejects_non_finite_state():
    with pytest.raises(InvalidState):
        step_vehicle(ego(position=float("nan")), 0.0, 0.01)


# --- acc_command ---


def test_acc_no_lead_at_set_speed():
    assert acc_command(ego(speed=20.0), None, AccParams(v_set=20.0)) == 0.0


def test_acc_equilibrium():
    p = AccParams(v_set=25.0)
    gap_des = p.gap_min + p.gap_des_time * 20.0
    assert acc_command(ego(speed=20.0), lead(gap_des, 20.0), p) == pytest.approx(0.0)


def test_acc_gap_deficit():
    p = AccParams(v_set=25.0)
    gap_des = p.gap_min + p.gap_des_time * 20.0
    assert acc_command(ego(speed=20.0), lead(gap_des - 10.0, 20.0), p) == pytest.approx(-5.0)


def test_acc_never_exceeds_cruise():
    p = AccParams(v_set=20.0)
    # large gap surplus would ask for more than the cruise term
    a = acc_command(ego(speed=19.0), lead(120.0, 25.0), p)
    assert a == pytest.approx(0.8 * (20.0 - 19.0))


def test_acc_ignores_lead_beyond_detection_range():
    p = AccParams(v_set=20.0, detection_range=150.0)
    assert acc_command(ego(speed=10.0), lead(200.0, 0.0), p) == pytest.approx(3.0)


def test_acc_clamps_to_actuator_limits():
    p = AccParams(v_set=30.0)
    assert acc_command(ego(speed=30.0), lead(3.0, 0.0), p) == -8.0


def test_acc_lead_behind_raises():
    with pytest.raises(InvalidScene):
        acc_command(ego(position=10.0), lead(5.0, 10.0), AccParams())


# --- apply_fault ---


def test_apply_fault_absent():
    assert apply_fault(1.234, None, 5.0) == 1.234


def test_apply_fault_unintended_accel_half_scale():
    fault = FaultSpec(FaultKind.UNINTENDED_ACCEL, 0.5, 2.0, 10.0)
    assert apply_fault(1.0, fault, 3.0) == pytest.approx(2.5)


def test_apply_fault_unintended_accel_clamped():
    fault = FaultSpec(FaultKind.UNINTENDED_ACCEL, 1.0, 0.0, 10.0)
    assert apply_fault(2.0, fault, 1.0) == 3.0


def test_apply_fault_unintended_brake_overrides():
    fault = FaultSpec(FaultKind.UNINTENDED_BRAKE, 0.8, 0.0, 10.0)
    for cmd in (-3.0, 0.0, 2.5):
        assert apply_fault(cmd, fault, 1.0) == pytest.approx(-6.4)


def test_apply_fault_window_is_half_open():
    fault = FaultSpec(FaultKind.UNINTENDED_BRAKE, 0.5, 2.0, 4.0)
    assert apply_fault(1.0, fault, 1.99) == 1.0
    assert apply_fault(1.0, fault, 2.0) == pytest.approx(-4.0)
    assert apply_fault(1.0, fault, 4.0) == 1.0


# --- detect_collision ---


def test_detect_collision_clear():
    assert detect_collision(lead(5.0, 10.0), ego(0.0, 10.0)) is None


def test_detect_collision_contact():
    event = detect_collision(lead(0.0, 7.0), ego(0.0, 10.0))
    assert event is not None
    assert event.impact_dv == pytest.approx(3.0)
    assert (event.front, event.rear) == (Role.LEAD, Role.EGO)


def test_detect_collision_penetration():
    assert detect_collision(lead(-0.1, 10.0), ego(0.0, 10.0)) is not None


# --- run_scenario ---


def _two_vehicle(gap, ego_speed, lead_speed, ego_policy=Policy.ACC, **kwargs):
    return ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.LEAD, gap, lead_speed, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.EGO, 0.0, ego_speed, ego_policy),
        ),
        **kwargs,
    )


def test_run_scenario_record_count_and_times():
    config = _two_vehicle(40.0, 16.67, 16.67, duration=20.0)
    trace = run_scenario(config)
    assert len(trace.records) == 2001
    assert trace.terminal.kind == TerminalKind.COMPLETED
    times = np.array([r.time for r in trace.records])
    assert np.allclose(np.diff(times), 0.01)
    assert trace.records[-1].time == 20.0


def test_run_scenario_converges_to_equilibrium_gap():
    """Lead at 60 km/h, ego on ACC: the gap settles at gap_min + gap_des_time * v_lead."""
    config = _two_vehicle(40.0, 16.67, 16.67, duration=30.0, acc_params=AccParams(v_set=20.0))
    trace = run_scenario(config)
    last = trace.records[-1]
    gap = last.state(Role.LEAD).position - last.state(Role.EGO).position
    assert gap == pytest.approx(2.0 + 1.5 * 16.67, abs=0.01)
    assert last.state(Role.EGO).speed == pytest.approx(16.67, abs=0.01)
    assert trace.terminal.kind == TerminalKind.COMPLETED


def test_run_scenario_collision_truncates():
    config = ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.LEAD, 0.5, 0.0, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.EGO, 0.0, 10.0, Policy.CONSTANT_SPEED),
        ),
        duration=5.0,
    )
    trace = run_scenario(config)
    assert trace.terminal.kind == TerminalKind.COLLISION
    assert trace.terminal.time <= 0.1
    assert trace.records[-1].time == trace.terminal.time
    collision = trace.terminal.collision
    assert collision.rear == Role.EGO and collision.front == Role.LEAD
    assert collision.impact_dv == pytest.approx(10.0)
    last = trace.records[-1]
    assert last.state(Role.LEAD).position - last.state(Role.EGO).position <= 0


def test_run_scenario_is_deterministic():
    config = unintended_acceleration(0.5, seed=7)
    assert run_scenario(config) == run_scenario(config)


def test_run_scenario_fault_window_only():
    config = unintended_acceleration(0.35)
    trace = run_scenario(config)
    fault = config.fault
    for r in trace.records:
        if not fault.t_start <= r.time < fault.t_end:
            assert r.effective_accel == r.commanded_accel
            assert not r.fault_active
        else:
            assert r.fault_active


@pytest.mark.parametrize("accel, v0", [(2.0, 10.0), (-3.0, 40.0), (0.7, 0.0)])
def test_constant_acceleration_matches_closed_form(accel, v0):
    """Semi-implicit Euler after N steps: x0 + v0*T + a*T*(T+dt)/2."""
    dt, duration, x0 = 0.01, 10.0, 5.0
    config = ScenarioConfig(
        vehicles=(VehicleSetup(Role.EGO, x0, v0, Policy.SCRIPTED_PROFILE, ((0.0, accel),)),),
        dt=dt,
        duration=duration,
    )
    trace = run_scenario(config)
    final = trace.records[-1].state(Role.EGO)
    expected = x0 + v0 * duration + 0.5 * accel * duration * (duration + dt)
    assert abs(final.position - expected) <= 1e-9 * abs(expected)
    assert final.speed == pytest.approx(v0 + accel * duration, rel=1e-9)
    # the plain kinematic formula differs by at most |a| * dt * T / 2
    assert abs(final.position - (x0 + v0 * duration + 0.5 * accel * duration ** 2)) <= 0.15 + 1e-9


def test_speed_never_negative_fuzz():
    rng = np.random.default_rng(1234)
    policies = list(Policy)
    for _ in range(40):
        ego_policy = policies[rng.integers(0, len(policies))]
        profile = ((0.0, float(rng.uniform(-12.0, 6.0))),) if ego_policy == Policy.SCRIPTED_PROFILE else ()
        fault = None
        if rng.random() < 0.7:
            kind = FaultKind.UNINTENDED_BRAKE if rng.random() < 0.5 else FaultKind.UNINTENDED_ACCEL
            fault = FaultSpec(kind, float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.0, 2.0)), 4.0)
        config = ScenarioConfig(
            vehicles=(
                VehicleSetup(Role.LEAD, float(rng.uniform(5.0, 100.0)), float(rng.uniform(0.0, 30.0)), Policy.SCRIPTED_PROFILE,
                             ((0.0, float(rng.uniform(-8.0, 3.0))),)),
                VehicleSetup(Role.EGO, 0.0, float(rng.uniform(0.0, 30.0)), ego_policy, profile),
                VehicleSetup(Role.FOLLOWER, float(-rng.uniform(3.0, 40.0)), float(rng.uniform(0.0, 30.0)), Policy.ACC),
            ),
            duration=4.0,
            fault=fault,
        )
        trace = run_scenario(config)
        for r in trace.records:
            assert -8.0 - 1e-12 <= r.effective_accel <= 3.0
            for state in r.states:
                assert state.speed >= 0.0
                assert -8.0 - 1e-12 <= state.accel <= 3.0
        if trace.terminal.kind == TerminalKind.COLLISION:
            assert trace.records[-1].time == trace.terminal.time


@pytest.mark.parametrize("accel, applied", [(5.0, 3.0), (-12.0, -8.0)])
def test_scripted_ego_beyond_actuator_range(accel, applied):
    config = ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.LEAD, 500.0, 20.0, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.EGO, 0.0, 20.0, Policy.SCRIPTED_PROFILE, ((0.0, accel),)),
        ),
        duration=1.0,
    )
    trace = run_scenario(config)
    first = trace.records[0]
    assert first.commanded_accel == applied
    assert first.effective_accel == applied
    assert trace.records[1].state(Role.EGO).accel == applied
    labeled = label_trace(trace)
    assert len(labeled.labels) == len(trace.records)


def test_follower_on_acc_tracks_ego():
    config = ScenarioConfig(
        vehicles=(
            VehicleSetup(Role.EGO, 30.0, 20.0, Policy.CONSTANT_SPEED),
            VehicleSetup(Role.FOLLOWER, 0.0, 20.0, Policy.ACC),
        ),
        duration=40.0,
        acc_params=AccParams(v_set=25.0),
    )
    trace = run_scenario(config)
    last = trace.records[-1]
    gap = last.state(Role.EGO).position - last.state(Role.FOLLOWER).position
    assert gap == pytest.approx(2.0 + 1.5 * 20.0, abs=0.05)


# --- config validation surfaced by run_scenario inputs ---


def test_scenario_requires_one_ego():
    with pytest.raises(ConfigError) as excinfo:
        ScenarioConfig(vehicles=(VehicleSetup(Role.LEAD, 10.0, 5.0),))
    assert excinfo.value.field == "vehicles"


def test_scenario_requires_ordered_positions():
    with pytest.raises(ConfigError) as excinfo:
        ScenarioConfig(vehicles=(VehicleSetup(Role.LEAD, 0.0, 5.0), VehicleSetup(Role.EGO, 10.0, 5.0)))
    assert excinfo.value.field == "vehicles[0].position"


def test_fault_must_end_within_duration():
    with pytest.raises(ConfigError) as excinfo:
        _two_vehicle(40.0, 10.0, 10.0, duration=5.0, fault=FaultSpec(FaultKind.UNINTENDED_BRAKE, 0.5, 1.0, 6.0))
    assert excinfo.value.field == "fault.t_end"


# --- presets ---


def test_equilibrium_preset_stays_put():
    trace = run_scenario(equilibrium_following(duration=10.0))
    for r in trace.records:
        assert r.effective_accel == pytest.approx(0.0, abs=1e-9)
    assert trace.terminal.kind == TerminalKind.COMPLETED


def test_unintended_acceleration_preset_collides():
    config = unintended_acceleration(0.5)
    assert config.fault.kind == FaultKind.UNINTENDED_ACCEL
    assert config.vehicle(Role.EGO).policy == Policy.CONSTANT_SPEED
    trace = run_scenario(config)
    assert trace.terminal.kind == TerminalKind.COLLISION


def test_unintended_braking_preset_has_no_lead():
    config = unintended_braking(0.8)
    assert config.vehicle(Role.LEAD) is None
    trace = run_scenario(config)
    ego_after = [r for r in trace.records if r.fault_active]
    assert all(r.effective_accel <= 0 for r in ego_after)
    assert ego_after[0].effective_accel == pytest.approx(-6.4)
