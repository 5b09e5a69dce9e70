import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exploresim.world import (Action, RobotState, WorldError, check_collision,
                              load_world, make_world, step, wrap_angle)


def euler_pose(x, y, theta, v, omega, t, substeps=10_000):
    """Brute-force integration oracle for the unicycle model."""
    h = t / substeps
    for _ in range(substeps):
        x += v * math.cos(theta) * h
        y += v * math.sin(theta) * h
        theta += omega * h
    return x, y, theta


# ----------------------------------------------------------------- loading
def test_load_empty_room(world_file):
    w = load_world(world_file("empty", bounds=[0, 0, 4, 4], name="empty"))
    assert w.free_area == pytest.approx(16.0)
    assert w.name == "empty"


def test_load_room_with_circle(world_file):
    w = load_world(world_file("c", bounds=[0, 0, 4, 4],
                              circles=[[2, 2, 1]], name="c"))
    assert w.free_area == pytest.approx(16.0 - math.pi)


def test_load_circle_outside_bounds(world_file):
    path = world_file("bad", bounds=[0, 0, 4, 4], circles=[[5, 5, 0.5]])
    with pytest.raises(WorldError):
        load_world(path)


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(WorldError):
        load_world(bad)


def test_segment_endpoint_outside_bounds():
    with pytest.raises(WorldError):
        make_world("w", [0, 0, 4, 4], segments=[[1, 1, 6, 1]])


# ------------------------------------------------------------------ stepping
def test_forward_step(big_empty_world):
    state = RobotState(0, 0, 0)
    new, collided, d = step(state, big_empty_world, Action.FORWARD, dt=1.0)
    assert not collided
    assert new.x == pytest.approx(0.2)
    assert new.y == pytest.approx(0.0)
    assert d == pytest.approx(0.2)
    assert new.clock == pytest.approx(1.0)


def test_turn_left_arc_matches_euler_oracle(big_empty_world):
    state = RobotState(0, 0, 0)
    new, collided, _ = step(state, big_empty_world, Action.TURN_LEFT, dt=1.0)
    assert not collided
    # exact arc: radius v/omega = 0.5
    assert new.x == pytest.approx(0.5 * math.sin(0.4), abs=1e-12)
    assert new.y == pytest.approx(0.5 * (1 - math.cos(0.4)), abs=1e-12)
    assert new.theta == pytest.approx(0.4, abs=1e-12)
    # the Euler oracle carries its own O(dt^2 / substeps) truncation error,
    # about 4e-6 over a full second
    ex, ey, et = euler_pose(0, 0, 0, 0.2, 0.4, 1.0)
    assert new.x == pytest.approx(ex, abs=5e-6)
    assert new.y == pytest.approx(ey, abs=5e-6)


def test_collision_clamps_to_contact():
    w = make_world("walled", [-2, -2, 2, 2], segments=[[1, -1, 1, 1]])
    state = RobotState(0.85, 0.0, 0.0)  # robot surface 0.05 m from the wall
    new, collided, d = step(state, w, Action.FORWARD, dt=0.5)
    assert collided
    assert d <= 0.05 + 1e-6
    assert new.x <= 0.9 + 1e-9
    assert not check_collision(new.x, new.y, new.radius, w)


# ------------------------------------------------------------ collision test
def test_check_collision_free_center():
    w = make_world("empty", [0, 0, 4, 4])
    assert not check_collision(2.0, 2.0, 0.1, w)


def test_check_collision_near_circle():
    w = make_world("c", [0, 0, 4, 4], circles=[[2, 2, 0.5]])
    # surface gap 0.05 < robot radius 0.1
    assert check_collision(2.0, 2.0 - 0.55, 0.1, w)
    assert not check_collision(2.0, 2.0 - 0.75, 0.1, w)


def test_boundary_touch_is_legal():
    w = make_world("empty", [0, 0, 4, 4])
    assert not check_collision(0.1, 2.0, 0.1, w)     # exactly touching
    assert check_collision(0.09, 2.0, 0.1, w)


# ------------------------------------------------------------- property tests
ARENA = make_world("arena", [-20, -20, 20, 20])


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(-3, 3), y=st.floats(-3, 3),
    theta=st.floats(-math.pi, math.pi - 1e-9),
    action=st.sampled_from(list(Action)),
    dt=st.floats(0.01, 0.2),
)
def test_arc_matches_fine_euler(x, y, theta, action, dt):
    state = RobotState(x, y, theta)
    new, collided, d = step(state, ARENA, action, dt=dt)
    assert not collided
    v, omega = 0.2, {Action.FORWARD: 0.0, Action.TURN_LEFT: 0.4,
                     Action.TURN_RIGHT: -0.4}[action]
    ex, ey, _ = euler_pose(x, y, theta, v, omega, dt)
    assert new.x == pytest.approx(ex, abs=1e-6)
    assert new.y == pytest.approx(ey, abs=1e-6)
    assert 0.0 <= d <= 0.2 * dt + 1e-9
    assert -math.pi <= new.theta < math.pi


def test_random_walk_never_penetrates(rng):
    w = make_world("clutter", [0, 0, 5, 5],
                   segments=[[2.5, 0, 2.5, 3]],
                   circles=[[1.2, 3.6, 0.3], [3.8, 1.2, 0.4]])
    state = RobotState(1.0, 1.0, 0.0)
    for _ in range(400):
        action = Action(int(rng.integers(3)))
        state, collided, _ = step(state, w, action, dt=0.5)
        assert not check_collision(state.x, state.y, state.radius, w)
        assert -math.pi <= state.theta < math.pi
        if collided:
            # bounce: retry from a fresh heading so the walk keeps moving
            state = RobotState(state.x, state.y,
                               wrap_angle(state.theta + float(rng.uniform(1.5, 3.0))),
                               radius=state.radius, clock=state.clock)
