import math

import numpy as np
import pytest

from retarget.errors import MalformedLog, NonUniformRate, TooFewSamples
from retarget.workspace import (
    AtomicMovement,
    GripState,
    GripperPose,
    MovementKind,
    Trajectory,
    WorkspaceModel,
    contains,
    project_to_workspace,
    read_trajectory_log,
    segment_atomic,
    smoothness_metric,
    write_trajectory_log,
)

from conftest import random_rotation


def default_model() -> WorkspaceModel:
    return WorkspaceModel(r_min=0.15, r_max=0.45, z_min=0.10, z_max=0.55,
                          theta_min=-math.pi / 2, theta_max=math.pi / 2)


def nearest_point_by_grid_search(m: WorkspaceModel, p: np.ndarray,
                                 steps: int = 80) -> np.ndarray:
    """Dense sampling of the workspace solid; closest grid point to p."""
    rs = np.linspace(m.r_min, m.r_max, steps)
    thetas = np.linspace(m.theta_min, m.theta_max, steps)
    zs = np.linspace(m.z_min, m.z_max, steps)
    r_grid, t_grid, z_grid = np.meshgrid(rs, thetas, zs, indexing="ij")
    xyz = np.stack([r_grid * np.cos(t_grid), r_grid * np.sin(t_grid), z_grid],
                   axis=-1).reshape(-1, 3)
    return xyz[np.argmin(np.linalg.norm(xyz - p, axis=1))]


class TestContains:
    def test_center_inside(self):
        m = default_model()
        assert contains(m, m.center)

    def test_above_ceiling(self):
        m = default_model()
        p = m.center.copy()
        p[2] = m.z_max + 0.01
        assert not contains(m, p)

    def test_closed_boundary_corner(self):
        m = default_model()
        p = np.array([m.r_max * math.cos(m.theta_max),
                      m.r_max * math.sin(m.theta_max), m.z_max])
        assert contains(m, p)

    def test_angle_outside_sector(self):
        m = default_model()
        # directly behind the robot at a valid radius and height
        assert not contains(m, np.array([-0.3, 0.0, 0.3]))

    def test_invariants_rejected(self):
        with pytest.raises(ValueError):
            WorkspaceModel(r_min=0.5, r_max=0.4, z_min=0, z_max=1,
                           theta_min=0, theta_max=1)
        with pytest.raises(ValueError):
            WorkspaceModel(r_min=0.1, r_max=0.4, z_min=1, z_max=0,
                           theta_min=0, theta_max=1)
        with pytest.raises(ValueError):
            WorkspaceModel(r_min=0.1, r_max=0.4, z_min=0, z_max=1,
                           theta_min=1, theta_max=1)


class TestProjection:
    def test_interior_point_unchanged(self):
        m = default_model()
        p = m.center
        out = project_to_workspace(m, p)
        assert out is p  # bit-exact identity on the interior

    def test_radial_clamp_only(self):
        m = default_model()
        theta, z = 0.4, 0.3
        p = np.array([(m.r_max + 0.1) * math.cos(theta),
                      (m.r_max + 0.1) * math.sin(theta), z])
        out = project_to_workspace(m, p)
        assert math.hypot(out[0], out[1]) == pytest.approx(m.r_max)
        assert math.atan2(out[1], out[0]) == pytest.approx(theta)
        assert out[2] == pytest.approx(z)

    def test_matches_grid_oracle_in_validity_region(self, rng):
        # per-coordinate clamping equals nearest-point projection wherever
        # the angle already lies inside the sector
        m = default_model()
        cell = max((m.r_max - m.r_min), m.sector_width * m.r_max,
                   (m.z_max - m.z_min)) / 80 * math.sqrt(3)
        for _ in range(25):
            theta = rng.uniform(m.theta_min, m.theta_max)
            r = rng.uniform(0.01, 1.0)
            z = rng.uniform(-0.5, 1.2)
            p = np.array([r * math.cos(theta), r * math.sin(theta), z])
            ours = project_to_workspace(m, p)
            oracle = nearest_point_by_grid_search(m, p)
            d_ours = np.linalg.norm(ours - p)
            d_oracle = np.linalg.norm(oracle - p)
            assert d_ours <= d_oracle + 1e-9      # at least as close as any grid point
            assert d_oracle - d_ours <= cell      # and the oracle agrees within a cell

    def test_idempotent_and_contained(self, rng):
        m = default_model()
        for _ in range(500):
            p = rng.uniform(-1.5, 1.5, 3)
            once = project_to_workspace(m, p)
            assert contains(m, once)
            twice = project_to_workspace(m, once)
            np.testing.assert_array_equal(once, twice)

    def test_axis_point_snaps_to_sector_midpoint(self):
        m = default_model()
        out = project_to_workspace(m, np.array([0.0, 0.0, 0.3]))
        assert contains(m, out)
        # sector is symmetric about zero, so the midpoint direction is +x
        assert math.atan2(out[1], out[0]) == pytest.approx(0.0)
        assert math.hypot(out[0], out[1]) == pytest.approx(m.r_min)

    def test_angular_clamp_nearer_edge(self):
        m = default_model()
        just_past_max = m.theta_max + 0.2
        p = np.array([0.3 * math.cos(just_past_max), 0.3 * math.sin(just_past_max), 0.3])
        out = project_to_workspace(m, p)
        assert math.atan2(out[1], out[0]) == pytest.approx(m.theta_max)


def _trajectory(times, positions, states=None):
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if states is None:
        states = [GripState.OPEN] * len(times)
    return Trajectory(times=times, positions=positions, states=tuple(states))


def rest_move_rest(rate=30.0):
    """1 s rest, 1 s move at 0.3 m/s along +x, 1 s rest."""
    dt = 1.0 / rate
    n = int(3.0 * rate)
    times = np.arange(n) * dt
    x = np.zeros(n)
    for i in range(1, n):
        speed = 0.3 if 1.0 <= times[i - 1] < 2.0 else 0.0
        x[i] = x[i - 1] + speed * dt
    positions = np.column_stack([x, np.zeros(n), np.full(n, 0.3)])
    return times, positions


class TestSegmentAtomic:
    def test_single_toggle(self):
        times = np.arange(60) / 30.0
        positions = np.tile([0.3, 0.0, 0.3], (60, 1))
        states = [GripState.OPEN] * 30 + [GripState.CLOSED] * 30
        movements = segment_atomic(_trajectory(times, positions, states))
        assert len(movements) == 1
        assert movements[0].kind is MovementKind.GRIPPER_TOGGLE
        assert movements[0].t_start == pytest.approx(times[30])

    def test_rest_move_rest_single_translation(self):
        times, positions = rest_move_rest()
        movements = segment_atomic(_trajectory(times, positions))
        translations = [m for m in movements if m.kind is MovementKind.TRANSLATION]
        assert len(movements) == len(translations) == 1
        t = translations[0]
        assert t.t_start == pytest.approx(1.0, abs=0.05)
        assert t.t_end == pytest.approx(2.0, abs=0.05)
        np.testing.assert_allclose(t.start_position, [0.0, 0.0, 0.3], atol=1e-9)
        np.testing.assert_allclose(t.end_position, [0.3, 0.0, 0.3], atol=0.02)

    def test_pick_and_place_four_movements(self):
        # move, close, move, open: the canonical 4-step pick-and-place
        rate, dt = 30.0, 1.0 / 30.0
        segments = []  # (duration, velocity, toggle_at_end)
        plan = [
            (1.0, np.zeros(3), None),
            (1.0, np.array([0.2, 0.0, 0.0]), None),
            (1.0, np.zeros(3), GripState.CLOSED),
            (1.0, np.array([0.0, 0.2, 0.0]), None),
            (1.0, np.zeros(3), GripState.OPEN),
        ]
        times, positions, states = [0.0], [np.array([0.3, -0.2, 0.3])], [GripState.OPEN]
        state = GripState.OPEN
        for duration, velocity, toggle in plan:
            steps = int(duration * rate)
            for k in range(steps):
                times.append(times[-1] + dt)
                positions.append(positions[-1] + velocity * dt)
                if toggle is not None and k == 0:
                    state = toggle
                states.append(state)
        movements = segment_atomic(_trajectory(times, positions, states))
        kinds = [m.kind for m in movements]
        assert len(movements) == 4
        assert kinds.count(MovementKind.TRANSLATION) == 2
        assert kinds.count(MovementKind.GRIPPER_TOGGLE) == 2

    def test_short_dip_does_not_split(self):
        rate, dt = 30.0, 1.0 / 30.0
        n = int(3.0 * rate)
        times = np.arange(n) * dt
        x = np.zeros(n)
        for i in range(1, n):
            t = times[i - 1]
            moving = 0.5 <= t < 2.5 and not (1.45 <= t < 1.55)  # 0.1 s dip < dwell
            x[i] = x[i - 1] + (0.3 if moving else 0.0) * dt
        movements = segment_atomic(_trajectory(times, np.column_stack(
            [x, np.zeros(n), np.zeros(n)])))
        assert len(movements) == 1

    def test_invariance_to_time_shift_and_rigid_motion(self, rng):
        times, positions = rest_move_rest()
        base = segment_atomic(_trajectory(times, positions))
        rotation = random_rotation(rng)
        translation = rng.uniform(-2, 2, 3)
        moved = segment_atomic(_trajectory(
            times + 17.3, positions @ rotation.T + translation))
        assert len(base) == len(moved)
        for a, b in zip(base, moved):
            assert a.kind == b.kind
            assert b.t_start - a.t_start == pytest.approx(17.3)
            assert (b.t_end - b.t_start) == pytest.approx(a.t_end - a.t_start)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            segment_atomic(_trajectory([0.0], [[0, 0, 0]]))


class TestSmoothness:
    def test_constant_velocity_zero(self):
        times = np.arange(30) / 30.0
        positions = np.outer(times, [0.1, 0.2, 0.0])
        assert smoothness_metric(_trajectory(times, positions)) < 1e-9

    def test_constant_acceleration_zero(self):
        times = np.arange(30) / 30.0
        positions = np.outer(times ** 2, [0.3, 0.0, 0.1])
        assert smoothness_metric(_trajectory(times, positions)) < 1e-9

    def test_cubic_matches_analytic_jerk(self):
        # position c*t^3 has constant jerk 6*|c|
        times = np.arange(60) / 30.0
        c = np.array([0.05, -0.02, 0.01])
        positions = np.outer(times ** 3, c)
        expected = 6.0 * float(np.linalg.norm(c))
        assert smoothness_metric(_trajectory(times, positions)) == \
            pytest.approx(expected, abs=1e-6)

    def test_jitter_rejected(self):
        times = np.array([0.0, 0.033, 0.08, 0.1, 0.133, 0.166])
        positions = np.zeros((6, 3))
        with pytest.raises(NonUniformRate):
            smoothness_metric(_trajectory(times, positions))

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            smoothness_metric(_trajectory([0, 0.1, 0.2], np.zeros((3, 3))))


class TestTrajectoryLog:
    def test_round_trip(self, tmp_path, rng):
        times = np.arange(20) / 30.0
        positions = rng.uniform(-0.4, 0.4, (20, 3))
        states = tuple(GripState.OPEN if i < 10 else GripState.CLOSED
                       for i in range(20))
        t = Trajectory(times=times, positions=positions, states=states)
        path = tmp_path / "run.jsonl"
        write_trajectory_log(t, path)
        back = read_trajectory_log(path)
        np.testing.assert_array_equal(back.times, t.times)
        np.testing.assert_array_equal(back.positions, t.positions)
        assert back.states == t.states

    def test_extra_keys_tolerated(self, tmp_path):
        path = tmp_path / "rec.jsonl"
        path.write_text(
            '{"t": 0.0, "pos": [0.1, 0.2, 0.3], "state": "open", "mode": "tps"}\n'
            '{"t": 0.1, "pos": [0.1, 0.2, 0.3], "state": "closed", "mode": "tps"}\n')
        t = read_trajectory_log(path)
        assert len(t) == 2

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"t": 0.0, "pos": [0, 0, 0], "state": "open"}\nnot json\n')
        with pytest.raises(MalformedLog):
            read_trajectory_log(path)


class TestInvariantTypes:
    def test_strictly_increasing_timestamps_required(self):
        with pytest.raises(ValueError):
            _trajectory([0.0, 0.0], [[0, 0, 0], [1, 1, 1]])

    def test_translation_needs_duration(self):
        with pytest.raises(ValueError):
            AtomicMovement(kind=MovementKind.TRANSLATION, t_start=1.0, t_end=1.0)

    def test_toggle_is_instant(self):
        with pytest.raises(ValueError):
            AtomicMovement(kind=MovementKind.GRIPPER_TOGGLE, t_start=1.0, t_end=2.0)

    def test_gripper_pose_coerces(self):
        p = GripperPose(position=[0.1, 0.2, 0.3], state="open")
        assert p.state is GripState.OPEN
