"""Reachable-workspace model and gripper trajectory analysis.

The robot's reachable region is modeled as a sector of a hollow cylinder:
a radial range, a height range, and an angular sector about the vertical
axis. Mapped targets that fall outside are clamped coordinate-by-
coordinate in cylindrical space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import MalformedLog, NonUniformRate, TooFewSamples

ANGLE_TOL = 1e-9
AXIS_EPS = 1e-9  # radial distance below which the angle is undefined

TWO_PI = 2.0 * math.pi


class GripState(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class MovementKind(str, Enum):
    TRANSLATION = "translation"
    GRIPPER_TOGGLE = "gripper_toggle"


@dataclass(frozen=True)
class WorkspaceModel:
    """Semi-cylindrical reachable region in the robot base frame."""

    r_min: float
    r_max: float
    z_min: float
    z_max: float
    theta_min: float  # radians
    theta_max: float

    def __post_init__(self):
        if not (0.0 <= self.r_min < self.r_max):
            raise ValueError("need 0 <= r_min < r_max")
        if not self.z_min < self.z_max:
            raise ValueError("need z_min < z_max")
        width = self.theta_max - self.theta_min
        if not (0.0 < width <= TWO_PI):
            raise ValueError("sector width must be in (0, 2*pi]")

    @property
    def sector_width(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def center(self) -> np.ndarray:
        r = 0.5 * (self.r_min + self.r_max)
        theta = self.theta_min + 0.5 * self.sector_width
        z = 0.5 * (self.z_min + self.z_max)
        return np.array([r * math.cos(theta), r * math.sin(theta), z])


@dataclass(frozen=True)
class GripperPose:
    """Gripper position plus open/closed state; orientation is always down."""

    position: np.ndarray
    state: GripState

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "state", GripState(self.state))


@dataclass(frozen=True)
class Trajectory:
    """Timestamped gripper pose sequence with strictly increasing times."""

    times: np.ndarray       # (n,)
    positions: np.ndarray   # (n, 3)
    states: tuple           # of GripState, length n

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        st = tuple(GripState(s) for s in self.states)
        if t.ndim != 1 or p.shape != (t.size, 3) or len(st) != t.size:
            raise ValueError("times, positions, states lengths disagree")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "states", st)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class AtomicMovement:
    """Indivisible gripper action: a continuous displacement or a state toggle."""

    kind: MovementKind
    t_start: float
    t_end: float
    start_position: Optional[np.ndarray] = None
    end_position: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind is MovementKind.TRANSLATION and not self.t_end > self.t_start:
            raise ValueError("translation must have nonzero duration")
        if self.kind is MovementKind.GRIPPER_TOGGLE and self.t_end != self.t_start:
            raise ValueError("gripper toggle is instantaneous")


def _sector_offset(m: WorkspaceModel, theta: float) -> float:
    """Angle measured from theta_min, wrapped into [0, 2*pi)."""
    return (theta - m.theta_min) % TWO_PI


def contains(m: WorkspaceModel, p: np.ndarray, tol: float = ANGLE_TOL) -> bool:
    """True iff p lies in the closed workspace region (tolerance on all faces)."""
    p = np.asarray(p, dtype=float)
    r = math.hypot(p[0], p[1])
    if not (m.r_min - tol <= r <= m.r_max + tol):
        return False
    if not (m.z_min - tol <= p[2] <= m.z_max + tol):
        return False
    if r < AXIS_EPS:
        # On the axis the angle is meaningless; reachable iff r_min is zero.
        return m.r_min <= tol
    off = _sector_offset(m, math.atan2(p[1], p[0]))
    return off <= m.sector_width + tol or off >= TWO_PI - tol


def project_to_workspace(m: WorkspaceModel, p: np.ndarray) -> np.ndarray:
    """Clamp a point into the workspace, coordinate-wise in cylindrical space.

    Points already inside are returned unchanged. Radial distance, height
    and sector angle are clamped independently; for points on the cylinder
    axis (angle undefined) the sector midpoint is used.
    """
    p = np.asarray(p, dtype=float)
    if contains(m, p):
        return p
    r = math.hypot(p[0], p[1])
    z = min(max(p[2], m.z_min), m.z_max)
    if r < AXIS_EPS:
        theta = m.theta_min + 0.5 * m.sector_width
    else:
        theta = math.atan2(p[1], p[0])
        off = _sector_offset(m, theta)
        if off > m.sector_width:
            # outside the sector: snap to the angularly nearer edge
            if off - m.sector_width <= TWO_PI - off:
                theta = m.theta_max
            else:
                theta = m.theta_min
    r = min(max(r, m.r_min), m.r_max)
    return np.array([r * math.cos(theta), r * math.sin(theta), z])


def segment_atomic(t: Trajectory, v_stop: float = 0.02,
                   dwell: float = 0.2) -> list[AtomicMovement]:
    """Split a trajectory into atomic movements.

    Every gripper open/close change is one instantaneous toggle. Spans
    where the finite-difference speed exceeds v_stop count as one
    translation; sub-threshold dips shorter than the dwell time do not
    split a movement, so only genuine rests separate translations.
    """
    if len(t) < 2:
        raise TooFewSamples("need at least 2 trajectory samples")
    if v_stop <= 0 or dwell <= 0:
        raise ValueError("v_stop and dwell must be positive")

    times, pos = t.times, t.positions
    dt = np.diff(times)
    speed = np.linalg.norm(np.diff(pos, axis=0), axis=1) / dt  # per interval
    moving = speed > v_stop

    # group consecutive moving intervals, bridging short resting gaps
    groups: list[list[int]] = []
    for i, flag in enumerate(moving):
        if not flag:
            continue
        if groups:
            last_end = groups[-1][-1]
            gap = times[i] - times[last_end + 1]
            if gap < dwell:
                groups[-1].append(i)
                continue
        groups.append([i])

    movements: list[AtomicMovement] = []
    for g in groups:
        a, b = g[0], g[-1]
        movements.append(AtomicMovement(
            kind=MovementKind.TRANSLATION,
            t_start=float(times[a]),
            t_end=float(times[b + 1]),
            start_position=pos[a].copy(),
            end_position=pos[b + 1].copy(),
        ))
    for i in range(1, len(t)):
        if t.states[i] != t.states[i - 1]:
            ts = float(times[i])
            movements.append(AtomicMovement(
                kind=MovementKind.GRIPPER_TOGGLE, t_start=ts, t_end=ts,
            ))
    movements.sort(key=lambda mv: (mv.t_start, mv.kind.value))
    return movements


def smoothness_metric(t: Trajectory) -> float:
    """RMS magnitude of the finite-difference jerk, in m/s^3.

    Lower is smoother; straight constant-velocity and constant-
    acceleration trajectories both score zero. Requires a (near-)uniform
    sample rate since third differences amplify timing jitter.
    """
    if len(t) < 4:
        raise TooFewSamples("need at least 4 samples for jerk estimation")
    dt = np.diff(t.times)
    mean_dt = float(dt.mean())
    if float(np.abs(dt - mean_dt).max()) > 0.10 * mean_dt:
        raise NonUniformRate("timestamp jitter exceeds 10% of the mean interval")
    p = t.positions
    third = p[3:] - 3.0 * p[2:-1] + 3.0 * p[1:-2] - p[:-3]
    jerk = np.linalg.norm(third, axis=1) / mean_dt ** 3
    return float(np.sqrt(np.mean(jerk ** 2)))


# --- trajectory log records ------------------------------------------------
#
# One JSON object per line: {"t": seconds, "pos": [x, y, z], "state": "open"}
# Extra keys are ignored so recorded pose payloads parse directly.

def trajectory_to_records(t: Trajectory) -> list[dict]:
    return [
        {"t": float(ts), "pos": [float(c) for c in p], "state": s.value}
        for ts, p, s in zip(t.times, t.positions, t.states)
    ]


def trajectory_from_records(records: Iterable[dict]) -> Trajectory:
    times, positions, states = [], [], []
    for i, rec in enumerate(records):
        try:
            times.append(float(rec["t"]))
            positions.append([float(c) for c in rec["pos"]])
            states.append(GripState(rec["state"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLog(f"trajectory record {i}: {exc}") from exc
    return Trajectory(times=np.asarray(times), positions=np.asarray(positions),
                      states=tuple(states))


def read_trajectory_log(path) -> Trajectory:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedLog(f"line {lineno}: {exc}") from exc
    return trajectory_from_records(records)


def write_trajectory_log(t: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trajectory_to_records(t):
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
