"""Translation/rotation-invariant right-arm pose representation.

A depth sensor reports body joints in camera space. Everything downstream
works in a torso-anchored frame built from four torso joints, so the
representation does not change when the user walks around or turns
relative to the camera.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSkeleton,
    EmptySampleSet,
    InconsistentJointSets,
    MalformedLog,
    MissingJoint,
    ZeroArmLength,
)

MIN_SEGMENT_LENGTH = 1e-6  # meters; below this a torso segment is degenerate


class JointId(str, Enum):
    """Canonical body joint names (full 25-joint depth-sensor set)."""

    SPINE_BASE = "spine_base"
    SPINE_CENTER = "spine_center"
    NECK = "neck"
    HEAD = "head"
    SHOULDER_CENTER = "shoulder_center"
    LEFT_SHOULDER = "left_shoulder"
    LEFT_ELBOW = "left_elbow"
    LEFT_WRIST = "left_wrist"
    LEFT_HAND = "left_hand"
    RIGHT_SHOULDER = "right_shoulder"
    RIGHT_ELBOW = "right_elbow"
    RIGHT_WRIST = "right_wrist"
    RIGHT_HAND = "right_hand"
    LEFT_HIP = "left_hip"
    LEFT_KNEE = "left_knee"
    LEFT_ANKLE = "left_ankle"
    LEFT_FOOT = "left_foot"
    RIGHT_HIP = "right_hip"
    RIGHT_KNEE = "right_knee"
    RIGHT_ANKLE = "right_ankle"
    RIGHT_FOOT = "right_foot"
    LEFT_HAND_TIP = "left_hand_tip"
    LEFT_THUMB = "left_thumb"
    RIGHT_HAND_TIP = "right_hand_tip"
    RIGHT_THUMB = "right_thumb"


#: Joints the arm representation cannot work without.
REQUIRED_JOINTS = (
    JointId.RIGHT_SHOULDER,
    JointId.RIGHT_ELBOW,
    JointId.RIGHT_HAND,
    JointId.LEFT_SHOULDER,
    JointId.SHOULDER_CENTER,
    JointId.SPINE_CENTER,
)


@dataclass(frozen=True)
class Skeleton:
    """Timestamped set of named 3D body joints in camera space (meters)."""

    timestamp: float
    joints: Mapping[JointId, np.ndarray]

    def __post_init__(self):
        coerced = {}
        for jid, p in self.joints.items():
            arr = np.asarray(p, dtype=float)
            if arr.shape != (3,):
                raise ValueError(f"joint {jid} is not a 3-vector")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"joint {jid} has non-finite coordinates")
            coerced[JointId(jid)] = arr
        object.__setattr__(self, "joints", coerced)

    def joint(self, jid: JointId) -> np.ndarray:
        try:
            return self.joints[jid]
        except KeyError:
            raise MissingJoint(f"skeleton has no {jid.value} joint") from None

    def has(self, *jids: JointId) -> bool:
        return all(j in self.joints for j in jids)


@dataclass(frozen=True)
class TorsoBasis:
    """Unit vectors spanning the torso plane: horizontal, vertical, normal."""

    horizontal: np.ndarray
    vertical: np.ndarray
    normal: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Columns are (horizontal, vertical, normal)."""
        return np.column_stack([self.horizontal, self.vertical, self.normal])


@dataclass(frozen=True)
class ArmVector:
    """Shoulder-to-hand displacement in the torso frame, meters.

    Components are the projections onto (horizontal, vertical, normal).
    """

    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))


@dataclass(frozen=True)
class NormalizedArmVector:
    """Arm vector divided by the user's arm+forearm length (dimensionless)."""

    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < MIN_SEGMENT_LENGTH:
        raise DegenerateSkeleton(f"{what} segment has near-zero length ({n:.2e} m)")
    return v / n


def torso_basis(s: Skeleton) -> TorsoBasis:
    """Build the torso reference frame from spine and shoulder joints.

    vertical points spine-center -> shoulder-center, horizontal points
    right-shoulder -> left-shoulder, and normal is their normalized cross
    product (out of the torso plane).
    """
    v = _unit(s.joint(JointId.SHOULDER_CENTER) - s.joint(JointId.SPINE_CENTER), "spine")
    h = _unit(s.joint(JointId.LEFT_SHOULDER) - s.joint(JointId.RIGHT_SHOULDER), "shoulder")
    cross = np.cross(h, v)
    norm = float(np.linalg.norm(cross))
    if norm < MIN_SEGMENT_LENGTH:
        raise DegenerateSkeleton("torso axes are parallel; normal undefined")
    return TorsoBasis(horizontal=h, vertical=v, normal=cross / norm)


def arm_vector(s: Skeleton) -> np.ndarray:
    """Right-shoulder-to-right-hand displacement in camera coordinates."""
    return s.joint(JointId.RIGHT_HAND) - s.joint(JointId.RIGHT_SHOULDER)


def to_shoulder_frame(u: np.ndarray, basis: TorsoBasis) -> ArmVector:
    """Express a camera-space vector in the torso frame.

    Components are plain dot products against the basis vectors; no
    re-orthogonalization is applied for leaning users.
    """
    u = np.asarray(u, dtype=float)
    return ArmVector(np.array([
        float(u @ basis.horizontal),
        float(u @ basis.vertical),
        float(u @ basis.normal),
    ]))


def arm_length_sum(s: Skeleton) -> float:
    """Arm plus forearm length in meters (normalization denominator)."""
    upper = s.joint(JointId.RIGHT_ELBOW) - s.joint(JointId.RIGHT_SHOULDER)
    fore = s.joint(JointId.RIGHT_HAND) - s.joint(JointId.RIGHT_ELBOW)
    return float(np.linalg.norm(upper) + np.linalg.norm(fore))


def normalize_arm(s: Skeleton, u: ArmVector) -> NormalizedArmVector:
    """Divide the arm vector by the user's arm+forearm length."""
    total = arm_length_sum(s)
    if total < MIN_SEGMENT_LENGTH:
        raise ZeroArmLength(f"arm+forearm length {total:.2e} m too small")
    return NormalizedArmVector(u.components / total)


def median_skeleton(samples: Sequence[Skeleton]) -> Skeleton:
    """Coordinate-wise median skeleton of a sample window.

    The scalar median is taken independently for every joint coordinate
    (mean of the two middle values for even counts), which rejects the
    sporadic joint outliers depth-sensor trackers produce. The timestamp
    is the median timestamp.
    """
    if len(samples) == 0:
        raise EmptySampleSet("no skeleton samples")
    joint_set = set(samples[0].joints.keys())
    for s in samples[1:]:
        if set(s.joints.keys()) != joint_set:
            raise InconsistentJointSets("samples do not share one joint set")
    joints = {}
    for jid in joint_set:
        stacked = np.stack([s.joints[jid] for s in samples])
        joints[jid] = np.median(stacked, axis=0)
    ts = float(np.median([s.timestamp for s in samples]))
    return Skeleton(timestamp=ts, joints=joints)


# --- skeleton log records ------------------------------------------------
#
# One JSON object per line: {"t": <seconds>, "<joint name>": [x, y, z], ...}
# Unknown joint names are permitted and ignored.

_JOINT_NAMES = {j.value for j in JointId}


def skeleton_to_record(s: Skeleton) -> dict:
    rec: dict = {"t": float(s.timestamp)}
    for jid, p in s.joints.items():
        rec[jid.value] = [float(p[0]), float(p[1]), float(p[2])]
    return rec


def skeleton_from_record(rec: Mapping) -> Skeleton:
    if "t" not in rec:
        raise MalformedLog("skeleton record missing 't'")
    joints = {}
    for key, value in rec.items():
        if key == "t" or key not in _JOINT_NAMES:
            continue
        joints[JointId(key)] = np.asarray(value, dtype=float)
    return Skeleton(timestamp=float(rec["t"]), joints=joints)


def iter_skeleton_log(path) -> Iterator[Skeleton]:
    """Yield skeletons from a log file, reporting the offending line on error."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                yield skeleton_from_record(rec)
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise MalformedLog(f"line {lineno}: {exc}") from exc


def read_skeleton_log(path) -> list[Skeleton]:
    return list(iter_skeleton_log(path))


def write_skeleton_log(skeletons: Iterable[Skeleton], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in skeletons:
            fh.write(json.dumps(skeleton_to_record(s), sort_keys=True))
            fh.write("\n")
