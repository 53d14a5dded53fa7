"""Per-user keypose training: collection, quality gating, fitting, persistence.

A session walks the user through 16 reference gripper positions laid out
on the workspace boundary at two heights. For each one, a window of
skeletons is collected, reduced to a median skeleton, converted to the
torso-frame arm vector and mirrored (the on-screen guide acts as a
mirror). The 16 correspondences train the user's spline map after a
quality gate modeled on how a supervisor rejects bad collections: no two
collected vectors may collapse together, and consecutive keyposes must
move the arm in the direction the targets move.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (
    InsufficientSamples,
    InvalidGeometry,
    IoFailure,
    MalformedProfile,
    QualityRejected,
)
from .posemap import TPSParams, tps_fit
from .skeleton import (
    ArmVector,
    Skeleton,
    arm_length_sum,
    arm_vector,
    median_skeleton,
    to_shoulder_frame,
    torso_basis,
)

NUM_KEYPOSES = 16
POSES_PER_LEVEL = 8

DEFAULT_WINDOW_SECONDS = 2.0
DEFAULT_FRAME_RATE = 30.0
DEFAULT_MIN_SEPARATION = 0.05  # meters between collected arm vectors

PROFILE_FORMAT = "rtkprofile"
PROFILE_VERSION = 1

#: input-axis to output-axis correspondence used by the consistency check:
#: arm (h, v, n) components drive robot (y, z, x).
_AXIS_PERMUTATION = (2, 0, 1)  # mapped = (u_n, u_h, u_v)


class SessionState(Enum):
    IDLE = "idle"
    COLLECTING = "collecting"
    DONE = "done"


@dataclass(frozen=True)
class KeyposeSet:
    """16 target gripper positions, 8 per height level, low level first."""

    targets: np.ndarray  # (16, 3) meters, robot frame
    z_low: float
    z_high: float

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        if targets.shape != (NUM_KEYPOSES, 3):
            raise ValueError("expected exactly 16 keypose targets")
        low = np.isclose(targets[:, 2], self.z_low)
        high = np.isclose(targets[:, 2], self.z_high)
        if int(low.sum()) != POSES_PER_LEVEL or int(high.sum()) != POSES_PER_LEVEL:
            raise ValueError("expected 8 targets per height level")
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True)
class QualityReport:
    """Outcome of the calibration quality gate."""

    min_pairwise_distance: float
    edge_consistency: tuple  # 15 booleans, one per consecutive keypose edge
    passed: bool
    failures: tuple  # human-readable reasons, each prefixed with a code

    def to_dict(self) -> dict:
        return {
            "min_pairwise_distance": self.min_pairwise_distance,
            "edge_consistency": list(self.edge_consistency),
            "passed": self.passed,
            "failures": list(self.failures),
        }

    @staticmethod
    def from_dict(d: dict) -> "QualityReport":
        return QualityReport(
            min_pairwise_distance=float(d["min_pairwise_distance"]),
            edge_consistency=tuple(bool(x) for x in d["edge_consistency"]),
            passed=bool(d["passed"]),
            failures=tuple(str(x) for x in d["failures"]),
        )


@dataclass(frozen=True)
class CalibrationProfile:
    """One user's trained correspondences and fitted map."""

    user: str
    source_points: np.ndarray  # (16, 3) mirrored, unnormalized arm vectors
    targets: np.ndarray        # (16, 3) robot keypose positions
    arm_length_sum: float      # meters, for affine-mode normalization
    created_at: str            # ISO-8601
    quality: Optional[QualityReport] = None
    tps: Optional[TPSParams] = None

    def __post_init__(self):
        object.__setattr__(self, "source_points",
                           np.asarray(self.source_points, dtype=float))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))
        if self.source_points.shape != (NUM_KEYPOSES, 3):
            raise ValueError("expected 16 source arm vectors")
        if self.targets.shape != (NUM_KEYPOSES, 3):
            raise ValueError("expected 16 keypose targets")
        if self.tps is not None and (self.quality is None or not self.quality.passed):
            raise ValueError("fitted map requires a passing quality report")


@dataclass
class CalibrationSession:
    """Single-writer state machine collecting one keypose at a time."""

    keyposes: KeyposeSet
    user: str
    window_seconds: float = DEFAULT_WINDOW_SECONDS
    frame_rate: float = DEFAULT_FRAME_RATE
    state: SessionState = SessionState.IDLE
    current_index: int = 0
    collected: list = field(default_factory=list)   # ArmVector per keypose
    samples: list = field(default_factory=list)     # buffer for the active keypose
    arm_length: Optional[float] = None

    @property
    def required_samples(self) -> int:
        return int(round(self.window_seconds * self.frame_rate))

    def start(self) -> None:
        self.state = SessionState.COLLECTING
        self.current_index = 0
        self.collected = []
        self.samples = []
        self.arm_length = None

    def add_sample(self, s: Skeleton) -> int:
        self.samples.append(s)
        return len(self.samples)

    def snapshot(self) -> dict:
        return {
            "state": self.state.value,
            "current_index": self.current_index,
            "collected": len(self.collected),
            "buffered_samples": len(self.samples),
            "required_samples": self.required_samples,
        }


def mirror_arm(u: ArmVector) -> ArmVector:
    """Flip the arm vector left/right: negate the horizontal component."""
    c = u.components
    return ArmVector(np.array([-c[0], c[1], c[2]]))


def record_keypose(session: CalibrationSession,
                   samples: Sequence[Skeleton]) -> ArmVector:
    """Finalize the current keypose from a window of skeleton samples.

    The median skeleton is reduced to a mirrored, unnormalized arm
    vector, stored, and the session advances. The first keypose (arm
    stretched) also measures the user's arm+forearm length for
    affine-mode use.
    """
    if session.state is not SessionState.COLLECTING:
        raise RuntimeError("session is not collecting")
    if len(samples) < session.required_samples:
        raise InsufficientSamples(
            f"got {len(samples)} samples, need {session.required_samples}"
            f" ({session.window_seconds:g} s at {session.frame_rate:g} Hz)")

    med = median_skeleton(samples)
    basis = torso_basis(med)
    raw = to_shoulder_frame(arm_vector(med), basis)
    mirrored = mirror_arm(raw)

    if session.current_index == 0:
        session.arm_length = arm_length_sum(med)
    session.collected.append(mirrored)
    session.samples = []
    session.current_index += 1
    if session.current_index >= NUM_KEYPOSES:
        session.state = SessionState.DONE
    return mirrored


def default_keypose_set(radius: float, z_low: float, z_high: float,
                        sector: tuple = (-math.pi / 2, math.pi / 2)) -> KeyposeSet:
    """Evenly spaced targets along the boundary arc at two heights.

    Eight positions per level sweep the sector from its low edge to its
    high edge inclusive; the low level comes first. Angles are radians in
    the robot base frame (x forward of the robot when the sector is
    symmetric about zero).
    """
    theta_min, theta_max = float(sector[0]), float(sector[1])
    width = theta_max - theta_min
    if radius <= 0:
        raise InvalidGeometry("radius must be positive")
    if not z_low < z_high:
        raise InvalidGeometry("z_low must be below z_high")
    if not (0.0 < width <= math.pi + 1e-12):
        raise InvalidGeometry("sector width must be in (0, 180] degrees")

    angles = np.linspace(theta_min, theta_max, POSES_PER_LEVEL)
    targets = []
    for z in (z_low, z_high):
        for a in angles:
            targets.append([radius * math.cos(a), radius * math.sin(a), z])
    return KeyposeSet(targets=np.asarray(targets), z_low=z_low, z_high=z_high)


def validate_profile(X: np.ndarray, Y: np.ndarray,
                     d_min: float = DEFAULT_MIN_SEPARATION) -> QualityReport:
    """Quality-gate collected arm vectors against the keypose targets.

    Two checks: (1) no two collected vectors closer than d_min, and
    (2) for each of the 15 consecutive keypose edges, the collected
    displacement, pushed through the arm-to-robot axis correspondence,
    must not point against the target displacement.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != (NUM_KEYPOSES, 3) or Y.shape != (NUM_KEYPOSES, 3):
        raise ValueError("expected 16 collected vectors and 16 targets")

    failures = []
    min_dist = float(pdist(X).min())
    if min_dist < d_min:
        dists = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
        np.fill_diagonal(dists, np.inf)
        i, j = np.unravel_index(int(np.argmin(dists)), dists.shape)
        failures.append(
            f"TooClose: keyposes {min(i, j)} and {max(i, j)} are "
            f"{min_dist:.4f} m apart (< {d_min:g} m)")

    edge_flags = []
    for i in range(NUM_KEYPOSES - 1):
        dx = X[i + 1] - X[i]
        dy = Y[i + 1] - Y[i]
        mapped = dx[list(_AXIS_PERMUTATION)]
        ok = float(mapped @ dy) >= 0.0
        edge_flags.append(ok)
        if not ok:
            failures.append(
                f"EdgeMismatch: keyposes {i}->{i + 1} moved against the target"
                " direction")

    return QualityReport(
        min_pairwise_distance=min_dist,
        edge_consistency=tuple(edge_flags),
        passed=not failures,
        failures=tuple(failures),
    )


def fit_profile(profile: CalibrationProfile, lam: float = 0.0) -> CalibrationProfile:
    """Attach the fitted spline map to a quality-approved profile."""
    if profile.quality is None or not profile.quality.passed:
        reasons = "; ".join(profile.quality.failures) if profile.quality else "not validated"
        raise QualityRejected(f"calibration rejected, repeat the session ({reasons})")
    tps = tps_fit(profile.source_points, profile.targets, lam=lam)
    return replace(profile, tps=tps)


def build_profile(user: str, collected: Sequence[ArmVector], keyposes: KeyposeSet,
                  arm_length: float, d_min: float = DEFAULT_MIN_SEPARATION,
                  created_at: Optional[str] = None) -> CalibrationProfile:
    """Assemble, validate, and (if the gate passes) fit a profile."""
    X = np.stack([u.components for u in collected])
    report = validate_profile(X, keyposes.targets, d_min=d_min)
    profile = CalibrationProfile(
        user=user,
        source_points=X,
        targets=keyposes.targets,
        arm_length_sum=float(arm_length),
        created_at=created_at or _dt.datetime.now(_dt.timezone.utc).isoformat(),
        quality=report,
    )
    if report.passed:
        profile = fit_profile(profile)
    return profile


# --- persistence (.rtkprofile) ---------------------------------------------

def _matrix(rows) -> list:
    return [[float(c) for c in row] for row in np.asarray(rows, dtype=float)]


def save_profile(profile: CalibrationProfile, path) -> None:
    doc = {
        "format": PROFILE_FORMAT,
        "version": PROFILE_VERSION,
        "user": profile.user,
        "created_at": profile.created_at,
        "arm_length_sum": float(profile.arm_length_sum),
        "source_points": _matrix(profile.source_points),
        "targets": _matrix(profile.targets),
        "quality": profile.quality.to_dict() if profile.quality else None,
        "tps": None,
    }
    if profile.tps is not None:
        doc["tps"] = {
            "kernel": profile.tps.kernel,
            "num_points": profile.tps.num_points,
            "control_points": _matrix(profile.tps.control_points),
            "warp": _matrix(profile.tps.warp),
            "affine": _matrix(profile.tps.affine),
            "lambda": float(profile.tps.regularization),
        }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write profile: {exc}") from exc


def load_profile(path) -> CalibrationProfile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read profile: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedProfile(f"not a valid profile document: {exc}") from exc

    if not isinstance(doc, dict) or doc.get("format") != PROFILE_FORMAT:
        raise MalformedProfile("missing profile format marker")
    if doc.get("version") != PROFILE_VERSION:
        raise MalformedProfile(f"unsupported profile version {doc.get('version')!r}")
    try:
        quality = QualityReport.from_dict(doc["quality"]) if doc["quality"] else None
        tps = None
        if doc["tps"]:
            block = doc["tps"]
            tps = TPSParams(
                control_points=np.asarray(block["control_points"], dtype=float),
                warp=np.asarray(block["warp"], dtype=float),
                affine=np.asarray(block["affine"], dtype=float),
                kernel=block["kernel"],
                regularization=float(block["lambda"]),
            )
        return CalibrationProfile(
            user=str(doc["user"]),
            source_points=np.asarray(doc["source_points"], dtype=float),
            targets=np.asarray(doc["targets"], dtype=float),
            arm_length_sum=float(doc["arm_length_sum"]),
            created_at=str(doc["created_at"]),
            quality=quality,
            tps=tps,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedProfile(f"profile document incomplete: {exc}") from exc
