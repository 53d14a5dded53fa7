"""Shared synthetic-data builders for the test suite."""

import numpy as np
import pytest

from retarget.skeleton import JointId, Skeleton


def make_upright_skeleton(rng=None, hand=None, elbow=None, center=None,
                          timestamp=0.0) -> Skeleton:
    """Skeleton whose torso axes are exactly camera-axis-aligned.

    Shoulders straddle the torso center along +x and the spine runs along
    +y, so the torso basis is the identity and stays orthonormal.
    """
    rng = rng or np.random.default_rng(0)
    c = np.asarray(center if center is not None else rng.uniform(-1, 1, 3) + [0, 0, 2.0])
    half_width = 0.18
    rs = c + np.array([-half_width, 0.35, 0.0])
    ls = c + np.array([half_width, 0.35, 0.0])
    sp = c
    sc = c + np.array([0.0, 0.42, 0.0])
    if elbow is None:
        elbow = rs + rng.uniform(-0.25, 0.25, 3)
    if hand is None:
        hand = rs + rng.uniform(-0.5, 0.5, 3)
    return Skeleton(timestamp=timestamp, joints={
        JointId.SPINE_CENTER: sp,
        JointId.SHOULDER_CENTER: sc,
        JointId.RIGHT_SHOULDER: rs,
        JointId.LEFT_SHOULDER: ls,
        JointId.RIGHT_ELBOW: np.asarray(elbow, dtype=float),
        JointId.RIGHT_HAND: np.asarray(hand, dtype=float),
    })


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def transform_skeleton(s: Skeleton, rotation: np.ndarray,
                       translation: np.ndarray) -> Skeleton:
    joints = {jid: rotation @ p + translation for jid, p in s.joints.items()}
    return Skeleton(timestamp=s.timestamp, joints=joints)


def random_spread_points(rng, m: int, low=-1.0, high=1.0,
                         min_separation=0.05) -> np.ndarray:
    """m random 3D points kept pairwise apart (rejection sampling)."""
    points = [rng.uniform(low, high, 3)]
    while len(points) < m:
        candidate = rng.uniform(low, high, 3)
        if min(np.linalg.norm(candidate - p) for p in points) > min_separation:
            points.append(candidate)
    return np.asarray(points)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
