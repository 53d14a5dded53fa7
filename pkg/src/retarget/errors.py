"""Exception types raised across the retarget package."""


class RetargetError(Exception):
    """Base class for every error this package raises on purpose."""


# --- skeleton representation ---

class MissingJoint(RetargetError):
    """A joint required by the arm representation is absent."""


class DegenerateSkeleton(RetargetError):
    """Torso segments too short or parallel to define a reference frame."""


class ZeroArmLength(RetargetError):
    """Arm plus forearm length is too small to normalize against."""


class EmptySampleSet(RetargetError):
    """A median was requested over zero skeletons."""


class InconsistentJointSets(RetargetError):
    """Skeleton samples do not share one joint set."""


# --- pose mapping ---

class TooFewPoints(RetargetError):
    """Spline fitting needs at least five correspondences."""


class SingularSystem(RetargetError):
    """The interpolation system is singular or numerically unusable."""


class AtControlPoint(RetargetError):
    """The spline gradient is undefined exactly at a control point."""


class WrongInputKind(RetargetError):
    """Normalized/unnormalized arm input passed to the wrong map variant."""


# --- calibration ---

class InvalidGeometry(RetargetError):
    """Keypose arc parameters are out of range."""


class InsufficientSamples(RetargetError):
    """Not enough skeleton samples to finalize a keypose."""


class QualityRejected(RetargetError):
    """Calibration data failed the quality gate; the session must be repeated."""


class MalformedProfile(RetargetError):
    """Profile file is unreadable, truncated, or of an unknown version."""


class IoFailure(RetargetError):
    """Underlying file I/O failed."""


# --- depth preprocessing ---

class InvalidDepth(RetargetError):
    """Hand depth is non-positive or implausibly close."""


class CenterOutOfFrame(RetargetError):
    """Crop center lies outside the depth frame."""


class EmptyHandRegion(RetargetError):
    """No valid depth pixels to segment."""


class EpisodeTooShort(RetargetError):
    """Episode shorter than the requested window length."""


class TooFewEpisodes(RetargetError):
    """A two-fold split needs at least two episodes."""


# --- trajectory analysis ---

class TooFewSamples(RetargetError):
    """Trajectory too short for the requested analysis."""


class NonUniformRate(RetargetError):
    """Timestamp jitter too large for finite-difference analysis."""


# --- streaming runtime ---

class UnknownTopic(RetargetError):
    """Topic was never registered with the broker."""


class TypeMismatch(RetargetError):
    """Payload type does not match the topic registration."""


class MalformedLog(RetargetError):
    """A replayed log line could not be parsed."""
