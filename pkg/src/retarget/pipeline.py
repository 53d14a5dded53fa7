"""Streaming teleoperation pipeline: skeletons in, gripper poses out.

Every frame runs two independent paths. The position path turns the
skeleton into a torso-frame arm vector, maps it through the active pose
map (affine or per-user spline) and clamps the result into the
workspace. The state path crops and binarizes the hand from the depth
frame, maintains a sliding image window, and asks the classifier for
open/closed; when depth is missing or unusable the previous state stays
latched while the position keeps updating.

Frames are processed strictly one at a time so a fixed configuration and
an identical input stream always produce an identical output stream.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import skeleton as sk
from .broker import Broker, Subscription
from .calibration import CalibrationProfile, mirror_arm
from .depthproc import (
    DepthFrame,
    HandState,
    ThresholdHandClassifier,
    binarize,
    crop_hand,
    hand_box_side,
    resample_50,
    DEFAULT_OPEN_RATIO,
    DEFAULT_WINDOW_LENGTH,
)
from .errors import (
    CenterOutOfFrame,
    EmptyHandRegion,
    InvalidDepth,
    IoFailure,
    MalformedLog,
    RetargetError,
)
from .posemap import AffineMapParams, map_pose
from .skeleton import Skeleton, normalize_arm
from .workspace import GripState, GripperPose, WorkspaceModel, project_to_workspace

# Topic layout. Inputs on the left of the pipeline, outputs on the right.
TOPIC_SKELETON = "/skeleton"
TOPIC_DEPTH = "/depth"
TOPIC_HAND_OVERRIDE = "/hand/override"
TOPIC_GRIPPER_POSE = "/gripper/pose"
TOPIC_GRIPPER_STATE = "/gripper/state"
TOPIC_HAND_IMAGE = "/hand_image"
TOPIC_CALIBRATION_EVENT = "/calibration/event"
TOPIC_REPLAY_EVENT = "/replay/event"

ALL_TOPICS = (
    TOPIC_SKELETON, TOPIC_DEPTH, TOPIC_HAND_OVERRIDE, TOPIC_GRIPPER_POSE,
    TOPIC_GRIPPER_STATE, TOPIC_HAND_IMAGE, TOPIC_CALIBRATION_EVENT,
    TOPIC_REPLAY_EVENT,
)

MODE_AFFINE = "affine"
MODE_TPS = "tps"


def register_topics(broker: Broker) -> None:
    for topic in ALL_TOPICS:
        broker.register_topic(topic, dict)


@dataclass(frozen=True)
class DepthInput:
    """Depth frame plus the hand's pixel position within it."""

    frame: DepthFrame
    hand_px: tuple  # (x, y) pixels


@dataclass
class PipelineConfig:
    """Runtime-switchable pipeline settings."""

    mode: str = MODE_AFFINE
    affine: AffineMapParams = field(default_factory=lambda: AffineMapParams(
        omega=np.array([0.25, 0.25, 0.25]), delta=np.array([0.25, 0.0, 0.3])))
    profile: Optional[CalibrationProfile] = None
    workspace: WorkspaceModel = field(default_factory=lambda: WorkspaceModel(
        r_min=0.15, r_max=0.45, z_min=0.10, z_max=0.55,
        theta_min=-np.pi / 2, theta_max=np.pi / 2))
    frame_rate: float = 30.0
    window_length: int = DEFAULT_WINDOW_LENGTH
    open_ratio: float = DEFAULT_OPEN_RATIO
    publish_both: bool = False  # also emit the inactive map's pose for comparison

    def __post_init__(self):
        if self.mode not in (MODE_AFFINE, MODE_TPS):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_TPS:
            if self.profile is None or self.profile.tps is None:
                raise ValueError("tps mode requires a profile with a fitted map")


class Pipeline:
    """Sequential frame processor; owns the sliding window and the latch."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.classifier = ThresholdHandClassifier(cfg.open_ratio)
        self._window: deque = deque(maxlen=cfg.window_length)
        self._hand_state = HandState(state=GripState.OPEN, confidence=0.0)
        self.last_hand_image = None

    @property
    def hand_state(self) -> HandState:
        return self._hand_state

    def override_state(self, state: GripState) -> None:
        """External open/closed control (UI button) replaces the latch."""
        self._hand_state = HandState(state=state, confidence=1.0)

    def map_position(self, s: Skeleton, mode: Optional[str] = None) -> np.ndarray:
        """Position path only: skeleton -> clamped robot-frame position."""
        mode = mode or self.cfg.mode
        basis = sk.torso_basis(s)
        raw = sk.to_shoulder_frame(sk.arm_vector(s), basis)
        if mode == MODE_AFFINE:
            target = map_pose(normalize_arm(s, raw), self.cfg.affine)
        else:
            # training stored mirrored vectors; live input must mirror too
            target = map_pose(mirror_arm(raw), self.cfg.profile.tps)
        return project_to_workspace(self.cfg.workspace, target)

    def update_hand_state(self, depth: Optional[DepthInput]) -> HandState:
        """State path only; keeps the previous state when depth is unusable."""
        if depth is None:
            return self._hand_state
        try:
            frame = depth.frame
            x, y = int(depth.hand_px[0]), int(depth.hand_px[1])
            d_rh = float(frame.values[y, x])
            side = hand_box_side(d_rh, frame_shape=frame.values.shape)
            crop = crop_hand(frame, (x, y), side)
            image = resample_50(binarize(crop))
        except (InvalidDepth, CenterOutOfFrame, EmptyHandRegion, IndexError):
            return self._hand_state
        self.last_hand_image = image
        self._window.append(image)
        if len(self._window) == self.cfg.window_length:
            self._hand_state = self.classifier.classify(tuple(self._window))
        return self._hand_state

    def step(self, s: Skeleton, depth: Optional[DepthInput] = None
             ) -> tuple[GripperPose, HandState]:
        """One frame through both paths (they share no intermediate state)."""
        position = self.map_position(s)
        state = self.update_hand_state(depth)
        return GripperPose(position=position, state=state.state), state


# --- replay / record ---------------------------------------------------------

def replay(log_path, broker: Broker, rate: float = 30.0, fast: bool = False,
           topic: str = TOPIC_SKELETON, publisher: str = "replay") -> int:
    """Publish a recorded payload-per-line log onto a topic.

    Records are paced at `rate` per second unless fast mode is set, which
    publishes back-to-back for deterministic tests. An end-of-stream event
    is emitted afterwards. Malformed lines abort with their line number.
    """
    period = 1.0 / rate if rate > 0 else 0.0
    count = 0
    try:
        fh = open(log_path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot open log: {exc}") from exc
    with fh:
        next_due = time.monotonic()
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLog(f"line {lineno}: {exc}") from exc
            if not isinstance(payload, dict):
                raise MalformedLog(f"line {lineno}: record is not an object")
            if not fast:
                delay = next_due - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                next_due += period
            broker.publish(topic, payload, publisher=publisher)
            count += 1
    broker.publish(TOPIC_REPLAY_EVENT,
                   {"event": "end_of_stream", "topic": topic, "count": count},
                   publisher=publisher)
    return count


class Recorder:
    """Append messages from chosen topics to a log file.

    Recording a single topic writes one bare payload per line, so a
    recorded /skeleton log replays directly and a recorded /gripper/pose
    log parses as a trajectory log. Recording several topics writes full
    {topic, seq, t, payload} envelopes to keep attribution.
    """

    def __init__(self, broker: Broker, topics, out_path):
        if isinstance(topics, str):
            topics = (topics,)
        self.topics = tuple(topics)
        self.broker = broker
        self.out_path = Path(out_path)
        self._sub: Optional[Subscription] = None
        self._bare = len(self.topics) == 1
        self.count = 0

    def __enter__(self) -> "Recorder":
        self._sub = self.broker.subscribe(self.topics, spill=True)
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def stop(self) -> None:
        if self._sub is None:
            return
        envelopes = self._sub.drain()
        self.broker.unsubscribe(self._sub)
        self._sub = None
        try:
            with open(self.out_path, "w", encoding="utf-8") as fh:
                for env in envelopes:
                    doc = env.payload if self._bare else env.to_wire()
                    fh.write(json.dumps(doc, sort_keys=True))
                    fh.write("\n")
                    self.count += 1
        except OSError as exc:
            raise IoFailure(f"cannot write log: {exc}") from exc


def record(broker: Broker, topics, out_path) -> Recorder:
    """Start recording; call .stop() (or use as a context manager) to flush."""
    rec = Recorder(broker, topics, out_path)
    rec.__enter__()
    return rec


# --- runtime -----------------------------------------------------------------

def _depth_from_record(rec: dict) -> Optional[DepthInput]:
    """Depth payloads carry either a dense grid or a synthetic description."""
    if "hand_px" not in rec:
        return None
    if "values" in rec:
        values = np.asarray(rec["values"], dtype=float)
    elif "shape" in rec and "hand_depth" in rec:
        # synthetic frame: uniform background, a filled square of hand pixels
        h, w = int(rec["shape"][0]), int(rec["shape"][1])
        values = np.full((h, w), float(rec.get("background", 0.0)))
        x, y = int(rec["hand_px"][0]), int(rec["hand_px"][1])
        half = int(rec.get("hand_half_size", 10))
        values[max(0, y - half):y + half + 1, max(0, x - half):x + half + 1] = \
            float(rec["hand_depth"])
    else:
        return None
    return DepthInput(frame=DepthFrame(values=values),
                      hand_px=(int(rec["hand_px"][0]), int(rec["hand_px"][1])))


class TeleopRuntime:
    """Owns the broker-facing loop: one thread, one frame in flight.

    Consumes /skeleton (pairing the newest /depth and /hand/override
    messages with it), runs the pipeline, and publishes /gripper/pose,
    /gripper/state and /hand_image. Mode changes apply atomically
    between steps.
    """

    def __init__(self, broker: Broker, cfg: PipelineConfig):
        self.broker = broker
        self.cfg = cfg
        self.pipeline = Pipeline(cfg)
        self._lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self.frames = 0
        self.errors = 0
        self.last_error: Optional[str] = None
        self.step_seconds_total = 0.0

    # -- configuration, applied between steps --

    def set_mode(self, mode: str, profile: Optional[CalibrationProfile] = None,
                 publish_both: Optional[bool] = None) -> None:
        with self._lock:
            cfg = self.cfg
            new_profile = profile if profile is not None else cfg.profile
            replacement = PipelineConfig(
                mode=mode, affine=cfg.affine, profile=new_profile,
                workspace=cfg.workspace, frame_rate=cfg.frame_rate,
                window_length=cfg.window_length, open_ratio=cfg.open_ratio,
                publish_both=cfg.publish_both if publish_both is None else publish_both,
            )
            old = self.pipeline
            self.cfg = replacement
            self.pipeline = Pipeline(replacement)
            self.pipeline._window.extend(old._window)
            self.pipeline._hand_state = old._hand_state

    def start(self) -> "TeleopRuntime":
        self._skel_sub = self.broker.subscribe(TOPIC_SKELETON, maxlen=None, spill=True)
        self._depth_sub = self.broker.subscribe(TOPIC_DEPTH)
        self._override_sub = self.broker.subscribe(TOPIC_HAND_OVERRIDE)
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)
        for sub in (self._skel_sub, self._depth_sub, self._override_sub):
            self.broker.unsubscribe(sub)

    def _loop(self) -> None:
        while not self._stop.is_set():
            env = self._skel_sub.get(timeout=0.1)
            if env is None:
                continue
            self.process_envelope(env)

    def process_envelope(self, env) -> None:
        try:
            s = sk.skeleton_from_record(env.payload)
        except (MalformedLog, ValueError) as exc:
            self.errors += 1
            self.last_error = str(exc)
            return

        depth = None
        for d_env in self._depth_sub.drain():
            depth = _depth_from_record(d_env.payload) or depth
        for o_env in self._override_sub.drain():
            state = o_env.payload.get("state")
            if state in (GripState.OPEN.value, GripState.CLOSED.value):
                self.pipeline.override_state(GripState(state))

        started = time.perf_counter()
        with self._lock:
            try:
                pose, hand = self.pipeline.step(s, depth)
                both = self.cfg.publish_both
                other_mode = MODE_TPS if self.cfg.mode == MODE_AFFINE else MODE_AFFINE
                other_ok = both and (
                    other_mode == MODE_AFFINE
                    or (self.cfg.profile is not None and self.cfg.profile.tps is not None))
                other = self.pipeline.map_position(s, mode=other_mode) if other_ok else None
            except RetargetError as exc:
                self.errors += 1
                self.last_error = str(exc)
                return
        self.step_seconds_total += time.perf_counter() - started
        self.frames += 1

        t = float(s.timestamp)
        pose_payload = {
            "t": t,
            "pos": [float(c) for c in pose.position],
            "state": pose.state.value,
            "mode": self.cfg.mode,
        }
        self.broker.publish(TOPIC_GRIPPER_POSE, pose_payload, publisher="pipeline")
        if other is not None:
            self.broker.publish(TOPIC_GRIPPER_POSE, {
                "t": t, "pos": [float(c) for c in other],
                "state": pose.state.value, "mode": other_mode,
            }, publisher="pipeline")
        self.broker.publish(TOPIC_GRIPPER_STATE, {
            "t": t, "state": hand.state.value,
            "confidence": float(hand.confidence),
        }, publisher="pipeline")
        if depth is not None and self.pipeline.last_hand_image is not None:
            img = self.pipeline.last_hand_image
            self.broker.publish(TOPIC_HAND_IMAGE, {
                "t": t,
                "ratio": img.foreground_ratio,
                "rows": ["".join("1" if v else "0" for v in row)
                         for row in img.pixels.astype(int)],
            }, publisher="pipeline")

    def mean_step_seconds(self) -> float:
        return self.step_seconds_total / self.frames if self.frames else 0.0
