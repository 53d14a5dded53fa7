"""Hand depth-image pipeline: crop, segment, binarize, resample, window.

The right hand is cut out of the raw depth frame with a distance-scaled
square, everything farther than 0.2 m behind the closest hand pixel is
discarded, and the result is binarized and resampled to 50x50, the
input format of the hand-state classifiers. Labeled recordings are
organized into episodes; sliding windows over an episode feed
sequence classifiers, each window labeled by its final image.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    CenterOutOfFrame,
    EmptyHandRegion,
    EpisodeTooShort,
    InvalidDepth,
    MalformedLog,
    TooFewEpisodes,
)
from .workspace import GripState

BOX_SCALE = 60.0          # pixel-meters; crop side = BOX_SCALE / hand depth
MIN_BOX_SIDE = 8          # pixels; smaller crops carry no hand structure
MIN_HAND_DEPTH = 0.05     # meters; closer readings are sensor garbage
SEGMENT_THRESHOLD = 0.2   # meters behind the closest hand pixel
RESAMPLE_SIDE = 50
DEFAULT_WINDOW_LENGTH = 15
DEFAULT_OPEN_RATIO = 0.28  # foreground ratio at the open/closed boundary


class HandImageMode(Enum):
    BINARY = "binary"
    GRAYSCALE = "grayscale"


@dataclass(frozen=True)
class DepthFrame:
    """Row-major depth map in meters; zero encodes no-data."""

    values: np.ndarray  # (height, width)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("depth frame must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depth values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class HandImage:
    """Segmented hand image, binary {0,1} or grayscale meters."""

    pixels: np.ndarray
    mode: HandImageMode

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 2:
            raise ValueError("hand image must be 2-D")
        if self.mode is HandImageMode.BINARY and not np.isin(p, (0.0, 1.0)).all():
            raise ValueError("binary image may only contain 0 and 1")
        object.__setattr__(self, "pixels", p)

    @property
    def foreground_ratio(self) -> float:
        return float(np.count_nonzero(self.pixels)) / self.pixels.size


@dataclass(frozen=True)
class HandState:
    """Open/closed decision with a confidence in [0, 1]."""

    state: GripState
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "state", GripState(self.state))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True)
class LabeledEpisode:
    """Temporally continuous labeled hand-image recording at 30 Hz."""

    images: tuple            # of HandImage
    labels: tuple            # of GripState, one per image
    person_id: str
    episode_id: str

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "labels", tuple(GripState(l) for l in self.labels))
        if len(self.images) != len(self.labels):
            raise ValueError("one label per image required")

    def __len__(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class SequenceWindow:
    """n consecutive hand images labeled by the final image's label."""

    images: tuple
    label: GripState

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "label", GripState(self.label))
        if len(self.images) == 0:
            raise ValueError("empty window")


def hand_box_side(d_rh: float, frame_shape: Optional[tuple] = None) -> int:
    """Crop side in pixels for a hand at depth d_rh (meters).

    The side scales inversely with distance so the projected hand keeps a
    constant scale; it is clamped below at 8 px and above at the frame's
    smaller dimension when given.
    """
    if not np.isfinite(d_rh) or d_rh <= MIN_HAND_DEPTH:
        raise InvalidDepth(f"hand depth {d_rh!r} m is not usable")
    side = int(np.floor(BOX_SCALE / d_rh + 0.5))
    side = max(MIN_BOX_SIDE, side)
    if frame_shape is not None:
        side = min(side, min(int(frame_shape[0]), int(frame_shape[1])))
    return side


def crop_hand(frame: DepthFrame, center_px: tuple, side: int) -> np.ndarray:
    """Square window centered at the hand pixel; off-frame area reads 0."""
    cx, cy = int(center_px[0]), int(center_px[1])
    if not (0 <= cx < frame.width and 0 <= cy < frame.height):
        raise CenterOutOfFrame(f"center ({cx}, {cy}) outside "
                               f"{frame.width}x{frame.height} frame")
    half = side // 2
    out = np.zeros((side, side), dtype=float)
    y0, x0 = cy - half, cx - half
    src_y0, src_x0 = max(0, y0), max(0, x0)
    src_y1 = min(frame.height, y0 + side)
    src_x1 = min(frame.width, x0 + side)
    if src_y0 < src_y1 and src_x0 < src_x1:
        out[src_y0 - y0:src_y1 - y0, src_x0 - x0:src_x1 - x0] = \
            frame.values[src_y0:src_y1, src_x0:src_x1]
    return out


def _min_positive_depth(img: np.ndarray) -> float:
    positive = img[img > 0]
    if positive.size == 0:
        raise EmptyHandRegion("no positive depth pixels in the hand crop")
    return float(positive.min())


def threshold_segment(img: np.ndarray, threshold: float = SEGMENT_THRESHOLD) -> np.ndarray:
    """Zero out everything farther than `threshold` behind the closest pixel.

    The closest positive pixel is assumed to belong to the hand; no-data
    zeros are excluded from that minimum and stay zero.
    """
    img = np.asarray(img, dtype=float)
    d_min = _min_positive_depth(img)
    out = img.copy()
    out[out > d_min + threshold] = 0.0
    return out


def binarize(img: np.ndarray, threshold: float = SEGMENT_THRESHOLD) -> HandImage:
    """Binary hand mask: 1 where a pixel survives depth segmentation."""
    img = np.asarray(img, dtype=float)
    d_min = _min_positive_depth(img)
    mask = (img > 0) & (img <= d_min + threshold)
    return HandImage(pixels=mask.astype(float), mode=HandImageMode.BINARY)


def resample_50(img: Union[HandImage, np.ndarray],
                mode: HandImageMode = HandImageMode.BINARY) -> HandImage:
    """Nearest-neighbor resample to 50x50 (keeps binary images binary)."""
    if isinstance(img, HandImage):
        pixels, mode = img.pixels, img.mode
    else:
        pixels = np.asarray(img, dtype=float)
    h, w = pixels.shape
    if h < 1 or w < 1:
        raise ValueError("empty source image")
    rows = np.minimum((np.arange(RESAMPLE_SIDE) + 0.5) * h / RESAMPLE_SIDE, h - 1).astype(int)
    cols = np.minimum((np.arange(RESAMPLE_SIDE) + 0.5) * w / RESAMPLE_SIDE, w - 1).astype(int)
    return HandImage(pixels=pixels[np.ix_(rows, cols)], mode=mode)


def make_windows(episode: LabeledEpisode, n: int = DEFAULT_WINDOW_LENGTH) -> list[SequenceWindow]:
    """All stride-1 windows of length n; window k is labeled by image k+n-1."""
    if n < 1:
        raise ValueError("window length must be >= 1")
    if len(episode) < n:
        raise EpisodeTooShort(f"episode has {len(episode)} images, window needs {n}")
    return [
        SequenceWindow(images=episode.images[k:k + n], label=episode.labels[k + n - 1])
        for k in range(len(episode) - n + 1)
    ]


def twofold_split(episodes: Sequence[LabeledEpisode],
                  seed: int = 0) -> tuple[list, list]:
    """Partition whole episodes into two folds of near-equal image counts.

    Episodes are shuffled deterministically from the seed and assigned
    greedily to the currently smaller fold, so no episode's images leak
    across the fold boundary.
    """
    if len(episodes) < 2:
        raise TooFewEpisodes("need at least 2 episodes to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(episodes))
    fold_a: list = []
    fold_b: list = []
    count_a = count_b = 0
    for idx in order:
        ep = episodes[int(idx)]
        if count_a <= count_b:
            fold_a.append(ep)
            count_a += len(ep)
        else:
            fold_b.append(ep)
            count_b += len(ep)
    return fold_a, fold_b


class ThresholdHandClassifier:
    """Stand-in classifier: thresholds the final image's foreground ratio.

    Exists to exercise the pipeline end to end behind the same interface a
    trained sequence model would implement. Above the ratio threshold the
    hand reads open (fingers spread cover more pixels); ties break to open.
    """

    def __init__(self, open_ratio: float = DEFAULT_OPEN_RATIO):
        if not 0.0 < open_ratio < 1.0:
            raise ValueError("open_ratio must be in (0, 1)")
        self.open_ratio = open_ratio

    def classify(self, images: Sequence[HandImage]) -> HandState:
        final = images[-1]
        if final.mode is not HandImageMode.BINARY:
            raise ValueError("classifier expects binary images")
        ratio = final.foreground_ratio
        if ratio >= self.open_ratio:
            confidence = (ratio - self.open_ratio) / (1.0 - self.open_ratio)
            return HandState(state=GripState.OPEN, confidence=confidence)
        confidence = (self.open_ratio - ratio) / self.open_ratio
        return HandState(state=GripState.CLOSED, confidence=confidence)


def classify_stub(window: SequenceWindow,
                  open_ratio: float = DEFAULT_OPEN_RATIO) -> HandState:
    """Classify a sequence window with the threshold stand-in."""
    return ThresholdHandClassifier(open_ratio).classify(window.images)


# --- on-disk dataset --------------------------------------------------------
#
# One directory per episode: labels.csv ("index,label") plus index-named
# 50x50 portable graymap frames (frame_00042.pgm). The directory name
# encodes person and episode ids as <person>_<episode> when it contains
# an underscore.

_PGM_MAXVAL = 255


def write_pgm(img: HandImage, path) -> None:
    pixels = img.pixels
    if img.mode is HandImageMode.BINARY:
        data = (pixels * _PGM_MAXVAL).astype(np.uint8)
    else:
        top = float(pixels.max()) or 1.0
        data = np.clip(pixels / top * _PGM_MAXVAL, 0, _PGM_MAXVAL).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{_PGM_MAXVAL}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path, binary: bool = True) -> HandImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(blob, pos)
        if match is None:
            raise MalformedLog(f"{path}: truncated graymap header")
        pos = match.end()
        tok = match.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos + 1)
        pixels = data.reshape(h, w).astype(float)
    elif magic == b"P2":
        values = blob[pos:].split()
        pixels = np.array(values[:w * h], dtype=float).reshape(h, w)
    else:
        raise MalformedLog(f"{path}: not a portable graymap")
    if binary:
        return HandImage(pixels=(pixels > maxval / 2).astype(float),
                         mode=HandImageMode.BINARY)
    return HandImage(pixels=pixels / maxval, mode=HandImageMode.GRAYSCALE)


def _split_episode_name(name: str) -> tuple[str, str]:
    if "_" in name:
        person, _, episode = name.partition("_")
        return person, episode
    return name, name


def save_episode(episode: LabeledEpisode, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for i, label in enumerate(episode.labels):
            writer.writerow([i, label.value])
    for i, img in enumerate(episode.images):
        write_pgm(img, directory / f"frame_{i:05d}.pgm")


def load_episode(directory) -> LabeledEpisode:
    directory = Path(directory)
    labels_path = directory / "labels.csv"
    if not labels_path.exists():
        raise MalformedLog(f"{directory}: no labels.csv")
    labels: dict[int, GripState] = {}
    with open(labels_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip() == "index":
                continue
            try:
                labels[int(row[0])] = GripState(row[1].strip())
            except (ValueError, IndexError) as exc:
                raise MalformedLog(f"{labels_path}: bad row {row!r}") from exc
    frames = sorted(directory.glob("*.pgm"))
    if len(frames) != len(labels):
        raise MalformedLog(f"{directory}: {len(frames)} frames vs {len(labels)} labels")
    images, ordered = [], []
    for idx, path in enumerate(frames):
        if idx not in labels:
            raise MalformedLog(f"{directory}: no label for frame index {idx}")
        img = read_pgm(path)
        if img.pixels.shape != (RESAMPLE_SIDE, RESAMPLE_SIDE):
            img = resample_50(img)
        images.append(img)
        ordered.append(labels[idx])
    person, ep = _split_episode_name(directory.name)
    return LabeledEpisode(images=tuple(images), labels=tuple(ordered),
                          person_id=person, episode_id=ep)


def load_dataset(root) -> list[LabeledEpisode]:
    root = Path(root)
    episodes = []
    for child in sorted(p for p in root.iterdir() if p.is_dir()):
        if (child / "labels.csv").exists():
            episodes.append(load_episode(child))
    return episodes


def import_dataset(source_root, dest_root=None) -> list[LabeledEpisode]:
    """Load, validate, and normalize a dataset tree (resampling to 50x50).

    When dest_root is given, a normalized copy is written there; the
    loaded episodes are returned either way.
    """
    episodes = load_dataset(source_root)
    if dest_root is not None:
        dest_root = Path(dest_root)
        for ep in episodes:
            name = f"{ep.person_id}_{ep.episode_id}" if ep.person_id != ep.episode_id \
                else ep.episode_id
            save_episode(ep, dest_root / name)
    return episodes
