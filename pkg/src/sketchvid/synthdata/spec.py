"""Data types for generated sketch sequences, clips and their annotations."""
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

FPS = 30
KINDS = ("glide", "spin", "jump", "static")
HATCH_ANGLES = (0.0, 45.0, 90.0, 135.0)
HATCH_PERIODS = (3.0, 5.0)
N_HAIR = 4
N_POSES = 4


class SpecError(ValueError):
    """A clip specification cannot be rendered."""


@dataclass(frozen=True)
class AppearanceSpec:
    """Skater look: torso hatch (angle, period index), hair style, arm pose."""

    hatch_angle: int
    hatch_period: int
    hair: int
    pose: int

    @property
    def clothing(self):
        return self.hatch_angle * len(HATCH_PERIODS) + self.hatch_period

    def validate(self):
        if not (0 <= self.hatch_angle < len(HATCH_ANGLES) and 0 <= self.hatch_period < len(HATCH_PERIODS)
                and 0 <= self.hair < N_HAIR and 0 <= self.pose < N_POSES):
            raise SpecError(f"appearance ids out of range: {self}")


@dataclass(frozen=True)
class Segment:
    """One motion-program segment, drawn as one sketch page.

    ``direction`` is an image-plane angle in degrees for glides, +1/-1 for the
    spin sense, and the horizontal drift sign (-1, 0, +1) for jumps.
    """

    kind: str
    direction: float
    speed: float
    frames: int

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown segment kind {self.kind!r}")
        if self.frames < 2:
            raise SpecError("segments need at least 2 frames")
        if self.kind != "static" and self.speed <= 0:
            raise SpecError(f"{self.kind} segment needs a positive speed")

    @property
    def signature(self):
        return (self.kind, round(float(self.direction), 3), round(float(self.speed), 3))


@dataclass(frozen=True)
class MotionProgram:
    segments: Tuple[Segment, ...]
    start: Tuple[float, float]  # torso centre at frame 1, pixels

    @property
    def duration(self):
        return int(sum(s.frames for s in self.segments))

    @property
    def kinds(self):
        return tuple(s.kind for s in self.segments)


@dataclass(frozen=True)
class ClipSpec:
    clip_id: str
    appearance: AppearanceSpec
    motion: MotionProgram

    @property
    def duration_frames(self):
        return self.motion.duration

    @property
    def n_pages(self):
        return len(self.motion.segments)

    def intervals(self):
        """Inclusive 1-based frame interval of every segment."""
        out = []
        start = 1
        for seg in self.motion.segments:
            out.append((start, start + seg.frames - 1))
            start += seg.frames
        return out

    def validate(self, min_frames=1):
        self.appearance.validate()
        if not 1 <= len(self.motion.segments) <= 9:
            raise SpecError(f"{self.clip_id}: {len(self.motion.segments)} segments, need 1..9")
        for seg in self.motion.segments:
            seg.validate()
        if self.duration_frames < min_frames:
            raise SpecError(f"{self.clip_id}: {self.duration_frames} frames < required {min_frames}")

    def to_json(self):
        return {
            "clip_id": self.clip_id,
            "appearance": asdict(self.appearance),
            "motion": {
                "start": list(self.motion.start),
                "segments": [asdict(s) for s in self.motion.segments],
            },
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            clip_id=d["clip_id"],
            appearance=AppearanceSpec(**d["appearance"]),
            motion=MotionProgram(
                segments=tuple(Segment(**s) for s in d["motion"]["segments"]),
                start=tuple(d["motion"]["start"]),
            ),
        )


@dataclass
class Stroke:
    points: np.ndarray  # (n, 2) of (x, y)
    is_motion: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 2:
            raise SpecError("a stroke needs at least 2 points")


@dataclass
class SketchPage:
    appearance_raster: np.ndarray  # (1, H, W)
    motion_raster: np.ndarray      # (1, H, W)
    page_index: int                # 1-based
    is_static: bool
    strokes: List[Stroke] = field(default_factory=list)


@dataclass
class SketchSequence:
    id: str
    pages: List[SketchPage]
    paired_clip_id: str

    def __post_init__(self):
        if not 1 <= len(self.pages) <= 9:
            raise SpecError(f"sketch sequence {self.id} has {len(self.pages)} pages, need 1..9")


@dataclass
class VideoClip:
    id: str
    frames: np.ndarray  # (O, 3, H, W) float32 in [0, 1]
    fps: int = FPS

    @property
    def n_frames(self):
        return int(self.frames.shape[0])

    def gray(self):
        """Luminance frames (O, H, W) in float64."""
        f = self.frames.astype(np.float64)
        return 0.299 * f[:, 0] + 0.587 * f[:, 1] + 0.114 * f[:, 2]


@dataclass
class AlignmentAnnotation:
    intervals: Dict[int, Tuple[int, int]]  # page_index -> inclusive [start, end], 1-based

    def validate(self, n_frames):
        prev_start = 0
        prev_end = 0
        for page in sorted(self.intervals):
            s, e = self.intervals[page]
            if not (1 <= s <= e <= n_frames):
                raise SpecError(f"page {page} interval {(s, e)} outside [1, {n_frames}]")
            if s < prev_start or s <= prev_end:
                raise SpecError(f"page {page} interval {(s, e)} overlaps or precedes the previous page")
            prev_start, prev_end = s, e


@dataclass
class ManifestEntry:
    sequence_id: str
    clip_id: str
    split: str
    sketch_file: str
    clip_file: str
    alignment_file: str
    spec: Optional[dict] = None
    twin: Optional[str] = None  # "appearance:<k>" / "motion:<k>" for constructed pairs


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    seed: int
    config_hash: str
    config: dict
    frame_size: Tuple[int, int] = (64, 64)

    def validate(self):
        seq_ids = [e.sequence_id for e in self.entries]
        clip_ids = [e.clip_id for e in self.entries]
        if len(set(seq_ids)) != len(seq_ids):
            raise SpecError("duplicate sketch sequence id in manifest")
        if len(set(clip_ids)) != len(clip_ids):
            raise SpecError("duplicate clip id in manifest")
        for e in self.entries:
            if e.split not in ("train", "val", "test"):
                raise SpecError(f"{e.sequence_id}: unknown split {e.split!r}")

    def split(self, name):
        return [e for e in self.entries if e.split == name]
