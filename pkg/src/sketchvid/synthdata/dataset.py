"""Dataset generation and the on-disk directory format.

Layout::

    manifest.json
    clips/<clip_id>.bin               packed float32 frames
    sketches/<seq_id>.json            strokes with is_motion flags
    sketches/<seq_id>_page%02d_{ap,mo}.pgm
    alignments/<seq_id>.json          page_index -> [start, end]
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .render import render_sketch_pages, render_video
from .spec import (
    FPS,
    AlignmentAnnotation,
    ClipSpec,
    DatasetManifest,
    ManifestEntry,
    SketchPage,
    SketchSequence,
    SpecError,
    Stroke,
    VideoClip,
)
from .twins import clip_rng, make_twins, random_clip

CLIP_MAGIC = b"SKVCLIP1"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


class DatasetError(IOError):
    """A dataset file is missing, unreadable or inconsistent."""


@dataclass
class GeneratorConfig:
    n_clips: int = 32
    appearance_twin_pairs: int = 8
    motion_twin_pairs: int = 8
    frame_size: int = 64
    pages_mean: float = 2.7
    max_pages: int = 9
    frames_per_page_min: int = 12
    frames_per_page_max: int = 22
    static_prob: float = 0.05
    split_train: float = 350 / 528
    split_val: float = 50 / 528
    split_test: float = 128 / 528
    flow_length: int = 5

    def validate(self):
        if self.n_clips < 1:
            raise SpecError("n_clips must be positive")
        if not 1 <= self.max_pages <= 9:
            raise SpecError("max_pages must be within 1..9")
        if self.frames_per_page_min > self.frames_per_page_max:
            raise SpecError("frames_per_page_min exceeds frames_per_page_max")
        if self.frames_per_page_min < 2 * self.flow_length + 1:
            raise SpecError(f"clips may have {self.frames_per_page_min} frames, fewer than "
                            f"2L+1 = {2 * self.flow_length + 1}")
        fr = (self.split_train, self.split_val, self.split_test)
        if min(fr) < 0 or sum(fr) <= 0:
            raise SpecError("split fractions must be non-negative and not all zero")

    def canonical(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self):
        return config_digest(self.canonical())

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k not in known:
                raise SpecError(f"unknown generator option {k!r}")
            default = getattr(cls, k)
            kwargs[k] = type(default)(v)
        return cls(**kwargs)


def config_digest(d):
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class Dataset:
    """Manifest plus sketches, alignments and (lazily loaded) clips."""

    def __init__(self, manifest, root=None):
        self.manifest = manifest
        self.root = Path(root) if root is not None else None
        self._clips = {}
        self._sketches = {}
        self._alignments = {}
        self._by_seq = {e.sequence_id: e for e in manifest.entries}
        self._by_clip = {e.clip_id: e for e in manifest.entries}

    # -- lookup
    @property
    def entries(self):
        return self.manifest.entries

    def entry(self, seq_id):
        return self._by_seq[seq_id]

    def entry_for_clip(self, clip_id):
        return self._by_clip[clip_id]

    def spec(self, seq_id):
        e = self._by_seq[seq_id]
        return ClipSpec.from_json(e.spec) if e.spec else None

    def clip(self, clip_id):
        if clip_id not in self._clips:
            if self.root is None:
                raise DatasetError(f"clip {clip_id} not loaded")
            self._clips[clip_id] = read_clip(self.root / self._by_clip[clip_id].clip_file, clip_id)
        return self._clips[clip_id]

    def sketch(self, seq_id):
        if seq_id not in self._sketches:
            if self.root is None:
                raise DatasetError(f"sketch {seq_id} not loaded")
            self._sketches[seq_id] = read_sketch(self.root, self._by_seq[seq_id])
        return self._sketches[seq_id]

    def alignment(self, seq_id):
        if seq_id not in self._alignments:
            if self.root is None:
                raise DatasetError(f"alignment {seq_id} not loaded")
            self._alignments[seq_id] = read_alignment(self.root / self._by_seq[seq_id].alignment_file)
        return self._alignments[seq_id]

    def split(self, name):
        return [e for e in self.manifest.entries if e.split == name]

    def digest(self):
        return manifest_digest(self.manifest)


def _assign_splits(n, config, seed):
    fr = np.array([config.split_train, config.split_val, config.split_test], dtype=np.float64)
    fr = fr / fr.sum()
    counts = np.floor(fr * n).astype(int)
    # largest remainders get the leftover clips
    rem = fr * n - counts
    for i in np.argsort(-rem, kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    labels = np.repeat(np.arange(3), counts)
    order = np.random.default_rng([seed, 0x5B1]).permutation(n)
    out = [None] * n
    for pos, i in enumerate(order):
        out[i] = SPLITS[labels[pos]]
    return out


def build_specs(config, seed):
    """All clip specs for a config: twin pairs first, then random clips."""
    twins = make_twins(config, seed)
    specs = [(t.spec, t.twin) for t in twins]
    for idx in range(len(specs), config.n_clips):
        specs.append((random_clip(config, seed, idx), None))
    return specs


def generate_dataset(config, seed, out_dir=None):
    """Render every clip/sketch of ``config``; write to ``out_dir`` when given.

    Deterministic in (config, seed): clip ``i`` uses an RNG derived from
    ``seed ^ hash(i)``.
    """
    config.validate()
    size = (config.frame_size, config.frame_size)
    specs = build_specs(config, seed)
    splits = _assign_splits(len(specs), config, seed)
    entries = []
    clips, sketches, aligns = {}, {}, {}
    for i, ((spec, twin), split) in enumerate(zip(specs, splits)):
        spec.validate(min_frames=2 * config.flow_length + 1)
        clip_seed = int(clip_rng(seed, i).integers(2 ** 31))
        clip = render_video(spec, seed=clip_seed, size=size)
        seq, ann = render_sketch_pages(spec, seed=clip_seed, size=size)
        ann.validate(clip.n_frames)
        entries.append(ManifestEntry(
            sequence_id=seq.id, clip_id=clip.id, split=split,
            sketch_file=f"sketches/{seq.id}.json", clip_file=f"clips/{clip.id}.bin",
            alignment_file=f"alignments/{seq.id}.json", spec=spec.to_json(), twin=twin,
        ))
        clips[clip.id] = clip
        sketches[seq.id] = seq
        aligns[seq.id] = ann
    manifest = DatasetManifest(entries=entries, seed=int(seed), config_hash=config.digest(),
                               config=config.canonical(), frame_size=size)
    manifest.validate()
    ds = Dataset(manifest)
    ds._clips, ds._sketches, ds._alignments = clips, sketches, aligns
    if out_dir is not None:
        save_dataset(ds, out_dir)
        ds.root = Path(out_dir)
    return ds


# ------------------------------------------------------------------ file I/O

def write_clip(path, clip):
    frames = np.ascontiguousarray(clip.frames, dtype="<f4")
    n, c, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(CLIP_MAGIC)
        f.write(struct.pack("<5I", n, c, h, w, clip.fps))
        f.write(frames.tobytes())


def read_clip(path, clip_id=None):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read clip file {path}: {exc}") from exc
    if blob[:8] != CLIP_MAGIC or len(blob) < 28:
        raise DatasetError(f"{path}: not a packed clip file")
    n, c, h, w, fps = struct.unpack("<5I", blob[8:28])
    expected = 28 + 4 * n * c * h * w
    if len(blob) != expected:
        raise DatasetError(f"{path}: truncated or oversized ({len(blob)} bytes, expected {expected})")
    frames = np.frombuffer(blob, dtype="<f4", offset=28).reshape(n, c, h, w).astype(np.float32)
    return VideoClip(id=clip_id or path.stem, frames=frames, fps=fps)


def write_pgm(path, raster):
    arr = np.asarray(raster)
    arr = arr[0] if arr.ndim == 3 else arr
    h, w = arr.shape
    data = np.round(arr * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def read_pgm(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read raster {path}: {exc}") from exc
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise DatasetError(f"{path}: not a binary PGM file")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError as exc:
        raise DatasetError(f"{path}: bad PGM header") from exc
    if maxval != 255 or len(parts[3]) != w * h:
        raise DatasetError(f"{path}: unexpected PGM payload")
    return (np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w) / 255.0)[None]


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def manifest_to_json(m):
    return {
        "format_version": FORMAT_VERSION,
        "seed": m.seed,
        "config_hash": m.config_hash,
        "config": m.config,
        "frame_size": list(m.frame_size),
        "entries": [asdict(e) for e in m.entries],
    }


def manifest_from_json(d):
    try:
        m = DatasetManifest(
            entries=[ManifestEntry(**e) for e in d["entries"]],
            seed=int(d["seed"]),
            config_hash=d["config_hash"],
            config=d["config"],
            frame_size=tuple(d.get("frame_size", (64, 64))),
        )
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"malformed manifest: {exc}") from exc
    m.validate()
    return m


def manifest_digest(m):
    return config_digest(manifest_to_json(m))


def save_dataset(ds, path):
    root = Path(path)
    try:
        for sub in ("clips", "sketches", "alignments"):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directory {root}: {exc}") from exc
    for e in ds.entries:
        write_clip(root / e.clip_file, ds.clip(e.clip_id))
        seq = ds.sketch(e.sequence_id)
        pages = []
        for p in seq.pages:
            stem = f"sketches/{seq.id}_page{p.page_index:02d}"
            write_pgm(root / f"{stem}_ap.pgm", p.appearance_raster)
            write_pgm(root / f"{stem}_mo.pgm", p.motion_raster)
            pages.append({
                "page_index": p.page_index,
                "is_static": p.is_static,
                "appearance_raster": f"{stem}_ap.pgm",
                "motion_raster": f"{stem}_mo.pgm",
                "strokes": [{"points": s.points.tolist(), "is_motion": bool(s.is_motion)} for s in p.strokes],
            })
        _dump_json(root / e.sketch_file, {"id": seq.id, "paired_clip_id": seq.paired_clip_id, "pages": pages})
        ann = ds.alignment(e.sequence_id)
        _dump_json(root / e.alignment_file, {str(k): list(v) for k, v in sorted(ann.intervals.items())})
    _dump_json(root / "manifest.json", manifest_to_json(ds.manifest))


def read_sketch(root, entry):
    d = _load_json(Path(root) / entry.sketch_file)
    pages = []
    for p in d["pages"]:
        pages.append(SketchPage(
            appearance_raster=read_pgm(Path(root) / p["appearance_raster"]),
            motion_raster=read_pgm(Path(root) / p["motion_raster"]),
            page_index=int(p["page_index"]),
            is_static=bool(p["is_static"]),
            strokes=[Stroke(np.array(s["points"]), bool(s["is_motion"])) for s in p["strokes"]],
        ))
    return SketchSequence(id=d["id"], pages=pages, paired_clip_id=d["paired_clip_id"])


def read_alignment(path):
    d = _load_json(path)
    return AlignmentAnnotation({int(k): tuple(int(x) for x in v) for k, v in d.items()})


def load_dataset(path, eager=False):
    """Open a dataset directory; clips and sketches load on first access."""
    root = Path(path)
    manifest = manifest_from_json(_load_json(root / "manifest.json"))
    for e in manifest.entries:
        for rel in (e.clip_file, e.sketch_file, e.alignment_file):
            if not (root / rel).is_file():
                raise DatasetError(f"manifest references missing file {root / rel}")
    ds = Dataset(manifest, root)
    if eager:
        for e in manifest.entries:
            ds.clip(e.clip_id)
            ds.sketch(e.sequence_id)
            ds.alignment(e.sequence_id)
    return ds


__all__ = ["GeneratorConfig", "Dataset", "DatasetError", "generate_dataset", "save_dataset",
           "load_dataset", "read_clip", "write_clip", "read_pgm", "write_pgm", "build_specs",
           "config_digest", "FPS"]
