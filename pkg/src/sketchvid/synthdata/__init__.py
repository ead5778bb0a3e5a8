"""Procedural sketch-sequence / video-clip pairs and their file formats."""
from .dataset import (
    Dataset,
    DatasetError,
    GeneratorConfig,
    build_specs,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .raster import rasterize_strokes
from .render import render_sketch_pages, render_video, trajectory
from .spec import (
    AlignmentAnnotation,
    AppearanceSpec,
    ClipSpec,
    DatasetManifest,
    MotionProgram,
    Segment,
    SketchPage,
    SketchSequence,
    SpecError,
    Stroke,
    VideoClip,
)
from .twins import make_twins

__all__ = [
    "AlignmentAnnotation", "AppearanceSpec", "ClipSpec", "Dataset", "DatasetError",
    "DatasetManifest", "GeneratorConfig", "MotionProgram", "Segment", "SketchPage",
    "SketchSequence", "SpecError", "Stroke", "VideoClip", "build_specs", "generate_dataset",
    "load_dataset", "make_twins", "rasterize_strokes", "render_sketch_pages", "render_video",
    "save_dataset", "trajectory",
]
