"""In-memory view of a dataset split prepared for training and retrieval."""
from dataclasses import dataclass

import numpy as np

from ..embednet import flow_input, sketch_input
from ..optflow import FlowCache


@dataclass(frozen=True)
class PageRef:
    sequence_id: str
    page_index: int
    clip_id: str
    interval: tuple  # inclusive, 1-based
    n_pages: int
    is_static: bool


class StreamData:
    """Frames, flows and sketch rasters of the clips in ``split``.

    Flows come from ``flow_cache`` (a :class:`FlowCache`), computed on first
    use. Inputs are returned already shaped for the networks.
    """

    def __init__(self, dataset, split=None, flow_cache=None, flow_length=5, max_flow=8.0):
        self.dataset = dataset
        self.flow_length = flow_length
        self.max_flow = max_flow
        self.cache = flow_cache if flow_cache is not None else FlowCache()
        entries = dataset.entries if split is None else dataset.split(split)
        if not entries:
            raise ValueError(f"split {split!r} has no clips")
        self.clip_ids = sorted(e.clip_id for e in entries)
        self.frames = {}
        self.flows = {}
        self.pages = []
        self.sketch_ap = {}
        self.sketch_mo = {}
        self.truth = {}
        for e in sorted(entries, key=lambda e: e.sequence_id):
            clip = dataset.clip(e.clip_id)
            if clip.n_frames < 2 * flow_length + 1:
                raise ValueError(f"clip {clip.id} has {clip.n_frames} frames, fewer than 2L+1")
            self.frames[clip.id] = clip.frames
            self.flows[clip.id] = self.cache.flows(clip)
            seq = dataset.sketch(e.sequence_id)
            ann = dataset.alignment(e.sequence_id)
            self.truth[seq.id] = clip.id
            for page in seq.pages:
                ref = PageRef(seq.id, page.page_index, clip.id, tuple(ann.intervals[page.page_index]),
                              len(seq.pages), page.is_static)
                self.pages.append(ref)
                self.sketch_ap[(seq.id, page.page_index)] = sketch_input(page.appearance_raster, ink_dark=True)
                self.sketch_mo[(seq.id, page.page_index)] = sketch_input(page.motion_raster)
        self.sequence_ids = sorted(self.truth)

    def n_frames(self, clip_id):
        return int(self.frames[clip_id].shape[0])

    def last_start(self, clip_id):
        """Latest 1-based frame at which a full flow stack begins."""
        return self.n_frames(clip_id) - self.flow_length

    def sketch(self, stream, page_key):
        return (self.sketch_ap if stream == "appearance" else self.sketch_mo)[page_key]

    def frame(self, clip_id, k):
        return self.frames[clip_id][k - 1]

    def stack(self, clip_id, k):
        """Normalised flow stack at position ``k``; late positions reuse the last one."""
        s = min(k, self.last_start(clip_id))
        f = self.flows[clip_id][s - 1:s - 1 + self.flow_length]
        return flow_input(f.reshape((2 * self.flow_length,) + f.shape[-2:]), self.max_flow)

    def video_atom(self, stream, clip_id, k):
        return self.frame(clip_id, k) if stream == "appearance" else self.stack(clip_id, k)

    def pages_of(self, seq_id):
        return [p for p in self.pages if p.sequence_id == seq_id]
