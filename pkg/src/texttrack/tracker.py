"""Online inference: global association, positional scoring, max fusion.

Per frame the current detections are scored against every tracklet in the
global pool (appearance), and against each tracklet's latest retained box
(position). The elementwise maximum of the two is assigned with the
Hungarian solver; detections left unmatched start new tracklets.
"""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .assign import solve
from .assoc import AssocMatrix, AssocModel, associate, cosine_associations
from .errors import OrderError, ShapeError
from .geom import GAUSSIAN_VARIANTS, RotatedBox, as_polygon, iou_matrix, min_area_rotated_box, positional_matrix
from .pool import TRACKLET_AGG_MODES, GlobalPool, PoolEntry, aggregate_tracklet_scores

POSITIONAL_MODES = ("wasserstein", "iou", "none")


@dataclass
class Detection:
    polygon: np.ndarray
    embedding: np.ndarray | None = None
    transcription: str | None = None
    confidence: float = 1.0
    box: RotatedBox | None = None

    def __post_init__(self):
        self.polygon = as_polygon(self.polygon)
        if self.box is None:
            self.box = min_area_rotated_box(self.polygon)
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)


@dataclass
class FrameInput:
    frame_index: int
    detections: list[Detection] = field(default_factory=list)


@dataclass
class TrackEntry:
    frame_index: int
    polygon: np.ndarray
    transcription: str | None
    score: float


@dataclass
class TrackRecord:
    tracklet_id: int
    entries: list[TrackEntry] = field(default_factory=list)


@dataclass
class TrackerConfig:
    """Tracker knobs. ``positional`` swaps the position cue for ablations."""

    window: int = 8
    alpha: float = 1.0
    new_track_threshold: float = 0.3
    tracklet_agg: str = "mean"
    gaussian_variant: str = "squared"
    clamp_positional: bool = True
    positional: str = "wasserstein"
    min_confidence: float = 0.0
    fallback_temperature: float = 0.1
    fallback_empty_similarity: float = 0.5

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        for name in ("new_track_threshold", "min_confidence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tracklet_agg not in TRACKLET_AGG_MODES:
            raise ValueError(f"tracklet_agg must be one of {TRACKLET_AGG_MODES}")
        if self.gaussian_variant not in GAUSSIAN_VARIANTS:
            raise ValueError(f"gaussian_variant must be one of {GAUSSIAN_VARIANTS}")
        if self.positional not in POSITIONAL_MODES:
            raise ValueError(f"positional must be one of {POSITIONAL_MODES}")
        if self.fallback_temperature <= 0:
            raise ValueError("fallback_temperature must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class Tracker:
    """Tracking state for one video; feed frames in increasing order."""

    def __init__(self, config: TrackerConfig | None = None, model: AssocModel | None = None):
        self.config = config or TrackerConfig()
        self.model = model
        self.pool = GlobalPool(self.config.window)
        self.next_id = 0
        self.records: dict[int, TrackRecord] = {}
        self.assoc_ms: list[float] = []
        self._width: int | None = model.width if model is not None else None

    def _check_width(self, embeddings: np.ndarray) -> None:
        if self._width is None:
            self._width = embeddings.shape[1]
        if embeddings.shape[1] != self._width:
            raise ShapeError(f"embedding width {embeddings.shape[1]} != expected {self._width}")

    def _embeddings(self, dets: Sequence[Detection]) -> np.ndarray:
        width = self._width
        if width is None:
            width = next((d.embedding.shape[0] for d in dets if d.embedding is not None), 1)
        rows = [d.embedding if d.embedding is not None else np.zeros(width) for d in dets]
        for r in rows:
            if r.ndim != 1:
                raise ShapeError("embeddings must be vectors")
        if len({r.shape[0] for r in rows}) > 1:
            raise ShapeError("embeddings within a frame differ in width")
        return np.vstack(rows) if rows else np.zeros((0, width))

    def _appearance(self, queries: np.ndarray, pool: np.ndarray, sizes) -> AssocMatrix:
        cfg = self.config
        if self.model is None:
            return cosine_associations(queries, pool, sizes, cfg.fallback_temperature,
                                       cfg.fallback_empty_similarity)
        return associate(self.model, queries, pool, sizes)

    def _positional(self, dets: Sequence[Detection], latest: Sequence[PoolEntry]) -> np.ndarray:
        cfg = self.config
        if cfg.positional == "none":
            return np.zeros((len(dets), len(latest)))
        if cfg.positional == "iou":
            return iou_matrix([d.polygon for d in dets], [e.polygon for e in latest])
        w = positional_matrix([d.box for d in dets], [e.box for e in latest], cfg.alpha, cfg.gaussian_variant)
        if cfg.clamp_positional:
            w = np.clip(w, 0.0, 1.0)
        return w

    def fused_scores(self, dets: Sequence[Detection]) -> tuple[np.ndarray, list[int]]:
        """``max(P_tracklet, W)`` against the current pool, plus column ids."""
        queries = self._embeddings(dets)
        self._check_width(queries)
        pool, index = self.pool.concat_embeddings()
        assoc = self._appearance(queries, pool, index.frame_sizes)
        p_trk, tids = aggregate_tracklet_scores(assoc, index, self.config.tracklet_agg)
        latest = self.pool.latest_entries()
        w = self._positional(dets, [latest[t] for t in tids])
        return np.maximum(p_trk, w), tids

    def step(self, frame: FrameInput) -> list[tuple[int, int]]:
        """Assign tracklet ids to one frame's detections.

        Returns ``(detection_index, tracklet_id)`` for every kept detection.
        Skipped frame indices are pushed to the pool as empty frames so the
        window always spans wall-clock frames.
        """
        cfg = self.config
        last = self.pool.last_frame
        if last is not None:
            if frame.frame_index <= last:
                raise OrderError(f"frame {frame.frame_index} received after frame {last}")
            for missing in range(max(last + 1, frame.frame_index - cfg.window), frame.frame_index):
                self.pool.push_frame(missing, [])

        kept = [(i, d) for i, d in enumerate(frame.detections) if d.confidence >= cfg.min_confidence]
        dets = [d for _, d in kept]
        ids: list[int | None] = [None] * len(dets)
        scores = [float(d.confidence) for d in dets]
        if dets:
            queries = self._embeddings(dets)
            self._check_width(queries)
        if dets and self.pool.num_embeddings:
            t0 = time.perf_counter()
            pool, index = self.pool.concat_embeddings()
            assoc = self._appearance(queries, pool, index.frame_sizes)
            p_trk, tids = aggregate_tracklet_scores(assoc, index, cfg.tracklet_agg)
            t1 = time.perf_counter()
            latest = self.pool.latest_entries()
            w = self._positional(dets, [latest[t] for t in tids])
            fused = np.maximum(p_trk, w)
            t2 = time.perf_counter()
            result = solve(fused, min_score=cfg.new_track_threshold)
            t3 = time.perf_counter()
            self.assoc_ms.append(1e3 * ((t1 - t0) + (t3 - t2)))
            for r, c in result.pairs:
                ids[r] = tids[c]
        for r in range(len(dets)):
            if ids[r] is None:
                ids[r] = self.next_id
                self.next_id += 1

        entries = [
            PoolEntry(queries[r], ids[r], d.box, d.polygon, d.transcription) for r, d in enumerate(dets)
        ]
        self.pool.push_frame(frame.frame_index, entries)
        for r, d in enumerate(dets):
            rec = self.records.setdefault(ids[r], TrackRecord(ids[r]))
            rec.entries.append(TrackEntry(frame.frame_index, d.polygon, d.transcription, scores[r]))
        return [(kept[r][0], ids[r]) for r in range(len(dets))]

    def result(self) -> list[TrackRecord]:
        return [self.records[k] for k in sorted(self.records)]


def run_video(config: TrackerConfig | None, frames: Iterable[FrameInput],
              model: AssocModel | None = None) -> list[TrackRecord]:
    tracker = Tracker(config, model)
    for frame in frames:
        tracker.step(frame)
    return tracker.result()


def transcription_vote(record: TrackRecord) -> str:
    """Majority transcription of a trajectory.

    Ties go to the candidate seen in the highest-confidence frame.
    Missing transcriptions do not vote; an all-missing record gives "".
    """
    votes = Counter(e.transcription for e in record.entries if e.transcription is not None)
    if not votes:
        return ""
    top = max(votes.values())
    tied = {t for t, n in votes.items() if n == top}
    best = None
    for e in record.entries:
        if e.transcription in tied and (best is None or e.score > best.score):
            best = e
    return best.transcription
