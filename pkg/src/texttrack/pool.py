"""Sliding-window pool of historical embeddings grouped into tracklets."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyPool, OrderError, ShapeError
from .geom import RotatedBox

TRACKLET_AGG_MODES = ("mean", "sum")


@dataclass
class PoolEntry:
    embedding: np.ndarray
    tracklet_id: int
    box: RotatedBox
    polygon: np.ndarray | None = None
    transcription: str | None = None


@dataclass
class TrackletInfo:
    tracklet_id: int
    birth_frame: int
    last_seen: int
    transcriptions: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class PoolIndex:
    """Row metadata for :meth:`GlobalPool.concat_embeddings`.

    ``frame_sizes`` lists the row count of every retained frame, including
    frames without detections, in pool order.
    """

    frame_indices: np.ndarray
    tracklet_ids: np.ndarray
    frames: tuple[int, ...]
    frame_sizes: tuple[int, ...]


class GlobalPool:
    """Queue of the last ``window`` frames of (embedding, tracklet, box) entries.

    The tracklet registry is append-only: eviction drops embeddings but the
    tracklet's metadata stays.
    """

    def __init__(self, window: int = 8):
        if window < 1:
            raise ValueError("window must be at least 1")
        self.window = window
        self._frames: deque[tuple[int, list[PoolEntry]]] = deque()
        self.registry: dict[int, TrackletInfo] = {}
        self._last_frame: int | None = None

    @property
    def last_frame(self) -> int | None:
        return self._last_frame

    @property
    def num_frames(self) -> int:
        return len(self._frames)

    @property
    def num_embeddings(self) -> int:
        return sum(len(entries) for _, entries in self._frames)

    def __len__(self) -> int:
        return self.num_embeddings

    def frames(self) -> list[tuple[int, list[PoolEntry]]]:
        return list(self._frames)

    def push_frame(self, frame_index: int, assigned: Iterable) -> "GlobalPool":
        """Append one frame, evicting the oldest when more than ``window`` are held.

        ``assigned`` holds :class:`PoolEntry` objects or
        ``(embedding, tracklet_id, box)`` tuples.
        """
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise OrderError(f"frame {frame_index} pushed after frame {self._last_frame}")
        entries = [a if isinstance(a, PoolEntry) else PoolEntry(np.asarray(a[0], dtype=float), int(a[1]), a[2])
                   for a in assigned]
        seen = set()
        for e in entries:
            if e.tracklet_id in seen:
                raise OrderError(f"tracklet {e.tracklet_id} appears twice in frame {frame_index}")
            seen.add(e.tracklet_id)
        width = self._width()
        for e in entries:
            if width is None:
                width = e.embedding.shape[-1]
            if e.embedding.shape != (width,):
                raise ShapeError(f"embedding shape {e.embedding.shape} does not match pool width {width}")

        self._frames.append((frame_index, entries))
        self._last_frame = frame_index
        while len(self._frames) > self.window:
            self._frames.popleft()
        for e in entries:
            info = self.registry.get(e.tracklet_id)
            if info is None:
                info = self.registry[e.tracklet_id] = TrackletInfo(e.tracklet_id, frame_index, frame_index)
            info.last_seen = frame_index
            if e.transcription is not None:
                info.transcriptions.append(e.transcription)
        return self

    def _width(self) -> int | None:
        for _, entries in self._frames:
            if entries:
                return entries[0].embedding.shape[-1]
        return None

    def concat_embeddings(self) -> tuple[np.ndarray, PoolIndex]:
        """Stack retained embeddings frame-major, detection order within a frame."""
        if self.num_embeddings == 0:
            raise EmptyPool("the pool holds no embeddings")
        rows, fidx, tids = [], [], []
        for frame_index, entries in self._frames:
            for e in entries:
                rows.append(e.embedding)
                fidx.append(frame_index)
                tids.append(e.tracklet_id)
        index = PoolIndex(
            frame_indices=np.asarray(fidx, dtype=np.int64),
            tracklet_ids=np.asarray(tids, dtype=np.int64),
            frames=tuple(f for f, _ in self._frames),
            frame_sizes=tuple(len(entries) for _, entries in self._frames),
        )
        return np.vstack(rows), index

    def tracklet_ids(self) -> list[int]:
        """Tracklets that still have embeddings in the window, ascending."""
        return sorted({e.tracklet_id for _, entries in self._frames for e in entries})

    def latest_entries(self) -> dict[int, PoolEntry]:
        """Most recent retained entry of every tracklet in the window."""
        out: dict[int, PoolEntry] = {}
        for _, entries in self._frames:
            for e in entries:
                out[e.tracklet_id] = e
        return out


def aggregate_tracklet_scores(assoc, index: PoolIndex, mode: str = "mean") -> tuple[np.ndarray, list[int]]:
    """Tracklet-level scores from per-embedding association probabilities.

    ``sum`` adds the probabilities of a tracklet's embeddings; ``mean``
    divides that sum by the tracklet's embedding count so scores stay in
    [0, 1]. Empty slots are not aggregated. Returns the ``N x K`` matrix
    and the tracklet id of each column.
    """
    probs = assoc.probs
    tids = np.asarray(index.tracklet_ids)
    if probs.shape[1] != tids.shape[0]:
        raise ShapeError(f"{probs.shape[1]} probability columns but {tids.shape[0]} indexed rows")
    if mode not in TRACKLET_AGG_MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    ids, inverse, counts = np.unique(tids, return_inverse=True, return_counts=True)
    onehot = np.zeros((tids.shape[0], ids.shape[0]))
    onehot[np.arange(tids.shape[0]), inverse] = 1.0
    scores = probs @ onehot
    if mode == "mean":
        scores = scores / counts[None, :]
    return scores, [int(i) for i in ids]
