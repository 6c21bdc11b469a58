"""Line-delimited JSON files for detections, ground truth and tracks, plus
the key=value tracker config.

Each line is one JSON object. Floats go through ``json`` which writes the
shortest repr, so values round-trip exactly. Parse problems raise
:class:`ParseError` carrying the file name and 1-based line number.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import MISSING, asdict, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DegenerateGeometry, SpecError, ValidationError
from .metrics import GTObject, PredObject
from .synth import Clip, NoiseSpec, Scenario, TextSpec
from .tracker import Detection, FrameInput, TrackerConfig, TrackRecord, transcription_vote

CONFIG_ENV = "TEXTTRACK_CONFIG"


class ParseError(ValidationError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def _poly_list(poly: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(poly, dtype=float).reshape(-1)]


def _records(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, n, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(path, n, "expected a JSON object")
            yield n, rec


def _field(path, n, rec, key, kind, optional=False, default=None):
    if key not in rec or rec[key] is None:
        if optional:
            return default
        raise ParseError(path, n, f"missing field {key!r}")
    value = rec[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ParseError(path, n, f"{key!r} must be a non-negative integer")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ParseError(path, n, f"{key!r} must be a finite number")
        value = float(value)
    elif kind is str:
        if not isinstance(value, str):
            raise ParseError(path, n, f"{key!r} must be a string")
    elif kind is bool:
        if not isinstance(value, bool):
            raise ParseError(path, n, f"{key!r} must be true or false")
    elif kind is list:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in value):
            raise ParseError(path, n, f"{key!r} must be a list of finite numbers")
        value = [float(v) for v in value]
    return value


def _polygon(path, n, rec) -> np.ndarray:
    pts = _field(path, n, rec, "polygon", list)
    if len(pts) != 8:
        raise ParseError(path, n, f"polygon needs 8 numbers, got {len(pts)}")
    return np.asarray(pts, dtype=float).reshape(4, 2)


# ---------------------------------------------------------------------------
# detections
# ---------------------------------------------------------------------------

def write_detections(path, videos: dict[str, list[FrameInput]]) -> None:
    lines = []
    for vid in sorted(videos):
        for frame in videos[vid]:
            for k, det in enumerate(frame.detections):
                rec = {"video_id": vid, "frame_index": frame.frame_index, "detection_index": k,
                       "polygon": _poly_list(det.polygon), "confidence": float(det.confidence)}
                if det.embedding is not None:
                    rec["embedding"] = [float(v) for v in det.embedding]
                if det.transcription is not None:
                    rec["transcription"] = det.transcription
                lines.append(_dumps(rec))
    _write_lines(path, lines)


def read_detections(path) -> dict[str, list[FrameInput]]:
    """Frames per video; frame indices must not decrease and detection
    indices must count 0, 1, ... within a frame."""
    videos: dict[str, list[FrameInput]] = {}
    width = None
    for n, rec in _records(path):
        vid = _field(path, n, rec, "video_id", str)
        fidx = _field(path, n, rec, "frame_index", int)
        didx = _field(path, n, rec, "detection_index", int)
        conf = _field(path, n, rec, "confidence", float, optional=True, default=1.0)
        emb = _field(path, n, rec, "embedding", list, optional=True)
        text = _field(path, n, rec, "transcription", str, optional=True)
        frames = videos.setdefault(vid, [])
        if frames and fidx < frames[-1].frame_index:
            raise ParseError(path, n, f"frame {fidx} of video {vid!r} comes after frame {frames[-1].frame_index}")
        if not frames or frames[-1].frame_index != fidx:
            frames.append(FrameInput(fidx, []))
        if didx != len(frames[-1].detections):
            raise ParseError(path, n, f"expected detection_index {len(frames[-1].detections)}, got {didx}")
        if emb is not None:
            if width is None:
                width = len(emb)
            if len(emb) != width or width == 0:
                raise ParseError(path, n, f"embedding has {len(emb)} values, expected {width}")
        try:
            det = Detection(_polygon(path, n, rec), None if emb is None else np.asarray(emb), text, conf)
        except (DegenerateGeometry, ValueError) as exc:
            raise ParseError(path, n, str(exc)) from None
        frames[-1].detections.append(det)
    return videos


# ---------------------------------------------------------------------------
# ground truth and tracks
# ---------------------------------------------------------------------------

def write_ground_truth(path, videos: dict[str, dict[int, list[GTObject]]]) -> None:
    lines = []
    for vid in sorted(videos):
        for t in sorted(videos[vid]):
            for g in sorted(videos[vid][t], key=lambda g: g.track_id):
                lines.append(_dumps({"video_id": vid, "frame_index": t, "track_id": g.track_id,
                                     "polygon": _poly_list(g.polygon), "transcription": g.transcription,
                                     "ignore": bool(g.ignore)}))
    _write_lines(path, lines)


def write_tracks(path, videos: dict[str, list[TrackRecord]]) -> None:
    """One line per (frame, track); every line carries the trajectory's voted transcription."""
    lines = []
    for vid in sorted(videos):
        rows = []
        for rec in videos[vid]:
            text = transcription_vote(rec)
            for e in rec.entries:
                rows.append((e.frame_index, rec.tracklet_id, _dumps({
                    "video_id": vid, "frame_index": e.frame_index, "track_id": rec.tracklet_id,
                    "polygon": _poly_list(e.polygon), "transcription": text, "score": float(e.score)})))
        lines.extend(r[2] for r in sorted(rows, key=lambda r: (r[0], r[1])))
    _write_lines(path, lines)


def _read_tracklike(path, kind: str):
    videos: dict[str, dict[int, list]] = {}
    seen = set()
    for n, rec in _records(path):
        vid = _field(path, n, rec, "video_id", str)
        fidx = _field(path, n, rec, "frame_index", int)
        tid = _field(path, n, rec, "track_id", int)
        text = _field(path, n, rec, "transcription", str, optional=True, default="")
        key = (vid, fidx, tid)
        if key in seen:
            raise ParseError(path, n, f"duplicate (video, frame, track) {key}")
        seen.add(key)
        try:
            poly = _polygon(path, n, rec)
            if kind == "gt":
                obj = GTObject(tid, poly, text, _field(path, n, rec, "ignore", bool, optional=True, default=False))
            else:
                _field(path, n, rec, "score", float, optional=True)
                obj = PredObject(tid, poly, text)
        except (DegenerateGeometry, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(path, n, str(exc)) from None
        videos.setdefault(vid, {}).setdefault(fidx, []).append(obj)
    return videos


def read_ground_truth(path) -> dict[str, dict[int, list[GTObject]]]:
    return _read_tracklike(path, "gt")


def read_tracks(path) -> dict[str, dict[int, list[PredObject]]]:
    return _read_tracklike(path, "pred")


def _write_lines(path, lines: list[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_clip(clip: Clip, detections_path, gt_path) -> None:
    write_detections(detections_path, {clip.video_id: clip.frames})
    write_ground_truth(gt_path, {clip.video_id: clip.gt})


# ---------------------------------------------------------------------------
# tracker config
# ---------------------------------------------------------------------------

def _coerce(name: str, kind, raw: str, where: str):
    kind = kind if isinstance(kind, type) else {"int": int, "float": float, "bool": bool, "str": str}[kind]
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        return kind(raw)
    except ValueError:
        raise ValidationError(f"{where}: {name} expects {kind.__name__}, got {raw!r}") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into TrackerConfig fields."""
    types = {f.name: f.type for f in fields(TrackerConfig)}
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, n, "expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ParseError(path, n, f"unknown config key {key!r}; valid keys: {', '.join(types)}")
        out[key] = _coerce(key, types[key], value, f"{path}:{n}")
    return out


def write_config(path, config: TrackerConfig) -> None:
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in asdict(config).items()]
    _write_lines(path, lines)


def load_config(path=None, overrides: dict | None = None) -> TrackerConfig:
    """Config from ``path`` (or ``$TEXTTRACK_CONFIG``) with overrides on top."""
    values = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        values.update(read_config(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return TrackerConfig(**values)
    except ValueError as exc:
        raise ValidationError(f"invalid tracker config: {exc}") from None


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def scenario_to_dict(scen: Scenario) -> dict:
    return asdict(scen)


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from plain JSON data; unknown keys raise SpecError."""
    def build(cls, raw):
        if not isinstance(raw, dict):
            raise SpecError(f"{cls.__name__} must be an object")
        names = {f.name: f for f in fields(cls)}
        extra = set(raw) - set(names)
        if extra:
            raise SpecError(f"unknown {cls.__name__} keys: {', '.join(sorted(extra))}")
        missing = [n for n, f in names.items() if n not in raw and f.default is MISSING
                   and f.default_factory is MISSING]
        if missing:
            raise SpecError(f"{cls.__name__} is missing {', '.join(missing)}")
        return raw

    raw = dict(build(Scenario, data))
    if "texts" in raw:
        texts = []
        for t in raw["texts"]:
            t = dict(build(TextSpec, t))
            for key in ("center", "size", "velocity"):
                if key in t:
                    t[key] = tuple(float(v) for v in t[key])
            if "occlusions" in t:
                t["occlusions"] = [tuple(int(v) for v in iv) for iv in t["occlusions"]]
            texts.append(TextSpec(**t))
        raw["texts"] = texts
    if "noise" in raw:
        raw["noise"] = NoiseSpec(**build(NoiseSpec, raw["noise"]))
    for key in ("canvas", "camera_pan"):
        if key in raw:
            raw[key] = tuple(float(v) for v in raw[key])
    try:
        return Scenario(**raw)
    except TypeError as exc:
        raise SpecError(str(exc)) from None


def read_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return scenario_from_dict(data)
