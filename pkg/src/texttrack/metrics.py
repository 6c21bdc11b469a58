"""CLEAR-MOT and identity metrics for text tracking and spotting.

Objects are matched by polygon IoU (tracking) or by transcription
similarity (spotting, where IoU is also required unless
``transcription_only`` is set).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .assign import solve
from .errors import EmptyGroundTruth, ValidationError
from .geom import polygon_iou

MODES = ("tracking", "spotting")
MOSTLY_MATCHED = 0.8
MOSTLY_LOST = 0.2


@dataclass
class GTObject:
    track_id: int
    polygon: np.ndarray
    transcription: str = ""
    ignore: bool = False


@dataclass
class PredObject:
    track_id: int
    polygon: np.ndarray
    transcription: str = ""


GroundTruth = Mapping[int, Sequence[GTObject]]
Predictions = Mapping[int, Sequence[PredObject]]


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit costs, per code point."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def text_similarity(a: str | None, b: str | None) -> float:
    """``1 - edit_distance / max_len``; two empty strings are identical."""
    a = a or ""
    b = b or ""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


@dataclass(frozen=True)
class MatchCriteria:
    mode: str = "tracking"
    iou_threshold: float = 0.5
    max_edit_ratio: float = 0.0
    transcription_only: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def pair(self, g: GTObject, p: PredObject) -> tuple[float, float] | None:
        """``(weight, iou)`` for an admissible pair, else None."""
        spotting = self.mode == "spotting"
        iou = 0.0
        if not (spotting and self.transcription_only):
            iou = polygon_iou(g.polygon, p.polygon)
            if iou < self.iou_threshold:
                return None
        if spotting:
            sim = text_similarity(g.transcription, p.transcription)
            if sim < 1.0 - self.max_edit_ratio:
                return None
            if self.transcription_only:
                return sim, sim
        return iou, iou


@dataclass
class FrameMatch:
    matches: list[tuple[int, int, float]]  # (gt_id, pred_id, similarity)
    false_positives: list[int]
    misses: list[int]
    switches: list[int]  # gt ids whose predicted id changed


def match_frame(gt_frame: Sequence[GTObject], pred_frame: Sequence[PredObject],
                criteria: MatchCriteria, last: dict[int, int] | None = None) -> FrameMatch:
    """One CLEAR-MOT step.

    Correspondences in ``last`` (gt id -> pred id) are kept while still
    admissible; the remaining objects are matched by maximum total
    similarity. ``last`` is updated in place. Predictions overlapping an
    ignore-flagged region (IoU at the threshold) are neither matches nor
    false positives.
    """
    if last is None:
        last = {}
    gts = [g for g in gt_frame if not g.ignore]
    ignored = [g for g in gt_frame if g.ignore]
    gt_by_id = {g.track_id: g for g in gts}
    pred_by_id = {p.track_id: p for p in pred_frame}

    matches: list[tuple[int, int, float]] = []
    used_g, used_p = set(), set()
    for gid in sorted(gt_by_id):
        pid = last.get(gid)
        if pid is None or pid not in pred_by_id or pid in used_p:
            continue
        ok = criteria.pair(gt_by_id[gid], pred_by_id[pid])
        if ok is not None:
            matches.append((gid, pid, ok[1]))
            used_g.add(gid)
            used_p.add(pid)

    rest_g = [g for g in gts if g.track_id not in used_g]
    rest_p = [p for p in pred_frame if p.track_id not in used_p]
    if rest_g and rest_p:
        weights = np.zeros((len(rest_g), len(rest_p)))
        sims = np.zeros_like(weights)
        feasible = np.zeros(weights.shape, dtype=bool)
        for i, g in enumerate(rest_g):
            for j, p in enumerate(rest_p):
                ok = criteria.pair(g, p)
                if ok is not None:
                    weights[i, j], sims[i, j] = ok
                    feasible[i, j] = True
        # the offset makes cardinality dominate, similarity breaks ties
        big = float(min(weights.shape) + 1)
        result = solve(np.where(feasible, weights + big, 0.0), min_score=0.5 * big)
        for i, j in result.pairs:
            matches.append((rest_g[i].track_id, rest_p[j].track_id, float(sims[i, j])))
            used_g.add(rest_g[i].track_id)
            used_p.add(rest_p[j].track_id)

    switches = []
    for gid, pid, _ in matches:
        if gid in last and last[gid] != pid:
            switches.append(gid)
        last[gid] = pid

    fps = []
    for p in pred_frame:
        if p.track_id in used_p:
            continue
        if any(polygon_iou(g.polygon, p.polygon) >= criteria.iou_threshold for g in ignored):
            continue
        fps.append(p.track_id)
    misses = [g.track_id for g in gts if g.track_id not in used_g]
    matches.sort()
    return FrameMatch(matches, sorted(fps), sorted(misses), sorted(switches))


def match_frame_tracking(gt_frame, pred_frame, iou_threshold: float = 0.5, last=None) -> FrameMatch:
    return match_frame(gt_frame, pred_frame, MatchCriteria("tracking", iou_threshold), last)


def match_frame_spotting(gt_frame, pred_frame, max_edit_ratio: float = 0.0, last=None,
                         iou_threshold: float = 0.5, transcription_only: bool = False) -> FrameMatch:
    return match_frame(gt_frame, pred_frame,
                       MatchCriteria("spotting", iou_threshold, max_edit_ratio, transcription_only), last)


@dataclass
class MetricsReport:
    """Aggregated metrics. MM and ML are percentages of GT tracks."""

    mota: float
    motp: float
    idf1: float
    mm: float
    ml: float
    fp: int
    fn: int
    idsw: int
    gt: int
    matches: int
    idtp: int
    idfp: int
    idfn: int
    gt_tracks: int
    mm_tracks: int
    ml_tracks: int
    similarity_sum: float = 0.0
    per_video: dict[str, "MetricsReport"] = field(default_factory=dict)

    KEYS = ("mota", "motp", "idf1", "mm", "ml", "fp", "fn", "idsw", "gt", "matches",
            "idtp", "idfp", "idfn", "gt_tracks", "mm_tracks", "ml_tracks")

    def to_kv(self, prefix: str = "") -> list[str]:
        lines = [f"{prefix}{k}={_fmt(getattr(self, k))}" for k in self.KEYS]
        for vid in sorted(self.per_video):
            lines.extend(self.per_video[vid].to_kv(f"video.{vid}."))
        return lines

    def summary(self) -> str:
        return (f"MOTA {100 * self.mota:.1f}  MOTP {100 * self.motp:.1f}  IDF1 {100 * self.idf1:.1f}  "
                f"MM {self.mm:.1f}  ML {self.ml:.1f}  FP {self.fp}  FN {self.fn}  IDSW {self.idsw}  GT {self.gt}")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _from_counts(fp, fn, idsw, gt, matches, sim_sum, idtp, pred_total, gt_tracks, mm_tracks, ml_tracks,
                 per_video=None) -> MetricsReport:
    if gt == 0:
        raise EmptyGroundTruth("no ground-truth objects to evaluate against")
    idfn = gt - idtp
    idfp = pred_total - idtp
    return MetricsReport(
        mota=1.0 - (fn + fp + idsw) / gt,
        motp=sim_sum / matches if matches else 0.0,
        idf1=2.0 * idtp / (gt + pred_total) if gt + pred_total else 0.0,
        mm=100.0 * mm_tracks / gt_tracks if gt_tracks else 0.0,
        ml=100.0 * ml_tracks / gt_tracks if gt_tracks else 0.0,
        fp=fp, fn=fn, idsw=idsw, gt=gt, matches=matches,
        idtp=idtp, idfp=idfp, idfn=idfn,
        gt_tracks=gt_tracks, mm_tracks=mm_tracks, ml_tracks=ml_tracks,
        similarity_sum=sim_sum, per_video=per_video or {},
    )


def evaluate_video(gt: GroundTruth, preds: Predictions, mode: str = "tracking", iou_threshold: float = 0.5,
                   max_edit_ratio: float = 0.0, transcription_only: bool = False) -> MetricsReport:
    """Metrics for one video given frame-indexed GT and predictions."""
    counts = _video_counts(gt, preds, MatchCriteria(mode, iou_threshold, max_edit_ratio, transcription_only))
    return _from_counts(**counts)


def _video_counts(gt: GroundTruth, preds: Predictions, criteria: MatchCriteria) -> dict:
    frames = sorted(set(gt) | set(preds))
    last: dict[int, int] = {}
    fp = fn = idsw = matches = 0
    sim_sum = 0.0
    gt_len: dict[int, int] = {}
    gt_hit: dict[int, int] = {}
    pair_counts: dict[tuple[int, int], int] = {}
    pred_total = 0
    for f in frames:
        gframe = list(gt.get(f, ()))
        pframe = list(preds.get(f, ()))
        res = match_frame(gframe, pframe, criteria, last)
        fp += len(res.false_positives)
        fn += len(res.misses)
        idsw += len(res.switches)
        matches += len(res.matches)
        sim_sum += sum(s for _, _, s in res.matches)
        live = [g for g in gframe if not g.ignore]
        for g in live:
            gt_len[g.track_id] = gt_len.get(g.track_id, 0) + 1
        for gid, _, _ in res.matches:
            gt_hit[gid] = gt_hit.get(gid, 0) + 1
        # identity counts: every admissible pair, independent of CLEAR-MOT choices
        fp_ids = set(res.false_positives)
        matched_p = {pid for _, pid, _ in res.matches}
        counted = [p for p in pframe if p.track_id in fp_ids or p.track_id in matched_p]
        pred_total += len(counted)
        for g in live:
            for p in counted:
                if criteria.pair(g, p) is not None:
                    key = (g.track_id, p.track_id)
                    pair_counts[key] = pair_counts.get(key, 0) + 1

    idtp = _identity_tp(pair_counts)
    gt_total = sum(gt_len.values())
    mm_tracks = sum(1 for t, n in gt_len.items() if gt_hit.get(t, 0) >= MOSTLY_MATCHED * n)
    ml_tracks = sum(1 for t, n in gt_len.items() if gt_hit.get(t, 0) <= MOSTLY_LOST * n)
    return dict(fp=fp, fn=fn, idsw=idsw, gt=gt_total, matches=matches, sim_sum=sim_sum, idtp=idtp,
                pred_total=pred_total, gt_tracks=len(gt_len), mm_tracks=mm_tracks, ml_tracks=ml_tracks)


def _identity_tp(pair_counts: dict[tuple[int, int], int]) -> int:
    """Best one-to-one GT/prediction track pairing by co-detected frames."""
    if not pair_counts:
        return 0
    gids = sorted({g for g, _ in pair_counts})
    pids = sorted({p for _, p in pair_counts})
    gi = {g: i for i, g in enumerate(gids)}
    pi = {p: j for j, p in enumerate(pids)}
    mat = np.zeros((len(gids), len(pids)))
    for (g, p), n in pair_counts.items():
        mat[gi[g], pi[p]] = n
    result = solve(mat, min_score=1.0)
    return int(round(result.total))


def compute_report(gt: Mapping[str, GroundTruth], preds: Mapping[str, Predictions], mode: str = "tracking",
                   iou_threshold: float = 0.5, max_edit_ratio: float = 0.0,
                   transcription_only: bool = False) -> MetricsReport:
    """Metrics over several videos keyed by video id, with a per-video breakdown.

    Prediction videos absent from the ground truth raise
    :class:`ValidationError`; GT videos without predictions count as empty
    output.
    """
    extra = sorted(set(preds) - set(gt))
    if extra:
        raise ValidationError(f"predictions for videos missing from ground truth: {', '.join(extra)}")
    criteria = MatchCriteria(mode, iou_threshold, max_edit_ratio, transcription_only)
    per_video = {}
    totals: dict = {}
    for vid in sorted(gt):
        counts = _video_counts(gt[vid], preds.get(vid, {}), criteria)
        for k, v in counts.items():
            totals[k] = totals.get(k, 0) + v
        if counts["gt"]:
            per_video[vid] = _from_counts(**counts)
    if not totals:
        raise EmptyGroundTruth("no ground-truth videos")
    return _from_counts(**totals, per_video=per_video)
