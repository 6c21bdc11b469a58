"""Synthetic text-tracking scenes.

A scenario lists text instances with their motion, the camera motion and
the detector noise. :func:`generate` turns it into per-frame detections
(polygon, embedding, transcription) plus ground truth. Embeddings are
unit-norm per-track cluster centers with Gaussian noise; texts in the
same identical-text group share one center, mimicking semantic
embeddings of equal words.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64) with a
fixed draw order, so a scenario always yields the same clip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpecError
from .geom import RotatedBox, polygon_iou
from .metrics import GTObject
from .tracker import Detection, FrameInput

RNG_ALGORITHM = "numpy-PCG64"

PRESETS = ("fig3_case2", "fig3_case3", "occlusion_gap", "identical_texts", "crowd")


@dataclass
class TextSpec:
    """One text instance.

    ``center`` is the image position at the birth frame; per frame the text
    moves by ``velocity`` plus the camera pan. ``death`` is exclusive and
    ``occlusions`` are ``[start, end)`` frame ranges where it is hidden.
    """

    text: str
    center: tuple[float, float]
    size: tuple[float, float]
    angle: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    birth: int = 0
    death: int | None = None
    occlusions: list[tuple[int, int]] = field(default_factory=list)
    group: int | None = None

    def alive(self, t: int, num_frames: int) -> bool:
        end = num_frames if self.death is None else min(self.death, num_frames)
        return self.birth <= t < end

    def occluded(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.occlusions)


@dataclass
class NoiseSpec:
    center_sigma: float = 0.0
    size_sigma: float = 0.0  # relative
    angle_sigma: float = 0.0
    embedding_sigma: float = 0.0
    fp_rate: float = 0.0  # expected false positives per frame
    miss_rate: float = 0.0


@dataclass
class Scenario:
    name: str = "custom"
    seed: int = 0
    num_frames: int = 20
    canvas: tuple[float, float] = (1280.0, 720.0)
    texts: list[TextSpec] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    camera_pan: tuple[float, float] = (0.0, 0.0)
    camera_jitter: float = 0.0
    embedding_dim: int = 64


@dataclass
class Clip:
    """Frames, ground truth and the true identity of every detection (-1 = false positive)."""

    scenario: Scenario
    frames: list[FrameInput]
    gt: dict[int, list[GTObject]]
    labels: list[list[int]]
    video_id: str = "synthetic"


def _cluster_centers(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    raw = rng.standard_normal((dim, max(count, 1)))
    if count <= dim:
        q, r = np.linalg.qr(raw)
        centers = (q * np.sign(np.diag(r))).T[:count]
    else:
        centers = raw.T
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def _true_box(spec: TextSpec, t: int, scen: Scenario, jitter: np.ndarray) -> RotatedBox:
    k = t - spec.birth
    vx = spec.velocity[0] + scen.camera_pan[0]
    vy = spec.velocity[1] + scen.camera_pan[1]
    return RotatedBox(spec.center[0] + vx * k + jitter[t, 0], spec.center[1] + vy * k + jitter[t, 1],
                      spec.size[0], spec.size[1], spec.angle)


def _inside(poly: np.ndarray, canvas) -> bool:
    return bool(poly[:, 0].min() >= 0 and poly[:, 1].min() >= 0
                and poly[:, 0].max() <= canvas[0] and poly[:, 1].max() <= canvas[1])


def generate(scenario: Scenario, video_id: str | None = None) -> Clip:
    """Deterministic clip for a scenario; raises :class:`SpecError` if infeasible."""
    scen = scenario
    W, H = scen.canvas
    if scen.num_frames < 0 or scen.embedding_dim < 1:
        raise SpecError("num_frames must be >= 0 and embedding_dim >= 1")
    for spec in scen.texts:
        w, h = spec.size
        if w <= 0 or h <= 0:
            raise SpecError(f"text {spec.text!r} has non-positive size")
        if math.hypot(w, h) > math.hypot(W, H) or (w > W and h > H) or min(w, h) > min(W, H):
            raise SpecError(f"text {spec.text!r} ({w}x{h}) does not fit the {W}x{H} canvas")
    rng = np.random.default_rng(scen.seed)
    noise = scen.noise

    # one center per group, one per ungrouped text
    keys = []
    for i, spec in enumerate(scen.texts):
        key = ("g", spec.group) if spec.group is not None else ("t", i)
        if key not in keys:
            keys.append(key)
    centers = _cluster_centers(rng, len(keys), scen.embedding_dim)
    text_center = [centers[keys.index(("g", s.group) if s.group is not None else ("t", i))]
                   for i, s in enumerate(scen.texts)]
    jitter = rng.normal(0.0, scen.camera_jitter, size=(scen.num_frames, 2)) if scen.camera_jitter > 0 \
        else np.zeros((scen.num_frames, 2))

    frames, labels = [], []
    gt: dict[int, list[GTObject]] = {}
    for t in range(scen.num_frames):
        dets: list[Detection] = []
        dlabels: list[int] = []
        gt_t: list[GTObject] = []
        for i, spec in enumerate(scen.texts):
            if not spec.alive(t, scen.num_frames) or spec.occluded(t):
                continue
            box = _true_box(spec, t, scen, jitter)
            poly = box.corners()
            if not _inside(poly, scen.canvas):
                raise SpecError(f"text {spec.text!r} leaves the canvas at frame {t}")
            gt_t.append(GTObject(i, poly, spec.text))
            if noise.miss_rate > 0 and rng.random() < noise.miss_rate:
                continue
            e = rng.standard_normal(5 + scen.embedding_dim)
            noisy = RotatedBox(
                box.cx + noise.center_sigma * e[0],
                box.cy + noise.center_sigma * e[1],
                box.w * max(1.0 + noise.size_sigma * e[2], 0.1),
                box.h * max(1.0 + noise.size_sigma * e[3], 0.1),
                box.theta + noise.angle_sigma * e[4],
            )
            emb = text_center[i] + noise.embedding_sigma * e[5:]
            dets.append(Detection(noisy.corners(), emb, spec.text, 0.9, noisy))
            dlabels.append(i)
        n_fp = rng.poisson(noise.fp_rate) if noise.fp_rate > 0 else 0
        for _ in range(n_fp):
            u = rng.random(5)
            w, h = 40 + 160 * u[0], 12 + 28 * u[1]
            box = RotatedBox(w / 2 + (W - w) * u[2], h / 2 + (H - h) * u[3], w, h, 0.0)
            emb = rng.standard_normal(scen.embedding_dim)
            emb /= np.linalg.norm(emb)
            dets.append(Detection(box.corners(), emb, "###", 0.5, box))
            dlabels.append(-1)
        order = rng.permutation(len(dets))
        frames.append(FrameInput(t, [dets[k] for k in order]))
        labels.append([dlabels[k] for k in order])
        if gt_t:
            gt[t] = gt_t
    return Clip(scen, frames, gt, labels, video_id or scen.name)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _fig3_case2(seed: int) -> Scenario:
    # A column of equal-word banners with alternating long/short shapes.
    # The camera pans up by the column pitch each frame, so every banner
    # lands on the previous spot of the banner above it (IoU lures a wrong
    # match) while its own previous box no longer overlaps.
    pitch = 35.0
    texts = []
    for k in range(4):
        size = (400.0, 30.0) if k % 2 == 0 else (150.0, 30.0)
        texts.append(TextSpec("SALE", (640.0, 420.0 + pitch * k), size, group=0))
    texts.append(TextSpec("PHARMACY", (200.0, 600.0), (220.0, 40.0)))
    return Scenario("fig3_case2", seed, 10, (1280.0, 720.0), texts,
                    NoiseSpec(center_sigma=0.5, size_sigma=0.005, angle_sigma=0.002, embedding_sigma=0.05),
                    camera_pan=(0.0, -pitch))


def _fig3_case3(seed: int) -> Scenario:
    # Two cars with the same plate word move fast across their short side;
    # consecutive boxes of each car never overlap.
    texts = [
        TextSpec("TAXI", (300.0, 100.0), (200.0, 28.0), velocity=(0.0, 32.0), group=0),
        TextSpec("TAXI", (800.0, 100.0), (200.0, 28.0), velocity=(0.0, 32.0), group=0),
        TextSpec("HOTEL", (1100.0, 600.0), (180.0, 36.0)),
    ]
    scen = Scenario("fig3_case3", seed, 16, (1280.0, 720.0), texts,
                    NoiseSpec(center_sigma=0.5, size_sigma=0.005, angle_sigma=0.002, embedding_sigma=0.05))
    _check_disjoint_steps(scen, [0, 1])
    return scen


def _check_disjoint_steps(scen: Scenario, moving: list[int]) -> None:
    still = np.zeros((scen.num_frames, 2))
    for i in moving:
        spec = scen.texts[i]
        for t in range(spec.birth + 1, scen.num_frames):
            if spec.alive(t, scen.num_frames):
                a = _true_box(spec, t - 1, scen, still).corners()
                b = _true_box(spec, t, scen, still).corners()
                if polygon_iou(a, b) != 0.0:
                    raise SpecError(f"{scen.name}: text {i} overlaps itself between frames {t - 1} and {t}")


def _occlusion_gap(seed: int) -> Scenario:
    texts = [
        TextSpec("COFFEE", (300.0, 200.0), (180.0, 40.0), velocity=(2.0, 0.0), occlusions=[(8, 11)]),
        TextSpec("BOOKS", (700.0, 300.0), (150.0, 36.0), velocity=(-1.5, 0.5)),
        TextSpec("BANK", (500.0, 550.0), (120.0, 40.0), angle=0.1),
    ]
    return Scenario("occlusion_gap", seed, 20, (1280.0, 720.0), texts,
                    NoiseSpec(center_sigma=0.5, size_sigma=0.01, angle_sigma=0.005, embedding_sigma=0.05))


def _identical_texts(seed: int) -> Scenario:
    texts = [
        TextSpec("STOP", (200.0, 300.0), (120.0, 40.0), velocity=(24.0, 2.0), group=0),
        TextSpec("STOP", (1000.0, 340.0), (120.0, 40.0), velocity=(-24.0, -2.0), group=0),
    ]
    return Scenario("identical_texts", seed, 30, (1280.0, 720.0), texts,
                    NoiseSpec(center_sigma=0.5, size_sigma=0.01, angle_sigma=0.005, embedding_sigma=0.05))


def _crowd(seed: int, count: int = 20) -> Scenario:
    rng = np.random.default_rng(seed + 7919)
    cols = 4
    texts = []
    for k in range(count):
        r, c = divmod(k, cols)
        w = float(rng.uniform(80, 200))
        h = float(rng.uniform(20, 36))
        texts.append(TextSpec(f"T{k:02d}", (170.0 + 310.0 * c, 60.0 + 60.0 * (r % 10) + 600.0 * (r // 10)),
                              (w, h), angle=float(rng.uniform(-0.1, 0.1)),
                              velocity=(float(rng.uniform(-1, 1)), float(rng.uniform(-0.5, 0.5)))))
    rows = math.ceil(count / cols)
    height = max(720.0, 60.0 * min(rows, 10) + 600.0 * ((rows - 1) // 10) + 60.0)
    return Scenario("crowd", seed, 30, (1280.0, height), texts,
                    NoiseSpec(center_sigma=0.5, size_sigma=0.01, angle_sigma=0.005, embedding_sigma=0.05))


def preset(name: str, seed: int = 0, **overrides) -> Scenario:
    """Canonical scenario by name; keyword overrides replace Scenario fields."""
    builders = {
        "fig3_case2": _fig3_case2,
        "fig3_case3": _fig3_case3,
        "occlusion_gap": _occlusion_gap,
        "identical_texts": _identical_texts,
        "crowd": _crowd,
    }
    if name not in builders:
        raise SpecError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    scen = builders[name](seed)
    return replace(scen, **overrides) if overrides else scen


def crowd(count: int = 20, seed: int = 0, embedding_dim: int = 64, num_frames: int = 30) -> Scenario:
    return replace(_crowd(seed, count), embedding_dim=embedding_dim, num_frames=num_frames)


def separable_scenario(tracks: int = 3, frames: int = 8, embedding_dim: int = 16,
                       embedding_sigma: float = 0.1, seed: int = 0) -> Scenario:
    """Static, well-separated tracks for associator training checks."""
    texts = [TextSpec(f"W{k}", (200.0 + 300.0 * (k % 4), 60.0 + 80.0 * (k // 4)), (160.0, 40.0))
             for k in range(tracks)]
    return Scenario("separable", seed, frames, (1280.0, 720.0), texts,
                    NoiseSpec(embedding_sigma=embedding_sigma), embedding_dim=embedding_dim)


def consecutive_ious(clip: Clip, track_id: int) -> list[float]:
    """GT polygon IoU between consecutive frames where the track is present."""
    prev = None
    out = []
    for t in sorted(clip.gt):
        obj = next((g for g in clip.gt[t] if g.track_id == track_id), None)
        if obj is None:
            prev = None
            continue
        if prev is not None:
            out.append(polygon_iou(prev, obj.polygon))
        prev = obj.polygon
    return out
