import numpy as np
import pytest

from texttrack.assoc import AssocModel
from texttrack.errors import OrderError, ShapeError
from texttrack.geom import RotatedBox
from texttrack.metrics import PredObject, evaluate_video
from texttrack.synth import NoiseSpec, Scenario, TextSpec, generate, preset
from texttrack.tracker import (Detection, FrameInput, TrackEntry, Tracker, TrackerConfig, TrackRecord,
                               run_video, transcription_vote)


def det(cx, cy, emb, w=60, h=20, text=None, conf=1.0):
    return Detection(RotatedBox(cx, cy, w, h).corners(), np.asarray(emb, dtype=float), text, conf)


def predictions(records):
    out = {}
    for r in records:
        for e in r.entries:
            out.setdefault(e.frame_index, []).append(PredObject(r.tracklet_id, e.polygon, e.transcription or ""))
    return out


def test_first_frame_births_every_detection():
    tr = Tracker()
    out = tr.step(FrameInput(0, [det(50, 50, [1, 0]), det(200, 50, [0, 1])]))
    assert out == [(0, 0), (1, 1)]


def test_static_tracks_keep_ids():
    tr = Tracker()
    for t in range(5):
        # reversed order every other frame
        dets = [det(50, 50, [1, 0, 0]), det(300, 80, [0, 1, 0])]
        if t % 2:
            dets = dets[::-1]
        out = dict(tr.step(FrameInput(t, dets)))
        if t % 2:
            assert out == {0: 1, 1: 0}
        else:
            assert out == {0: 0, 1: 1}
    assert len(tr.result()) == 2


def test_low_scores_start_new_tracks():
    cfg = TrackerConfig(positional="none")
    tr = Tracker(cfg)
    tr.step(FrameInput(0, [det(50, 50, [1, 0])]))
    out = tr.step(FrameInput(1, [det(500, 300, [0, 1])]))
    assert out == [(0, 1)]


def test_frame_order_enforced():
    tr = Tracker()
    tr.step(FrameInput(3, [det(50, 50, [1, 0])]))
    with pytest.raises(OrderError):
        tr.step(FrameInput(3, []))


def test_width_mismatch():
    tr = Tracker()
    tr.step(FrameInput(0, [det(50, 50, [1, 0])]))
    with pytest.raises(ShapeError):
        tr.step(FrameInput(1, [det(50, 50, [1, 0, 0])]))


def test_confidence_floor_drops_detections():
    tr = Tracker(TrackerConfig(min_confidence=0.5))
    out = tr.step(FrameInput(0, [det(50, 50, [1, 0], conf=0.2), det(90, 90, [0, 1], conf=0.9)]))
    assert out == [(1, 0)]


def test_gap_counts_against_window():
    # a track unseen for longer than the window is not resumed
    cfg = TrackerConfig(window=2)
    tr = Tracker(cfg)
    tr.step(FrameInput(0, [det(50, 50, [1, 0])]))
    out = tr.step(FrameInput(5, [det(50, 50, [1, 0])]))
    assert out == [(0, 1)]
    tr = Tracker(TrackerConfig(window=8))
    tr.step(FrameInput(0, [det(50, 50, [1, 0])]))
    assert tr.step(FrameInput(5, [det(50, 50, [1, 0])])) == [(0, 0)]


def test_fused_scores_are_max_of_cues():
    tr = Tracker()
    tr.step(FrameInput(0, [det(50, 50, [1, 0])]))
    fused, ids = tr.fused_scores([det(50, 50, [0, 1])])
    assert ids == [0]
    assert fused[0, 0] == pytest.approx(1.0)  # identical box dominates poor appearance


def test_config_validation():
    for bad in ({"window": 1}, {"alpha": 0}, {"new_track_threshold": 1.5},
                {"tracklet_agg": "max"}, {"positional": "giou"}, {"gaussian_variant": "x"}):
        with pytest.raises(ValueError):
            TrackerConfig(**bad)


def test_transcription_vote():
    rec = TrackRecord(0, [TrackEntry(0, None, "A", 0.5), TrackEntry(1, None, "B", 0.9),
                          TrackEntry(2, None, "A", 0.4), TrackEntry(3, None, "B", 0.3)])
    assert transcription_vote(rec) == "B"  # tie broken by confidence
    rec.entries.append(TrackEntry(4, None, "A", 0.1))
    assert transcription_vote(rec) == "A"
    assert transcription_vote(TrackRecord(1, [TrackEntry(0, None, None, 1.0)])) == ""


def test_zero_noise_clip_tracks_perfectly():
    scen = Scenario("clean", 3, 12, texts=[
        TextSpec("A", (200, 200), (120, 30), velocity=(3, 0)),
        TextSpec("B", (600, 300), (90, 30), velocity=(0, -2)),
        TextSpec("C", (900, 500), (150, 40), angle=0.2),
    ])
    clip = generate(scen)
    rep = evaluate_video(clip.gt, predictions(run_video(TrackerConfig(), clip.frames)))
    assert rep.idf1 == 1.0 and rep.mota == 1.0


def test_trained_or_random_model_runs():
    clip = generate(preset("crowd", embedding_dim=16, num_frames=6))
    records = run_video(TrackerConfig(), clip.frames, AssocModel.init(16, 4))
    assert sum(len(r.entries) for r in records) == sum(len(f.detections) for f in clip.frames)


@pytest.mark.parametrize("name", ["fig3_case2", "fig3_case3"])
def test_wasserstein_fusion_beats_iou(name):
    clip = generate(preset(name))
    good = evaluate_video(clip.gt, predictions(run_video(TrackerConfig(), clip.frames)))
    bad = evaluate_video(clip.gt, predictions(run_video(TrackerConfig(positional="iou"), clip.frames)))
    assert good.idsw == 0
    assert bad.idsw >= 1
