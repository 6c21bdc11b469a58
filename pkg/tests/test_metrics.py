import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from texttrack.errors import EmptyGroundTruth, ValidationError
from texttrack.geom import RotatedBox, polygon_iou
from texttrack.metrics import (GTObject, PredObject, compute_report, edit_distance, evaluate_video,
                               match_frame_spotting, match_frame_tracking, text_similarity)


def sq(x, y=0.0, s=10.0):
    return RotatedBox(x, y, s, s).corners()


def test_edit_distance_examples():
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance("", "abc") == 3
    assert edit_distance("same", "same") == 0
    assert text_similarity("", "") == 1.0
    assert text_similarity("abcd", "abce") == pytest.approx(0.75)


def _levenshtein_oracle(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(_levenshtein_oracle(a[1:], b) + 1, _levenshtein_oracle(a, b[1:]) + 1,
               _levenshtein_oracle(a[1:], b[1:]) + (a[0] != b[0]))


@given(st.text("abc", max_size=6), st.text("abc", max_size=6))
def test_edit_distance_matches_recursive_definition(a, b):
    assert edit_distance(a, b) == _levenshtein_oracle(a, b) == edit_distance(b, a)


def test_single_miss_in_four_frames():
    gt = {t: [GTObject(1, sq(0))] for t in range(4)}
    pred = {t: [PredObject(7, sq(0))] for t in range(4) if t != 2}
    rep = evaluate_video(gt, pred)
    assert rep.mota == pytest.approx(0.75)
    assert (rep.fn, rep.fp, rep.idsw) == (1, 0, 0)


def test_id_swap_counts_two_switches():
    gt = {t: [GTObject(1, sq(0)), GTObject(2, sq(100))] for t in range(4)}
    pred = {t: [PredObject(1 if t < 2 else 2, sq(0)), PredObject(2 if t < 2 else 1, sq(100))]
            for t in range(4)}
    rep = evaluate_video(gt, pred)
    assert rep.idsw == 2
    assert rep.mota == pytest.approx(1 - 2 / 8)
    assert rep.idf1 == pytest.approx(0.5)


def test_perfect_output():
    gt = {t: [GTObject(1, sq(t)), GTObject(2, sq(50 + t))] for t in range(5)}
    pred = {t: [PredObject(10 + g.track_id, g.polygon) for g in objs] for t, objs in gt.items()}
    rep = evaluate_video(gt, pred)
    assert rep.mota == 1.0 and rep.idf1 == 1.0
    assert rep.mm == 100.0 and rep.ml == 0.0
    assert rep.motp == pytest.approx(1.0)


def test_persisted_match_beats_better_overlap():
    last = {}
    match_frame_tracking([GTObject(1, sq(0))], [PredObject(5, sq(0))], last=last)
    # pred 6 overlaps better, but 5 is still admissible and is kept
    res = match_frame_tracking([GTObject(1, sq(0))], [PredObject(5, sq(3)), PredObject(6, sq(0))], last=last)
    assert res.matches[0][:2] == (1, 5)
    assert res.false_positives == [6]
    assert res.switches == []


def test_cardinality_first():
    # greedy on overlap would pair gt 1 with pred 2 and leave gt 2 unmatched
    g = [GTObject(1, sq(0)), GTObject(2, sq(5))]
    p = [PredObject(1, sq(-3)), PredObject(2, sq(2))]
    res = match_frame_tracking(g, p, iou_threshold=0.5)
    assert [m[:2] for m in res.matches] == [(1, 1), (2, 2)]


def test_ignore_regions_absorb_predictions():
    g = [GTObject(1, sq(0)), GTObject(2, sq(100), ignore=True)]
    p = [PredObject(1, sq(0)), PredObject(2, sq(100))]
    res = match_frame_tracking(g, p)
    assert res.false_positives == [] and res.misses == []


def test_spotting_requires_transcription():
    g = [GTObject(1, sq(0), "HELLO")]
    assert match_frame_spotting(g, [PredObject(1, sq(0), "HELLO")]).matches
    assert not match_frame_spotting(g, [PredObject(1, sq(0), "HELL0")]).matches
    assert match_frame_spotting(g, [PredObject(1, sq(0), "HELL0")], max_edit_ratio=0.2).matches
    far = [PredObject(1, sq(500), "HELLO")]
    assert not match_frame_spotting(g, far).matches
    assert match_frame_spotting(g, far, transcription_only=True).matches


def test_mostly_lost_and_matched():
    gt = {t: [GTObject(1, sq(0)), GTObject(2, sq(100))] for t in range(10)}
    pred = {t: [PredObject(1, sq(0))] + ([PredObject(2, sq(100))] if t < 1 else []) for t in range(10)}
    rep = evaluate_video(gt, pred)
    assert (rep.mm_tracks, rep.ml_tracks) == (1, 1)


def test_reports_over_videos():
    gt = {"a": {0: [GTObject(1, sq(0))]}, "b": {0: [GTObject(1, sq(0))]}}
    rep = compute_report(gt, {"a": {0: [PredObject(3, sq(0))]}})
    assert rep.fn == 1 and rep.gt == 2
    assert set(rep.per_video) == {"a", "b"}
    assert any(line.startswith("video.a.mota=") for line in rep.to_kv())
    with pytest.raises(ValidationError):
        compute_report(gt, {"zzz": {}})
    with pytest.raises(EmptyGroundTruth):
        evaluate_video({}, {})


def _idf1_oracle(gt, pred, thr=0.5):
    """IDF1 by enumerating every GT/pred track bijection."""
    gids = sorted({g.track_id for o in gt.values() for g in o})
    pids = sorted({p.track_id for o in pred.values() for p in o})
    co = {}
    for t in gt:
        for g in gt[t]:
            for p in pred.get(t, []):
                if polygon_iou(g.polygon, p.polygon) >= thr:
                    co[(g.track_id, p.track_id)] = co.get((g.track_id, p.track_id), 0) + 1
    best = 0
    k = min(len(gids), len(pids))
    for gsel in itertools.permutations(gids, k):
        for psel in itertools.combinations(pids, k):
            best = max(best, sum(co.get(pair, 0) for pair in zip(gsel, psel)))
    n_gt = sum(len(o) for o in gt.values())
    n_pred = sum(len(o) for o in pred.values())
    return 2 * best / (n_gt + n_pred)


@given(st.integers(0, 10 ** 6))
def test_idf1_matches_bijection_oracle(seed):
    # well-separated slots, so every prediction overlaps at most one GT object
    rng = np.random.default_rng(seed)
    frames = int(rng.integers(1, 6))
    gt, pred = {}, {}
    for t in range(frames):
        gt[t] = [GTObject(k, sq(100 * k)) for k in range(3) if rng.random() < 0.8]
        pred[t] = [PredObject(int(rng.integers(0, 4)), sq(100 * k)) for k in range(3) if rng.random() < 0.8]
        # one pred id per frame
        seen, uniq = set(), []
        for p in pred[t]:
            if p.track_id not in seen:
                seen.add(p.track_id)
                uniq.append(p)
        pred[t] = uniq
    if not any(gt.values()):
        return
    rep = evaluate_video(gt, pred)
    assert rep.idf1 == pytest.approx(_idf1_oracle(gt, pred), abs=1e-12)
