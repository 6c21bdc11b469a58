"""IDF1 against window length on the occlusion preset and a noisier crowd."""
import argparse

from texttrack.metrics import PredObject, evaluate_video
from texttrack.synth import NoiseSpec, generate, preset
from texttrack.tracker import Tracker, TrackerConfig


def idf1(clip, window):
    tracker = Tracker(TrackerConfig(window=window))
    preds = {}
    for frame in clip.frames:
        for di, tid in tracker.step(frame):
            preds.setdefault(frame.frame_index, []).append(PredObject(tid, frame.detections[di].polygon))
    return evaluate_video(clip.gt, preds).idf1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--windows", type=int, nargs="+", default=[2, 4, 8, 12, 16])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    clips = {
        "occlusion_gap": lambda s: preset("occlusion_gap", s),
        # misses open short gaps everywhere
        "crowd+misses": lambda s: preset("crowd", s, noise=NoiseSpec(center_sigma=1.0, embedding_sigma=0.08,
                                                                     miss_rate=0.3, fp_rate=0.5)),
    }
    print(f"{'scenario':<14} " + " ".join(f"L={w:<6}" for w in args.windows))
    for name, make in clips.items():
        scores = [sum(idf1(generate(make(s)), w) for s in range(args.seeds)) / args.seeds for w in args.windows]
        print(f"{name:<14} " + " ".join(f"{v:<8.4f}" for v in scores))


if __name__ == "__main__":
    main()
