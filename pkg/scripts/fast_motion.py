"""ID switches of Wasserstein, IoU and appearance-only fusion on the fast-motion presets."""
import argparse

from texttrack.metrics import PredObject, evaluate_video
from texttrack.synth import generate, preset
from texttrack.tracker import Tracker, TrackerConfig

VARIANTS = {
    "wasserstein": TrackerConfig(),
    "wasserstein-linear-cov": TrackerConfig(gaussian_variant="linear"),
    "iou": TrackerConfig(positional="iou"),
    "appearance-only": TrackerConfig(positional="none"),
}


def evaluate(clip, config):
    tracker = Tracker(config)
    preds = {}
    for frame in clip.frames:
        for di, tid in tracker.step(frame):
            preds.setdefault(frame.frame_index, []).append(PredObject(tid, frame.detections[di].polygon))
    return evaluate_video(clip.gt, preds)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    print(f"{'preset':<12} {'seed':>4} " + " ".join(f"{v:>22}" for v in VARIANTS))
    for name in ("fig3_case2", "fig3_case3", "identical_texts"):
        for seed in range(args.seeds):
            clip = generate(preset(name, seed))
            cells = []
            for cfg in VARIANTS.values():
                rep = evaluate(clip, cfg)
                cells.append(f"IDSW {rep.idsw:3d} IDF1 {rep.idf1:.3f}")
            print(f"{name:<12} {seed:>4} " + " ".join(f"{c:>22}" for c in cells))


if __name__ == "__main__":
    main()
