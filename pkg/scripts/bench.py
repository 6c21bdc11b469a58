"""Association latency against detection count and window length."""
import argparse

import numpy as np

from texttrack.assoc import AssocModel
from texttrack.synth import crowd, generate
from texttrack.tracker import Tracker, TrackerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--frames", type=int, default=60)
    args = ap.parse_args()
    model = AssocModel.init(args.dim, 4, seed=0)
    print(f"{'texts':>5} {'window':>6} {'p50 ms':>8} {'p95 ms':>8}")
    for texts in (5, 10, 20, 40):
        for window in (2, 8, 16):
            clip = generate(crowd(texts, embedding_dim=args.dim, num_frames=args.frames + window))
            tracker = Tracker(TrackerConfig(window=window), model)
            for frame in clip.frames:
                tracker.step(frame)
            p50, p95 = np.percentile(tracker.assoc_ms[window:], [50, 95])
            print(f"{texts:>5} {window:>6} {p50:>8.2f} {p95:>8.2f}")


if __name__ == "__main__":
    main()
