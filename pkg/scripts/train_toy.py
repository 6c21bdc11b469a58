"""Train the associator on a separable clip and compare it with the cosine fallback."""
import argparse

from texttrack.assoc import AssocModel, TrainingBatch, identity_accuracy, save_checkpoint, train_toy
from texttrack.synth import generate, separable_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--sigma", type=float, default=0.1, help="embedding noise")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="checkpoint path")
    args = ap.parse_args()
    clip = generate(separable_scenario(embedding_sigma=args.sigma, seed=args.seed))
    batch = TrainingBatch.from_clip(clip)
    model = AssocModel.init(16, 4, seed=args.seed)
    trained, trace = train_toy(model, batch, steps=args.steps, lr=args.lr)
    for k in range(0, len(trace), max(1, len(trace) // 10)):
        print(f"step {k:4d} loss {trace[k]:.5f}")
    print(f"final loss {trace[-1]:.5f} ({trace[-1] / trace[0]:.4f} of initial)")
    print(f"identity accuracy: untrained {identity_accuracy(model, batch):.3f} "
          f"trained {identity_accuracy(trained, batch):.3f} cosine {identity_accuracy(None, batch):.3f}")
    if args.out:
        save_checkpoint(trained, args.out)


if __name__ == "__main__":
    main()
