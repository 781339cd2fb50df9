"""Nano model on the synthetic set: metrics CSV, final checkpoint, diversity trend."""
import argparse
from pathlib import Path

import numpy as np

from cocavit.backbone import get_variant
from cocavit.train import TrainOptions, train_toy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out-dir", type=Path, default=Path("runs/toy"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    res = train_toy(get_variant("nano"), TrainOptions(steps=args.steps, lr=args.lr), seed=args.seed,
                    checkpoint_path=args.out_dir / "nano.ckpt", log_path=args.out_dir / "metrics.csv",
                    echo=print)
    div = np.array([r.anchor_div for r in res.log])
    w = min(50, len(div))
    print(f"final train accuracy {res.final_accuracy:.4f}")
    print(f"anchor diversity: step 0 {div[0]:.4g}, first-{w} mean {div[:w].mean():.4g}, "
          f"last-{w} mean {div[-w:].mean():.4g}")


if __name__ == "__main__":
    main()
