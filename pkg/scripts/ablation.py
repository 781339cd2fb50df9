"""Same-seed ablation pairs on the nano model, plus parameter deltas at the 21M scale."""
import argparse

import numpy as np

from cocavit.backbone import build_model, get_variant
from cocavit.numeric import Rng
from cocavit.train import TrainOptions, ablate, apply_ablation, format_ablation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    opts = TrainOptions(steps=args.steps)
    for flags in ({"no_coordinators": True}, {"no_anchor": True}, {"uniform_mlp_ratio": True}):
        print(format_ablation(ablate(get_variant("nano"), opts, args.seed, **flags)))
        print()
    cfg = get_variant("21M")
    full = build_model(cfg, Rng(0), np.float32).num_params()
    for label, kw in (("no-coordinators", {"no_coordinators": True}), ("uniform-mlp-ratio", {"uniform_mlp_ratio": True})):
        n = build_model(apply_ablation(cfg, **kw), Rng(0), np.float32).num_params()
        print(f"21M {label}: {n:,} params ({n - full:+,} vs {full:,})")


if __name__ == "__main__":
    main()
