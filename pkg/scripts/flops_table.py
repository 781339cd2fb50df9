"""Measured vs closed-form MACs for the named variants at 224x224."""
import argparse
from pathlib import Path

import numpy as np

from cocavit.backbone import PUBLISHED_GFLOPS, build_model, get_variant
from cocavit.complexity import measure
from cocavit.numeric import Rng, Tensor


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variants", nargs="+", default=["11M", "21M", "28M"])
    ap.add_argument("--image-size", type=int, default=224)
    ap.add_argument("--csv-dir", type=Path, help="write one per-layer CSV per variant here")
    args = ap.parse_args()
    print(f"{'variant':<8} {'measured G':>11} {'formula G':>10} {'published':>9} {'delta':>8} {'aux G':>7}")
    for name in args.variants:
        model = build_model(get_variant(name), Rng(42), np.float32)
        s = args.image_size
        report, _ = measure(model, Tensor(np.zeros((1, 3, s, s), np.float32)))
        aux = sum(r.measured_macs for r in report.rows
                  if r.kind in ("merge", "anchor") or ".generator." in r.layer)
        ref = PUBLISHED_GFLOPS.get(name)
        delta = f"{(report.total_measured / 1e9 - ref) / ref:+.2%}" if ref and s == 224 else "-"
        print(f"{name:<8} {report.total_measured / 1e9:>11.4f} {report.total_formula / 1e9:>10.4f} "
              f"{ref or '-':>9} {delta:>8} {aux / 1e9:>7.4f}")
        if args.csv_dir:
            args.csv_dir.mkdir(parents=True, exist_ok=True)
            (args.csv_dir / f"macs_{name}_{s}.csv").write_text(report.to_csv())


if __name__ == "__main__":
    main()
