"""Per-component parameter budget of the named variants, and the 21M/28M consistency bound.

The 21M and 28M rows share every setting except stage-3 depth (12 vs 15).
With interaction 3 the three extra blocks are two WSA blocks and one CoCA
block, and the 21M stage 3 holds four such triples. Both published totals
then fix how large one triple can be, and therefore the 21M stage 3.
"""
import argparse

import numpy as np

from cocavit.backbone import PUBLISHED_PARAMS_M, build_model, get_variant, param_breakdown
from cocavit.numeric import Rng


def block_sizes(model, stage=1):
    sizes = {}
    for blk in model.stages[stage].blocks:
        sizes.setdefault(blk.kind, blk.num_params())
    return sizes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tolerance", type=float, default=0.05)
    args = ap.parse_args()
    models = {n: build_model(get_variant(n), Rng(42), np.float32) for n in ("11M", "21M", "28M")}
    for name, model in models.items():
        total = model.num_params()
        ref = PUBLISHED_PARAMS_M[name]
        print(f"{name}: {total:,} ({(total / 1e6 - ref) / ref:+.2%} vs {ref}M)")
        for k, v in param_breakdown(model).items():
            print(f"    {k:<10} {v:>12,}")

    tol = args.tolerance
    sizes = block_sizes(models["21M"])
    triple = 2 * sizes["WSA"] + sizes["CoCA"]
    print(f"\n21M stage-3 blocks at dim {models['21M'].stages[1].dim}: WSA {sizes['WSA']:,}, CoCA {sizes['CoCA']:,}, "
          f"2 WSA + 1 CoCA = {triple:,}")
    lo = PUBLISHED_PARAMS_M["28M"] * (1 - tol) - PUBLISHED_PARAMS_M["21M"] * (1 + tol)
    print(f"published totals within +-{tol:.0%} force one triple >= {lo:.3f}M, so the 21M stage 3 "
          f"(4 triples) >= {4 * lo:.3f}M")
    rest = models["21M"].num_params() - sum(p.size for n, p in models["21M"].named_parameters()
                                            if n.startswith("stages.1.blocks"))
    budget = PUBLISHED_PARAMS_M["21M"] * (1 + tol) - 4 * lo
    print(f"that leaves <= {budget:.3f}M for everything else; this build's remainder is {rest / 1e6:.3f}M "
          f"(stage 4 alone: {param_breakdown(models['21M'])['stages.2'] / 1e6:.3f}M)")


if __name__ == "__main__":
    main()
