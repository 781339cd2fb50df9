"""Coordinator overhead (CoCA minus WSA) against resolution, and CoCA/MSA cost ratios."""
import argparse

from cocavit.complexity import CostParams, closed_form, linear_scaling_check


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sides", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--C", type=int, default=32)
    ap.add_argument("--K", type=int, nargs="+", default=[8, 16])
    ap.add_argument("--window", type=int, default=4)
    args = ap.parse_args()
    for K in args.K:
        rep = linear_scaling_check(tuple(args.sides), C=args.C, K=K, M_side=args.window)
        print(rep.to_table())
        print(f"exact against closed form: {rep.exact}\n")
    print("closed-form CoCA / MSA at C=96, K=16, window 7")
    for s in (14, 28, 56, 112, 224):
        p = CostParams(s, s, 96, 7, 16)
        print(f"  {s:>4}x{s:<4} {closed_form('CoCA', p) / closed_form('MSA', p):.4f}")


if __name__ == "__main__":
    main()
