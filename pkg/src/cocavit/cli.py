"""``coca`` command line: shapes, params, flops, gradcheck, train-toy, ablate."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .backbone import PUBLISHED_GFLOPS, PUBLISHED_PARAMS_M, ConfigError, build_model, param_breakdown
from .complexity import measure
from .config import DEFAULT_SEED, RunConfig
from .numeric import Rng, Tensor
from .train import (DivergenceError, SizeGuardError, TrainOptions, ablate, apply_ablation,
                    format_ablation, train_toy, write_text)
from .verify import BLOCKS, gradcheck_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("shapes", "params", "flops", "gradcheck", "train-toy", "ablate")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coca", description="Coordinator-attention hybrid backbone tools.")
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--variant", help="built-in variant: 11M, 21M, 28M or nano (default nano)")
    src.add_argument("--config", dest="config_path", help="flat key = value config file")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--f64", action="store_true", help="64-bit floats (gradcheck always uses them)")
    p.add_argument("--out", help="output path: CSV for flops, checkpoint for train-toy, report otherwise")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--image-size", type=int)
    p.add_argument("--log", help="per-step metrics CSV for train-toy")
    p.add_argument("--no-coordinators", action="store_true")
    p.add_argument("--no-anchor", action="store_true")
    p.add_argument("--uniform-mlp-ratio", action="store_true")
    p.add_argument("--override-size-guard", action="store_true")
    return p


def _run_config(ns: argparse.Namespace) -> RunConfig:
    opts = {k: getattr(ns, k) for k in ("steps", "lr", "image_size", "log", "no_coordinators", "no_anchor",
                                         "uniform_mlp_ratio", "override_size_guard")}
    return RunConfig(ns.command, ns.variant, ns.config_path, ns.seed, "f64" if ns.f64 else "f32",
                     ns.out, opts)


def _emit(text: str, out: str | None = None) -> None:
    print(text)
    if out:
        write_text(out, text + "\n")


def cmd_shapes(rc: RunConfig, config) -> int:
    image = rc.options.get("image_size") or config.image_size
    config = replace(config, image_size=image).validate()
    model = build_model(config, Rng(rc.seed), np.float64)
    x = Tensor(np.zeros((1, 3, image, image)))
    res = measure(model, x)[1]
    lines = [f"variant {config.name}: dims {config.stage_dims}, depths {config.depths}, "
             f"image {image}x{image}"]
    names = ["stage1 (MBConv)", "stage2", "stage3", "stage4"]
    ok = True
    for s, (shape, cshape) in enumerate(zip(res.stage_shapes, res.coord_shapes)):
        plan = "" if s == 0 else " plan [" + ", ".join(model.stages[s - 1].kinds) + "]"
        coords = "" if cshape is None else f" coordinators {tuple(cshape)}"
        lines.append(f"  {names[s]:<16} {tuple(shape)}{coords}{plan}")
        side = image // 2 ** (s + 2)
        want = (1, config.stage_dims[s], side, side) if s == 0 else (1, side, side, config.stage_dims[s])
        if tuple(shape) != want:
            lines.append(f"  !! {names[s]}: expected {want}")
            ok = False
        if cshape is not None and tuple(cshape) != (1, config.num_coords, config.stage_dims[s]):
            lines.append(f"  !! {names[s]}: coordinator shape {tuple(cshape)} does not match the stage width")
            ok = False
    lines.append(f"  logits {tuple(res.logits.shape)}; CoCA blocks {model.ggca_count()}")
    _emit("\n".join(lines), rc.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_params(rc: RunConfig, config) -> int:
    model = build_model(config, Rng(rc.seed), np.float32)
    parts = param_breakdown(model)
    total = sum(parts.values())
    lines = [f"variant {config.name}"]
    lines += [f"  {k:<12} {v:>12,}" for k, v in parts.items()]
    lines.append(f"  {'total':<12} {total:>12,}  ({total / 1e6:.3f}M)")
    if config.name in PUBLISHED_PARAMS_M:
        ref = PUBLISHED_PARAMS_M[config.name]
        lines.append(f"  published {ref}M, delta {(total / 1e6 - ref) / ref:+.2%}")
    _emit("\n".join(lines), rc.out)
    return EXIT_OK


def cmd_flops(rc: RunConfig, config) -> int:
    image = rc.options.get("image_size") or config.image_size
    config = replace(config, image_size=image).validate()
    model = build_model(config, Rng(rc.seed), np.float32)
    report, _ = measure(model, Tensor(np.zeros((1, 3, image, image), np.float32)))
    print(report.to_table())
    total = report.total_measured
    aux = sum(r.measured_macs for r in report.rows if r.kind in ("merge", "anchor")
              or ".generator." in r.layer)
    print(f"total {total / 1e9:.4f} GMACs; without generator/mergers/anchor {(total - aux) / 1e9:.4f}")
    if config.name in PUBLISHED_GFLOPS and image == 224:
        ref = PUBLISHED_GFLOPS[config.name]
        print(f"published {ref} GFLOPs (1 MAC = 1 FLOP), delta {(total / 1e9 - ref) / ref:+.2%}")
    if rc.out:
        write_text(rc.out, report.to_csv())
    return EXIT_OK


def cmd_gradcheck(rc: RunConfig, config) -> int:
    if config.name != "nano":
        print(f"note: gradcheck always runs the nano-sized blocks (got {config.name})")
    reports = gradcheck_suite(rc.seed)
    lines = [f"{'block':<12} {'max_rel_err':>12}  status"]
    for name in BLOCKS:
        r = reports[name]
        detail = f"{r.worst_error:>12.3e}" if r.failure is None else f"{'-':>12}  ({r.failure})"
        lines.append(f"{name:<12} {detail}  {'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in reports.values())
    lines.append("all blocks pass" if ok else "gradient check FAILED")
    _emit("\n".join(lines), None)
    return EXIT_OK if ok else EXIT_FAIL


def _train_options(rc: RunConfig) -> TrainOptions:
    o = rc.options
    return TrainOptions(steps=o["steps"], lr=o["lr"], image_size=o.get("image_size"),
                        no_anchor=o["no_anchor"], override_size_guard=o["override_size_guard"])


def cmd_train_toy(rc: RunConfig, config) -> int:
    config = apply_ablation(config, rc.options["no_coordinators"], rc.options["uniform_mlp_ratio"])
    dtype = np.float64 if rc.precision == "f64" else np.float32
    res = train_toy(config, _train_options(rc), rc.seed, dtype, checkpoint_path=rc.out,
                    log_path=rc.options.get("log"), echo=print)
    print(f"final train accuracy {res.final_accuracy:.4f} ({res.num_params:,} params)")
    if rc.out:
        print(f"checkpoint written to {rc.out}")
    return EXIT_OK


def cmd_ablate(rc: RunConfig, config) -> int:
    o = rc.options
    dtype = np.float64 if rc.precision == "f64" else np.float32
    rows = ablate(config, _train_options(rc), rc.seed, dtype, o["no_coordinators"], o["no_anchor"],
                  o["uniform_mlp_ratio"])
    _emit(format_ablation(rows), rc.out)
    return EXIT_OK


HANDLERS = {"shapes": cmd_shapes, "params": cmd_params, "flops": cmd_flops, "gradcheck": cmd_gradcheck,
            "train-toy": cmd_train_toy, "ablate": cmd_ablate}


def main(argv: list[str] | None = None) -> int:
    ns = _parser().parse_args(argv)
    rc = _run_config(ns)
    try:
        config = rc.model_config()
        return HANDLERS[rc.command](rc, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SizeGuardError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
