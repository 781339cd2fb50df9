"""Desk-scale training on the synthetic dataset, plus ablation pairs."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .backbone import CoCAViT, ModelConfig, build_model
from .config import DEFAULT_SEED, parse_model_config
from .data import SyntheticDataset
from .numeric import NonFiniteError, Rng, Tensor, no_grad
from .numeric import tensor as T
from .optim import AdamW, cosine_lr

SIZE_GUARD = 2_000_000
LOG_COLUMNS = ("step", "ce_loss", "anchor_div", "anchor_stab", "total_loss", "train_acc")


class SizeGuardError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step: int, checkpoint_path: str | None):
        where = f"; last good weights saved to {checkpoint_path}" if checkpoint_path else ""
        super().__init__(f"loss became non-finite at step {step}{where}")
        self.step = step
        self.checkpoint_path = checkpoint_path


@dataclass
class TrainOptions:
    steps: int = 2000
    lr: float = 1e-3
    batch_size: int = 32
    weight_decay: float = 0.05
    warmup: int = 100
    per_class: int = 128
    noise: float = 0.5
    image_size: int | None = None  # None: the config's image size
    no_anchor: bool = False
    override_size_guard: bool = False


@dataclass
class StepLog:
    step: int
    ce_loss: float
    anchor_div: float
    anchor_stab: float
    total_loss: float
    train_acc: float

    def csv(self) -> str:
        return (f"{self.step},{self.ce_loss:.8g},{self.anchor_div:.8g},{self.anchor_stab:.8g},"
                f"{self.total_loss:.8g},{self.train_acc:.8g}")


@dataclass
class TrainResult:
    config: ModelConfig
    log: list[StepLog]
    final_accuracy: float  # over the whole training set, after the last step
    num_params: int
    model: CoCAViT = field(repr=False)
    final_batch: np.ndarray = field(repr=False)
    final_logits: np.ndarray = field(repr=False)

    def log_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(LOG_COLUMNS) + "\n")
        for row in self.log:
            buf.write(row.csv() + "\n")
        return buf.getvalue()


def apply_ablation(config: ModelConfig, no_coordinators: bool = False,
                   uniform_mlp_ratio: bool = False) -> ModelConfig:
    """Config edits for the ablation flags. Flags compose freely."""
    if no_coordinators:
        # pure window attention: every CoCA slot becomes a WSA block, no generator or mergers
        config = replace(config, coordinators=False, interaction=[-1, -1, -1])
    if uniform_mlp_ratio:
        r = round(sum(config.mlp_ratios) / len(config.mlp_ratios))
        config = replace(config, mlp_ratios=[r, r, r])
    return config.validate()


def _train_accuracy(model: CoCAViT, images: np.ndarray, labels: np.ndarray, batch: int = 128) -> float:
    correct = 0
    with no_grad():
        for i in range(0, len(labels), batch):
            logits = model(Tensor(images[i:i + batch].astype(model.dtype))).logits.data
            correct += int((logits.argmax(-1) == labels[i:i + batch]).sum())
    return correct / len(labels)


def train_toy(config: ModelConfig, options: TrainOptions | None = None, seed: int = DEFAULT_SEED,
              dtype=np.float32, checkpoint_path=None, log_path=None, echo=None) -> TrainResult:
    """Train on :class:`SyntheticDataset`; loss = cross-entropy + anchor total.

    The anchor term is dropped with ``no_anchor`` and is absent when the
    model has no coordinators. On a non-finite loss the last finite
    weights are written to ``checkpoint_path`` and :class:`DivergenceError`
    is raised.
    """
    opts = options or TrainOptions()
    if opts.image_size is not None:
        config = replace(config, image_size=opts.image_size)
    config = config.validate()
    model = build_model(config, Rng(seed), dtype)
    n_params = model.num_params()
    if n_params > SIZE_GUARD and not opts.override_size_guard:
        raise SizeGuardError(f"{config.name or 'model'} has {n_params:,} parameters (> {SIZE_GUARD:,}); "
                             "pass --override-size-guard to train it anyway")
    data = SyntheticDataset(seed=seed, num_classes=config.num_classes, image_size=config.image_size,
                            per_class=opts.per_class, noise=opts.noise)
    images, labels = data.generate()
    images = images.astype(dtype)
    order_rng = Rng(seed).spawn(1)
    params = model.parameters()
    opt = AdamW(params, lr=opts.lr, weight_decay=opts.weight_decay)
    log: list[StepLog] = []
    last_good = model.state_dict()
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    if log_file:
        log_file.write(",".join(LOG_COLUMNS) + "\n")
    perm, cursor = order_rng.permutation(len(labels)), 0
    xb = yb = logits = None
    try:
        for step in range(opts.steps):
            if cursor + opts.batch_size > len(labels):
                perm, cursor = order_rng.permutation(len(labels)), 0
            idx = perm[cursor:cursor + opts.batch_size]
            cursor += opts.batch_size
            xb, yb = images[idx], labels[idx]
            model.zero_grad()
            try:
                out = model(Tensor(xb))
                ce = T.cross_entropy(out.logits, yb)
                loss = ce
                div = stab = 0.0
                if out.anchor is not None:
                    div, stab = float(out.anchor.diversity.data), float(out.anchor.stability.data)
                    if not opts.no_anchor:
                        loss = ce + out.anchor.total
                total = float(loss.data)
                if not math.isfinite(total):
                    raise NonFiniteError("loss", "total")
                loss.backward()
            except NonFiniteError:
                model.load_state_dict(last_good)
                saved = None
                if checkpoint_path:
                    save_model(checkpoint_path, model)
                    saved = str(checkpoint_path)
                raise DivergenceError(step, saved) from None
            logits = out.logits.data
            acc = float((logits.argmax(-1) == yb).mean())
            row = StepLog(step, float(ce.data), div, stab, total, acc)
            log.append(row)
            if log_file:
                log_file.write(row.csv() + "\n")
            if echo and (step % 100 == 0 or step == opts.steps - 1):
                echo(row.csv())
            opt.step(cosine_lr(step, opts.steps, opts.lr, opts.warmup))
            last_good = model.state_dict()
    finally:
        if log_file:
            log_file.close()
    final_acc = _train_accuracy(model, images, labels)
    final_batch = xb if xb is not None else images[: opts.batch_size]
    with no_grad():
        final_logits = model(Tensor(final_batch)).logits.data.copy()
    if checkpoint_path:
        save_model(checkpoint_path, model)
    return TrainResult(config, log, final_acc, n_params, model, final_batch, final_logits)


def save_model(path, model: CoCAViT) -> None:
    checkpoint.save(path, model.state_dict(), model.config.snapshot())


def load_model(path) -> CoCAViT:
    """Rebuild a model from a checkpoint; the dtype comes from the stored tensors."""
    tensors, config_text = checkpoint.load(path)
    config = parse_model_config(config_text)
    dtypes = {a.dtype for a in tensors.values()}
    dtype = dtypes.pop() if len(dtypes) == 1 else np.float64
    model = build_model(config, Rng(0), dtype)
    model.load_state_dict(tensors)
    return model


@dataclass
class AblationRow:
    label: str
    num_params: int
    final_accuracy: float
    final_diversity: float | None


def ablate(config: ModelConfig, options: TrainOptions, seed: int = DEFAULT_SEED, dtype=np.float32,
           no_coordinators: bool = False, no_anchor: bool = False, uniform_mlp_ratio: bool = False,
           echo=None) -> list[AblationRow]:
    """Train the baseline and the ablated variant with the same seed."""
    if not (no_coordinators or no_anchor or uniform_mlp_ratio):
        raise ValueError("choose at least one of no_coordinators, no_anchor, uniform_mlp_ratio")
    flags = [n for n, on in (("no-coordinators", no_coordinators), ("no-anchor", no_anchor),
                             ("uniform-mlp-ratio", uniform_mlp_ratio)) if on]
    variant = apply_ablation(config, no_coordinators, uniform_mlp_ratio)
    rows = []
    for label, cfg, opts in (("baseline", config, options),
                             ("+".join(flags), variant, replace(options, no_anchor=no_anchor))):
        res = train_toy(cfg, opts, seed, dtype, echo=echo)
        div = res.log[-1].anchor_div if res.log and res.model.generator is not None else None
        rows.append(AblationRow(label, res.num_params, res.final_accuracy, div))
    return rows


def format_ablation(rows: list[AblationRow]) -> str:
    base = rows[0]
    lines = [f"{'run':<36} {'params':>10} {'dparams':>9} {'train_acc':>9} {'dacc':>8}"]
    for r in rows:
        lines.append(f"{r.label:<36} {r.num_params:>10,} {r.num_params - base.num_params:>+9,} "
                     f"{r.final_accuracy:>9.4f} {r.final_accuracy - base.final_accuracy:>+8.4f}")
    return "\n".join(lines)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
