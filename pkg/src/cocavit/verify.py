"""Finite-difference gradient checks for every block type, at nano sizes."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .attention import AttentionWeights, gcwa, ggca, wsa_grid
from .backbone import ConvGLU, MBConv, build_model, get_variant
from .coordinators import CoordinatorGenerator, TokenMerge, anchor_loss
from .numeric import GradReport, Rng, Tensor, grad_check
from .numeric import tensor as T

BLOCKS = ("WSA", "GGCA", "GCWA", "ConvGLU", "MBConv", "generator", "merger", "anchor-loss", "nano-model")


def _probe(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar readout with generic weights, so no gradient cancels by symmetry."""
    return (out * Tensor(weights)).sum()


def _case(name: str, seed: int) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    rng = Rng(seed)
    C, heads, m, K = 8, 2, 2, 3
    x = Tensor(rng.normal((1, 4, 4, C)), requires_grad=True)
    g = Tensor(rng.normal((1, K, C)), requires_grad=True)

    if name in ("WSA", "GGCA", "GCWA"):
        attn = AttentionWeights(C, heads, rng, window=None if name == "GGCA" else m)
        params = {"x": x, **dict(attn.named_parameters())}
        if name == "WSA":
            r = rng.normal(x.shape)
            return lambda: _probe(wsa_grid(x, attn), r), params
        params["g"] = g
        if name == "GGCA":
            r = rng.normal(g.shape)
            return lambda: _probe(ggca(x, g, attn), r), params
        r = rng.normal(x.shape)
        return lambda: _probe(gcwa(x, g, attn), r), params
    if name == "ConvGLU":
        mod = ConvGLU(C, 4, rng)
        r = rng.normal(x.shape)
        return lambda: _probe(mod(x), r), {"x": x, **dict(mod.named_parameters())}
    if name == "MBConv":
        xc = Tensor(rng.normal((1, C, 4, 4)), requires_grad=True)
        mod = MBConv(C, rng)
        r = rng.normal(xc.shape)
        return lambda: _probe(mod(xc), r), {"x": xc, **dict(mod.named_parameters())}
    if name == "generator":
        xc = Tensor(rng.normal((2, C, 4, 4)), requires_grad=True)
        mod = CoordinatorGenerator(C, K, rng)
        r = rng.normal((2, K, C))
        return lambda: _probe(mod(xc), r), {"x": xc, **dict(mod.named_parameters())}
    if name == "merger":
        gi = Tensor(rng.normal((2, K, C)), requires_grad=True)
        mod = TokenMerge(C, 12, K, heads, rng)
        r = rng.normal((2, K, 12))
        return lambda: _probe(mod(gi), r), {"g": gi, **dict(mod.named_parameters())}
    if name == "anchor-loss":
        gi = Tensor(rng.normal((3, 4, C)), requires_grad=True)
        return lambda: anchor_loss(gi).total, {"g": gi}
    if name == "nano-model":
        model = build_model(get_variant("nano"), rng, np.float64)
        images = Tensor(rng.normal((2, 3, 32, 32)))
        labels = np.array([0, 3])

        def loss():
            out = model(images)
            return T.cross_entropy(out.logits, labels) + out.anchor.total
        return loss, dict(model.named_parameters())
    raise ValueError(f"unknown block {name!r}; expected one of {BLOCKS}")


def check_block(name: str, seed: int = 0, tol: float = 1e-4) -> GradReport:
    f, params = _case(name, seed)
    # the whole model starts with near-zero coordinators, where the anchor
    # normalisation bends sharply; it needs the smaller step
    whole = name == "nano-model"
    return grad_check(f, params, eps=1e-6 if whole else 1e-4, tol=tol, max_points=4 if whole else 24,
                      rng=Rng(seed).spawn(7))


def gradcheck_suite(seed: int = 0, tol: float = 1e-4, blocks=BLOCKS) -> dict[str, GradReport]:
    return {name: check_block(name, seed, tol) for name in blocks}
