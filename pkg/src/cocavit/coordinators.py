"""Coordinator generation, cross-stage merging, and the anchor regulariser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import multihead_attend
from .complexity import merge_macs
from .numeric import Conv2d, LayerNorm, Linear, Module, Rng, parameter
from .numeric import tensor as T
from .numeric.instrument import counting, record_layer, scope
from .numeric.tensor import Tensor


class SqueezeExcite(Module):
    """Channel gate: GAP -> C/r -> GELU -> C -> sigmoid."""

    def __init__(self, channels: int, rng: Rng, reduction: int = 4, dtype=np.float64):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"SE channels {channels} not divisible by reduction {reduction}")
        self.fc1 = Linear(channels, channels // reduction, rng, dtype)
        self.fc2 = Linear(channels // reduction, channels, rng, dtype)

    def gate(self, x: Tensor) -> Tensor:
        pooled = global_avg_pool(x)
        return T.sigmoid(self.fc2(T.gelu(self.fc1(pooled))))  # [B, C]

    def forward(self, x: Tensor) -> Tensor:
        g = self.gate(x)
        return x * g.reshape(*g.shape, 1, 1)


class SpatialGate(Module):
    """CBAM spatial attention: 7x7 conv over [channel mean; channel max] -> sigmoid."""

    def __init__(self, rng: Rng, kernel: int = 7, dtype=np.float64):
        super().__init__()
        self.conv = Conv2d(2, 1, kernel, rng, dtype=dtype)

    def gate(self, x: Tensor) -> Tensor:
        stats = T.concat([x.mean(axis=1, keepdims=True), x.max(axis=1, keepdims=True)], axis=1)
        return T.sigmoid(self.conv(stats))  # [B, 1, H, W]

    def forward(self, x: Tensor) -> Tensor:
        return x * self.gate(x)


def global_avg_pool(x: Tensor) -> Tensor:
    """[B, C, H, W] -> [B, C]."""
    return x.mean(axis=(2, 3))


class CoordinatorGenerator(Module):
    """Produces the initial K coordinators from the 1/8-resolution feature map.

    fused = x * channel_gate * spatial_gate, then GAP, then an MLP
    C -> 2C -> K*D reshaped to ``[B, K, D]``.
    """

    def __init__(self, channels: int, num_coords: int, rng: Rng, dim: int | None = None,
                 reduction: int = 4, kernel: int = 7, dtype=np.float64):
        super().__init__()
        self.channels = channels
        self.num_coords = num_coords
        self.dim = channels if dim is None else dim
        self.se = SqueezeExcite(channels, rng, reduction, dtype)
        self.sa = SpatialGate(rng, kernel, dtype)
        self.fc1 = Linear(channels, 2 * channels, rng, dtype)
        self.fc2 = Linear(2 * channels, num_coords * self.dim, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(f"generator expects {self.channels} channels, got {x.shape[1]}")
        gc = self.se.gate(x)
        gs = self.sa.gate(x)
        fused = x * gc.reshape(*gc.shape, 1, 1) * gs
        tokens = self.fc2(T.gelu(self.fc1(global_avg_pool(fused))))
        return tokens.reshape(x.shape[0], self.num_coords, self.dim)


class TokenMerge(Module):
    """Carries coordinators from one stage's width to the next.

    A learnable query bank attends over the incoming coordinators (keys and
    values projected D_in -> D_out); a linear map of the input is added back.
    """

    def __init__(self, d_in: int, d_out: int, num_coords: int, heads: int, rng: Rng,
                 dtype=np.float64):
        super().__init__()
        if d_out % heads:
            raise ValueError(f"merge output dim {d_out} not divisible by {heads} heads")
        self.d_in, self.d_out, self.heads, self.num_coords = d_in, d_out, heads, num_coords
        self.queries = parameter(rng.trunc_normal((num_coords, d_out), dtype=dtype))
        self.norm = LayerNorm(d_in, dtype)
        self.k = Linear(d_in, d_out, rng, dtype)
        self.v = Linear(d_in, d_out, rng, dtype)
        self.residual = Linear(d_in, d_out, rng, dtype)

    def forward(self, g: Tensor, residual: bool = True) -> Tensor:
        B, K, D = g.shape
        if D != self.d_in:
            raise ValueError(f"token merge expects coordinators of dim {self.d_in}, got {D}")
        if counting():
            record_layer("merge", B * merge_macs(K, self.d_in, self.d_out), C=self.d_out, K=K)
        gn = self.norm(g)
        q = self.queries.reshape(1, self.num_coords, self.d_out)
        scale = 1.0 / np.sqrt(self.d_out // self.heads)
        out = multihead_attend(q, self.k(gn), self.v(gn), self.heads, scale)
        if out.shape[0] != B:
            out = T.broadcast_to(out, (B, self.num_coords, self.d_out))
        return out + self.residual(g) if residual else out


@dataclass
class AnchorLossTerms:
    diversity: Tensor
    stability: Tensor
    total: Tensor


DIVERSITY_WEIGHT = 0.5
STABILITY_WEIGHT = 0.1


def anchor_loss(g: Tensor, eps: float = 1e-12) -> AnchorLossTerms:
    """Diversity (K×K Gram of unit-norm coordinators vs identity) plus batch stability.

    Both terms are averaged over the batch.
    """
    B, K, D = g.shape
    with scope("anchor"):
        if counting():
            record_layer("anchor", B * K * K * D, C=D, K=K)
        norms = T.clip_min(((g * g).sum(axis=-1, keepdims=True)) ** 0.5, eps)
        gn = g / norms
        gram = T.matmul(gn, T.swap_last(gn))
        off = gram - Tensor(np.eye(K, dtype=g.dtype))
        diversity = (off * off).sum(axis=(1, 2)).mean()
        dev = g - g.mean(axis=0, keepdims=True)
        stability = (dev * dev).sum(axis=(1, 2)).mean()
        total = diversity * DIVERSITY_WEIGHT + stability * STABILITY_WEIGHT
    return AnchorLossTerms(diversity, stability, total)
