"""Window partitioning and the three attention variants: WSA, GGCA and GCWA.

Patch grids are channels-last ``[B, h, w, C]``; window sets are
``[B * nW, T, C]`` with ``T = M_side**2`` tokens per window in row-major order.
Coordinator sets are ``[B, K, C]``.
"""
from __future__ import annotations

import math

import numpy as np

from .complexity import CostParams, closed_form
from .numeric import LayerNorm, Linear, Module, Rng, parameter
from .numeric import tensor as T
from .numeric.instrument import counting, record_layer, scope
from .numeric.tensor import ShapeError, Tensor

MASKED = -1e30  # additive logit for keys that must receive exactly zero weight


class AttentionWeights(Module):
    """Q/K/V/O projections, pre-norm, and (for windowed use) a relative position bias."""

    def __init__(self, dim: int, heads: int, rng: Rng, window: int | None = None,
                 dtype=np.float64, rel_bias: bool = True):
        super().__init__()
        if dim % heads:
            raise ValueError(f"channel dim {dim} is not divisible by {heads} heads")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.window = window
        self.norm = LayerNorm(dim, dtype)
        self.q = Linear(dim, dim, rng, dtype)
        self.k = Linear(dim, dim, rng, dtype)
        self.v = Linear(dim, dim, rng, dtype)
        self.o = Linear(dim, dim, rng, dtype)
        self.rel_bias = None
        if window is not None and rel_bias:
            self.rel_bias = parameter(rng.trunc_normal(((2 * window - 1) ** 2, heads), dtype=dtype))
            self._rel_index = relative_position_index(window)

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)

    def bias_table(self) -> Tensor | None:
        """Per-head patch–patch bias, ``[heads, T, T]``."""
        if self.rel_bias is None:
            return None
        t = self._rel_index.shape[0]
        b = T.getitem(self.rel_bias, self._rel_index.reshape(-1))
        return b.reshape(t, t, self.heads).transpose(2, 0, 1)

    def set_identity(self) -> None:
        """Identity projections and zero biases; used by hand-evaluated checks."""
        eye = np.eye(self.dim, dtype=self.q.weight.dtype)
        for lin in (self.q, self.k, self.v, self.o):
            lin.weight.data = eye.copy()
            lin.bias.data = np.zeros_like(lin.bias.data)
        if self.rel_bias is not None:
            self.rel_bias.data = np.zeros_like(self.rel_bias.data)


def relative_position_index(m: int) -> np.ndarray:
    ys, xs = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    coords = np.stack([ys.ravel(), xs.ravel()])  # [2, T]
    rel = coords[:, :, None] - coords[:, None, :] + (m - 1)
    return rel[0] * (2 * m - 1) + rel[1]


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, L, C = x.shape
    x = x.reshape(*lead, L, heads, C // heads)
    n = len(lead)
    return x.transpose(*range(n), n + 1, n, n + 2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, H, L, d = x.shape
    n = len(lead)
    return x.transpose(*range(n), n + 1, n, n + 2).reshape(*lead, L, H * d)


def multihead_attend(q: Tensor, k: Tensor, v: Tensor, heads: int, scale: float,
                     bias: Tensor | None = None, mask: np.ndarray | None = None,
                     return_weights: bool = False):
    """softmax(q kᵀ · scale + bias + mask) v, computed per head.

    ``q`` is ``[..., Lq, C]``, ``k``/``v`` are ``[..., Lk, C]``; ``bias`` and
    ``mask`` broadcast against ``[..., heads, Lq, Lk]``.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-1] != v.shape[-1]:
        raise ShapeError(f"attention channel mismatch: q {q.shape}, k {k.shape}, v {v.shape}")
    qh, kh, vh = (_split_heads(t, heads) for t in (q, k, v))
    scores = T.matmul(qh * scale, T.swap_last(kh))
    if bias is not None:
        scores = scores + bias
    if mask is not None:
        scores = scores + Tensor(mask.astype(scores.dtype))
    attn = T.softmax(scores, axis=-1)
    out = _merge_heads(T.matmul(attn, vh))
    return (out, attn) if return_weights else out


# window geometry ------------------------------------------------------------

def window_partition(x: Tensor, m: int) -> Tensor:
    B, h, w, C = x.shape
    if h % m or w % m:
        raise ShapeError(f"grid {h}x{w} is not divisible by window side {m}")
    x = x.reshape(B, h // m, m, w // m, m, C).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B * (h // m) * (w // m), m * m, C)


def window_reverse(windows: Tensor, h: int, w: int, m: int) -> Tensor:
    nwin, t, C = windows.shape
    if h % m or w % m or t != m * m or nwin % ((h // m) * (w // m)):
        raise ShapeError(f"windows {windows.shape} inconsistent with grid {h}x{w}, side {m}")
    B = nwin // ((h // m) * (w // m))
    x = windows.reshape(B, h // m, w // m, m, m, C).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B, h, w, C)


def _padded(h: int, m: int) -> int:
    return -(-h // m) * m


def _pad_mask(h: int, w: int, m: int) -> np.ndarray | None:
    """Additive key mask ``[nW, T]`` hiding right/bottom padding, or None."""
    hp, wp = _padded(h, m), _padded(w, m)
    if (hp, wp) == (h, w):
        return None
    valid = np.zeros((hp, wp), dtype=bool)
    valid[:h, :w] = True
    valid = valid.reshape(hp // m, m, wp // m, m).transpose(0, 2, 1, 3).reshape(-1, m * m)
    return np.where(valid, 0.0, MASKED)


# attention ops --------------------------------------------------------------

def _window_core(xw: Tensor, weights: AttentionWeights, coords: Tensor | None,
                 pad_mask: np.ndarray | None, coord_mask: bool) -> Tensor:
    """Attention inside windows ``xw`` = ``[B, nW, T, C]`` (already normalised).

    With ``coords`` ``[B, K, C]`` every window's key/value set is extended by
    the K coordinator tokens; their projections are computed once per image.
    """
    B, nW, t, C = xw.shape
    q, k, v = weights.q(xw), weights.k(xw), weights.v(xw)
    bias = weights.bias_table()
    mask = None if pad_mask is None else pad_mask[None, :, None, None, :]
    if coords is not None:
        K = coords.shape[1]
        kg = T.broadcast_to(weights.k(coords).reshape(B, 1, K, C), (B, nW, K, C))
        vg = T.broadcast_to(weights.v(coords).reshape(B, 1, K, C), (B, nW, K, C))
        k = T.concat([k, kg], axis=2)
        v = T.concat([v, vg], axis=2)
        if bias is not None:
            bias = T.concat([bias, Tensor(np.zeros((weights.heads, t, K), dtype=bias.dtype))], axis=-1)
        if mask is not None or coord_mask:
            pm = np.zeros((nW, t)) if pad_mask is None else pad_mask
            cm = np.full((nW, K), MASKED if coord_mask else 0.0)
            mask = np.concatenate([pm, cm], axis=1)[None, :, None, None, :]
    out = multihead_attend(q, k, v, weights.heads, weights.scale, bias, mask)
    return out


def wsa(windows: Tensor, weights: AttentionWeights, *, raw: bool = False,
        pad_mask: np.ndarray | None = None) -> Tensor:
    """Multi-head self-attention inside each window of a ``[B*nW, T, C]`` set.

    ``raw`` skips pre-norm, output projection and residual.
    """
    if windows.shape[-1] != weights.dim:
        raise ValueError(f"window channels {windows.shape[-1]} != attention dim {weights.dim}")
    with scope(weights._local):
        x = windows if raw else weights.norm(windows)
        x = x.reshape(1, *x.shape)
        out = _window_core(x, weights, None, pad_mask, False).reshape(windows.shape)
        return out if raw else windows + weights.o(out)


def _grid_window_attention(patches: Tensor, weights: AttentionWeights, coords: Tensor | None,
                           coord_mask: bool, raw: bool, kind: str) -> Tensor:
    B, h, w, C = patches.shape
    if C != weights.dim:
        raise ValueError(f"patch channels {C} != attention dim {weights.dim}")
    if coords is not None and coords.shape[-1] != C:
        raise ValueError(f"coordinator dim {coords.shape[-1]} != patch dim {C}")
    m = weights.window
    with scope(weights._local):
        if counting():
            K = 0 if coords is None else coords.shape[1]
            hp, wp = _padded(h, m), _padded(w, m)
            p = CostParams(hp, wp, C, m, K)
            record_layer(kind, B * closed_form(kind, p), h=hp, w=wp, C=C, T=m * m, K=K)
        x = patches if raw else weights.norm(patches)
        g = None
        if coords is not None:
            g = coords if raw else weights.norm(coords)
        hp, wp = _padded(h, m), _padded(w, m)
        if (hp, wp) != (h, w):
            x = T.pad(x, ((0, 0), (0, hp - h), (0, wp - w), (0, 0)))
        nW = (hp // m) * (wp // m)
        xw = window_partition(x, m).reshape(B, nW, m * m, C)
        out = _window_core(xw, weights, g, _pad_mask(h, w, m), coord_mask)
        out = window_reverse(out.reshape(B * nW, m * m, C), hp, wp, m)
        if not raw:
            out = weights.o(out)  # before the crop so the padded-grid cost is exact
        if (hp, wp) != (h, w):
            out = out[:, :h, :w, :]
        return out if raw else patches + out


def wsa_grid(patches: Tensor, weights: AttentionWeights, *, raw: bool = False) -> Tensor:
    """WSA on a patch grid: pad, partition, attend, reverse, crop."""
    return _grid_window_attention(patches, weights, None, False, raw, "WSA")


def msa(patches: Tensor, weights: AttentionWeights) -> Tensor:
    """Global self-attention over all patches (the reference point for window costs)."""
    B, h, w, C = patches.shape
    with scope(weights._local):
        if counting():
            record_layer("MSA", B * closed_form("MSA", CostParams(h, w, C, 1, 0)), h=h, w=w, C=C, T=h * w, K=0)
        x = weights.norm(patches).reshape(B, h * w, C)
        out = multihead_attend(weights.q(x), weights.k(x), weights.v(x), weights.heads, weights.scale)
        return patches + weights.o(out).reshape(B, h, w, C)


def gcwa(patches: Tensor, coords: Tensor, weights: AttentionWeights, *,
         coord_mask: bool = False, raw: bool = False) -> Tensor:
    """Window attention whose key/value set also holds every coordinator.

    Coordinator keys carry no position bias. ``coord_mask`` gives them an
    exactly-zero attention weight (the ablation path).
    """
    return _grid_window_attention(patches, weights, coords, coord_mask, raw, "GCWA")


def ggca(patches: Tensor, coords: Tensor, weights: AttentionWeights, *, raw: bool = False,
         return_weights: bool = False):
    """Coordinators attend over themselves plus every patch; patches are not touched.

    Returns the updated coordinators ``[B, K, C]`` (pre-norm, W_O and
    residual applied unless ``raw``).
    """
    B, h, w, C = patches.shape
    if coords.shape[-1] != C or C != weights.dim:
        raise ValueError(f"coordinator dim {coords.shape[-1]}, patch dim {C} and "
                         f"attention dim {weights.dim} must agree")
    K = coords.shape[1]
    with scope(weights._local):
        if counting():
            record_layer("GGCA", B * closed_form("GGCA", CostParams(h, w, C, 1, K)), h=h, w=w, C=C, T=None, K=K)
        p = patches.reshape(B, h * w, C)
        g = coords
        if not raw:
            p, g = weights.norm(p), weights.norm(g)
        keys = T.concat([weights.k(g), weights.k(p)], axis=1)
        values = T.concat([weights.v(g), weights.v(p)], axis=1)
        out, attn = multihead_attend(weights.q(g), keys, values, weights.heads, weights.scale,
                                     return_weights=True)
        if not raw:
            out = coords + weights.o(out)
        return (out, attn) if return_weights else out


class CoordinatorMlp(Module):
    """Pre-norm two-layer MLP with residual for coordinator tokens."""

    def __init__(self, dim: int, ratio: int, rng: Rng, dtype=np.float64):
        super().__init__()
        self.norm = LayerNorm(dim, dtype)
        self.fc1 = Linear(dim, ratio * dim, rng, dtype)
        self.fc2 = Linear(ratio * dim, dim, rng, dtype)

    def forward(self, g: Tensor) -> Tensor:
        return g + self.fc2(T.gelu(self.fc1(self.norm(g))))
