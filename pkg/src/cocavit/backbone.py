"""Model configuration, block planning, and assembly of the hybrid backbone.

Layout: conv stem (to H/4) -> MBConv stage -> three transformer stages of
WSA / CoCA blocks at H/8, H/16, H/32 -> norm -> GAP -> linear head.
Coordinators are generated once from the stage-2 input and carried across
stage boundaries by token merging.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

import numpy as np

from .attention import AttentionWeights, CoordinatorMlp, gcwa, ggca, wsa_grid
from .coordinators import (AnchorLossTerms, CoordinatorGenerator, SqueezeExcite, TokenMerge,
                           anchor_loss)
from .numeric import Conv2d, LayerNorm, LayerNorm2d, Linear, Module, ModuleList, Rng
from .numeric import tensor as T
from .numeric.instrument import scope
from .numeric.tensor import Tensor

WSA_BLOCK = "WSA"
COCA_BLOCK = "CoCA"


class ConfigError(ValueError):
    def __init__(self, message: str, stage: str | None = None):
        self.stage = stage
        super().__init__(f"{stage}: {message}" if stage else message)


@dataclass
class ModelConfig:
    conv_dim: int
    heads: list[int]
    depths: list[int]
    mlp_ratios: list[float]
    windows: list[int]
    interaction: list[int]
    head_dim: int = 24
    num_classes: int = 1000
    image_size: int = 224
    num_coords: int = 16
    dims: list[int] | None = None
    mbconv_expand: int = 4
    se_reduction: int = 4
    coord_mlp_ratio: int = 3
    coordinators: bool = True
    name: str = "custom"

    @property
    def stage_dims(self) -> list[int]:
        return [self.conv_dim] + [h * self.head_dim for h in self.heads]

    def validate(self) -> "ModelConfig":
        if len(self.depths) != 4:
            raise ConfigError(f"depths needs 4 entries, got {self.depths}")
        for name in ("heads", "mlp_ratios", "windows", "interaction"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{name} needs one entry per transformer stage (3), got {getattr(self, name)}")
        if self.conv_dim < 1 or self.head_dim < 1 or self.num_classes < 1:
            raise ConfigError("conv_dim, head_dim and num_classes must be positive")
        if min(self.depths) < 1:
            raise ConfigError(f"every stage needs at least one block, got depths {self.depths}")
        if self.dims is not None:
            if len(self.dims) != 4:
                raise ConfigError(f"dims needs 4 entries, got {self.dims}")
            if self.dims[0] != self.conv_dim:
                raise ConfigError(f"dim {self.dims[0]} != conv_dim {self.conv_dim}", "stage1")
            for s in range(3):
                want = self.heads[s] * self.head_dim
                if self.dims[s + 1] != want:
                    raise ConfigError(f"dim {self.dims[s + 1]} != heads {self.heads[s]} x head_dim "
                                      f"{self.head_dim} = {want}", f"stage{s + 2}")
        for s, f in enumerate(self.interaction):
            if f == 0 or f < -1:
                raise ConfigError(f"interaction must be -1 or a positive integer, got {f}", f"stage{s + 2}")
        for s, m in enumerate(self.windows):
            if m < 1:
                raise ConfigError(f"window side must be positive, got {m}", f"stage{s + 2}")
        if any(b > a for a, b in zip(self.mlp_ratios, self.mlp_ratios[1:])):
            raise ConfigError(f"mlp_ratios must not increase across stages, got {self.mlp_ratios}")
        if self.conv_dim * self.mbconv_expand % self.se_reduction:
            raise ConfigError("MBConv expanded width not divisible by SE reduction", "stage1")
        if self.stage_dims[1] % self.se_reduction:
            raise ConfigError("generator channels not divisible by SE reduction", "stage2")
        if self.num_coords < 1:
            raise ConfigError(f"num_coords must be positive, got {self.num_coords}")
        if self.image_size % 32:
            raise ConfigError(f"image_size {self.image_size} is not a multiple of 32")
        return self

    def snapshot(self) -> str:
        """Flat ``key = value`` text, readable by :func:`cocavit.config.parse_model_config`."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, list):
                v = "[" + ", ".join(_fmt(x) for x in v) + "]"
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


VARIANTS: dict[str, ModelConfig] = {
    "11M": ModelConfig(conv_dim=72, heads=[4, 8, 14], depths=[2, 2, 12, 2], mlp_ratios=[5, 4, 3],
                       windows=[7, 7, 7], interaction=[2, 3, -1], name="11M"),
    "21M": ModelConfig(conv_dim=96, heads=[6, 12, 18], depths=[2, 2, 12, 2], mlp_ratios=[5, 4, 3],
                       windows=[7, 7, 7], interaction=[2, 3, -1], name="21M"),
    "28M": ModelConfig(conv_dim=96, heads=[6, 12, 18], depths=[2, 2, 15, 2], mlp_ratios=[5, 4, 3],
                       windows=[7, 7, 7], interaction=[2, 3, -1], name="28M"),
    "nano": ModelConfig(conv_dim=8, heads=[2, 2, 2], depths=[1, 1, 2, 1], mlp_ratios=[5, 4, 3],
                        windows=[4, 4, 4], interaction=[2, 2, -1], head_dim=4, num_classes=4,
                        image_size=32, num_coords=4, name="nano"),
}

# Published totals for the named variants (millions of parameters, GMACs at 224).
PUBLISHED_PARAMS_M = {"11M": 11.4, "21M": 20.6, "28M": 27.8}
PUBLISHED_GFLOPS = {"11M": 2.2, "21M": 4.1, "28M": 4.9}


def get_variant(name: str) -> ModelConfig:
    try:
        return copy.deepcopy(VARIANTS[name])
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}") from None


def plan_blocks(depths: list[int], interaction: list[int]) -> list[list[str]]:
    """Block kinds per transformer stage.

    With frequency f > 0, blocks whose 1-based index is divisible by f are
    CoCA blocks; f = -1 means a stage of plain WSA blocks.
    """
    if len(depths) != len(interaction):
        raise ConfigError(f"depths {depths} and interaction {interaction} differ in length")
    plan = []
    for s, (depth, f) in enumerate(zip(depths, interaction)):
        if f == 0 or f < -1:
            raise ConfigError(f"interaction must be -1 or positive, got {f}", f"stage{s + 2}")
        if f == -1:
            plan.append([WSA_BLOCK] * depth)
        else:
            plan.append([COCA_BLOCK if i % f == 0 else WSA_BLOCK for i in range(1, depth + 1)])
    return plan


# blocks ---------------------------------------------------------------------

def to_nchw(x: Tensor) -> Tensor:
    return x.transpose(0, 3, 1, 2)


def to_nhwc(x: Tensor) -> Tensor:
    return x.transpose(0, 2, 3, 1)


class MBConv(Module):
    """Inverted residual: norm -> 1x1 expand -> GELU -> dw3x3 -> GELU -> SE -> 1x1 project, + x."""

    def __init__(self, dim: int, rng: Rng, expand: int = 4, se_reduction: int = 4, dtype=np.float64):
        super().__init__()
        hidden = dim * expand
        self.norm = LayerNorm2d(dim, dtype)
        self.expand = Conv2d(dim, hidden, 1, rng, dtype=dtype)
        self.dw = Conv2d(hidden, hidden, 3, rng, groups=hidden, dtype=dtype)
        self.se = SqueezeExcite(hidden, rng, se_reduction, dtype)
        self.project = Conv2d(hidden, dim, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = T.gelu(self.expand(self.norm(x)))
        y = self.se(T.gelu(self.dw(y)))
        return x + self.project(y)


def glu_hidden(dim: int, ratio: float) -> int:
    """Width of each GLU half: two thirds of ratio*dim, so the pair costs what a ratio*dim MLP would."""
    return int(2 * ratio * dim / 3)


class ConvGLU(Module):
    """Gated feed-forward on a patch grid; the gate half passes a depthwise 3x3 conv and GELU."""

    def __init__(self, dim: int, ratio: float, rng: Rng, dtype=np.float64):
        super().__init__()
        hidden = glu_hidden(dim, ratio)
        if hidden < 1:
            raise ConfigError(f"mlp ratio {ratio} gives an empty GLU for dim {dim}")
        self.hidden = hidden
        self.norm = LayerNorm(dim, dtype)
        self.fc1 = Linear(dim, 2 * hidden, rng, dtype)
        self.dw = Conv2d(hidden, hidden, 3, rng, groups=hidden, dtype=dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        y = self.fc1(self.norm(x))
        value, gate = y[..., :self.hidden], y[..., self.hidden:]
        gate = T.gelu(to_nhwc(self.dw(to_nchw(gate))))
        return x + self.fc2(value * gate)


class WSABlock(Module):
    kind = WSA_BLOCK

    def __init__(self, dim: int, heads: int, window: int, ratio: float, rng: Rng, dtype=np.float64):
        super().__init__()
        self.attn = AttentionWeights(dim, heads, rng, window=window, dtype=dtype)
        self.mlp = ConvGLU(dim, ratio, rng, dtype)

    def forward(self, x: Tensor, g: Tensor | None, coord_mask: bool = False,
                use_coordinators: bool = True):
        return self.mlp(wsa_grid(x, self.attn)), g


class CoCABlock(Module):
    """GGCA (coordinators gather from all patches) -> coordinator MLP -> GCWA -> ConvGLU."""

    kind = COCA_BLOCK

    def __init__(self, dim: int, heads: int, window: int, ratio: float, rng: Rng,
                 coord_mlp_ratio: int = 3, dtype=np.float64):
        super().__init__()
        self.ggca = AttentionWeights(dim, heads, rng, window=None, dtype=dtype)
        self.coord_mlp = CoordinatorMlp(dim, coord_mlp_ratio, rng, dtype)
        self.gcwa = AttentionWeights(dim, heads, rng, window=window, dtype=dtype)
        self.mlp = ConvGLU(dim, ratio, rng, dtype)

    def forward(self, x: Tensor, g: Tensor | None, coord_mask: bool = False,
                use_coordinators: bool = True):
        if g is None or not use_coordinators:
            return self.mlp(wsa_grid(x, self.gcwa)), g
        g = self.coord_mlp(ggca(x, g, self.ggca))
        x = gcwa(x, g, self.gcwa, coord_mask=coord_mask)
        return self.mlp(x), g


class Stem(Module):
    def __init__(self, dim: int, rng: Rng, dtype=np.float64):
        super().__init__()
        self.conv1 = Conv2d(3, dim // 2, 3, rng, stride=2, dtype=dtype)
        self.norm = LayerNorm2d(dim // 2, dtype)
        self.conv2 = Conv2d(dim // 2, dim, 3, rng, stride=2, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(T.gelu(self.norm(self.conv1(x))))


class Downsample(Module):
    """3x3 stride-2 conv with channel change, then LayerNorm; NCHW in and out."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, dtype=np.float64):
        super().__init__()
        self.conv = Conv2d(d_in, d_out, 3, rng, stride=2, dtype=dtype)
        self.norm = LayerNorm2d(d_out, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.conv(x))


class TransformerStage(Module):
    def __init__(self, index: int, d_in: int, dim: int, heads: int, window: int, ratio: float,
                 kinds: list[str], config: ModelConfig, rng: Rng, dtype=np.float64):
        super().__init__()
        self.index, self.dim = index, dim
        self.downsample = Downsample(d_in, dim, rng, dtype)
        self.merge = None
        if config.coordinators and index > 2:
            self.merge = TokenMerge(d_in, dim, config.num_coords, heads, rng, dtype)
        blocks = []
        for kind in kinds:
            if kind == COCA_BLOCK and config.coordinators:
                blocks.append(CoCABlock(dim, heads, window, ratio, rng, config.coord_mlp_ratio, dtype))
            else:
                blocks.append(WSABlock(dim, heads, window, ratio, rng, dtype))
        self.blocks = ModuleList(blocks)

    @property
    def kinds(self) -> list[str]:
        return [b.kind for b in self.blocks]


@dataclass
class ForwardResult:
    logits: Tensor
    coords: Tensor | None  # as generated, before any block updates
    anchor: AnchorLossTerms | None
    final_coords: Tensor | None = None
    stage_shapes: list[tuple] = field(default_factory=list)
    coord_shapes: list[tuple | None] = field(default_factory=list)


class CoCAViT(Module):
    def __init__(self, config: ModelConfig, rng: Rng, dtype=np.float64):
        super().__init__()
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        dims = config.stage_dims
        plan = plan_blocks(config.depths[1:], config.interaction)
        self.plan = plan
        self.stem = Stem(dims[0], rng, dtype)
        self.stage1 = ModuleList([MBConv(dims[0], rng, config.mbconv_expand, config.se_reduction, dtype)
                                  for _ in range(config.depths[0])])
        self.generator = None
        if config.coordinators:
            self.generator = CoordinatorGenerator(dims[1], config.num_coords, rng,
                                                  reduction=config.se_reduction, dtype=dtype)
        self.stages = ModuleList([
            TransformerStage(s + 2, dims[s], dims[s + 1], config.heads[s], config.windows[s],
                             config.mlp_ratios[s], plan[s], config, rng, dtype)
            for s in range(3)
        ])
        self.norm = LayerNorm(dims[-1], dtype)
        self.head = Linear(dims[-1], config.num_classes, rng, dtype)

    def forward(self, images: Tensor, coord_mask: bool = False,
                use_coordinators: bool = True) -> ForwardResult:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected images [B, 3, H, W], got {images.shape}")
        if images.shape[2] % 32 or images.shape[3] % 32:
            raise ValueError(f"image extents {images.shape[2:]} must be multiples of 32")
        images = images if images.dtype == self.dtype else Tensor(images.data.astype(self.dtype))
        x = self.stem(images)
        with scope("stage1"):
            for blk in self.stage1:
                x = blk(x)
        shapes = [x.shape]
        coord_shapes: list[tuple | None] = [None]
        g = g0 = None
        anchor = None
        for stage in self.stages:
            with scope(f"stages.{stage._local}"):
                x = stage.downsample(x)
                if stage.index == 2 and self.generator is not None:
                    g = g0 = self.generator(x)
                    anchor = anchor_loss(g0)
                elif stage.merge is not None and g is not None:
                    g = stage.merge(g)
                x = to_nhwc(x)
                with scope("blocks"):
                    for blk in stage.blocks:
                        x, g = blk(x, g, coord_mask=coord_mask, use_coordinators=use_coordinators)
            shapes.append(x.shape)
            coord_shapes.append(None if g is None else g.shape)
            x = to_nchw(x)
        feats = self.norm(to_nhwc(x)).mean(axis=(1, 2))
        logits = self.head(feats)
        return ForwardResult(logits, g0, anchor, g, shapes, coord_shapes)

    def ggca_count(self) -> int:
        return sum(k == COCA_BLOCK for stage in self.stages for k in stage.kinds)


def build_model(config: ModelConfig, rng: Rng | None = None, dtype=np.float64) -> CoCAViT:
    return CoCAViT(config, rng or Rng(42), dtype)


def forward(model: CoCAViT, images: Tensor, **kwargs) -> ForwardResult:
    return model(images, **kwargs)


def param_breakdown(model: CoCAViT) -> dict[str, int]:
    """Parameter totals per top-level component."""
    out: dict[str, int] = {}
    for name, p in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] == "stages" else parts[0]
        out[key] = out.get(key, 0) + p.size
    return out
