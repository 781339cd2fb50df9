"""Module base class and the leaf layers (Linear, LayerNorm, Conv2d)."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .instrument import record_layer, scope
from .rng import Rng
from .tensor import Tensor

DTYPES = {"f32": np.float32, "f64": np.float64}


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Attribute-registered parameters and submodules, torch-style.

    ``__call__`` opens a scope named after the attribute the module was bound
    to, so MAC counts and non-finite diagnostics carry dotted layer paths.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_local", "")

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
            self._modules.pop(name, None)
        elif isinstance(value, Module):
            object.__setattr__(value, "_local", name)
            self._modules[name] = value
            self._params.pop(name, None)
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        with scope(self._local):
            return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, m in self._modules.items():
            yield from m.named_modules(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.data.dtype)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    """``y = x W + b`` with W stored as [in, out]."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, dtype=np.float64, bias: bool = True):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = parameter(rng.trunc_normal((d_in, d_out), dtype=dtype))
        self.bias = parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        n = x.size // x.shape[-1]
        record_layer("linear", n * self.d_in * self.d_out)
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float64, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = parameter(np.ones(dim, dtype=dtype))
        self.bias = parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


class LayerNorm2d(LayerNorm):
    """LayerNorm over the channel axis of an NCHW map."""

    def forward(self, x: Tensor) -> Tensor:
        y = T.layer_norm(x.transpose(0, 2, 3, 1), self.weight, self.bias, self.eps)
        return y.transpose(0, 3, 1, 2)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: Rng, stride: int = 1,
                 padding: int | None = None, groups: int = 1, dtype=np.float64, bias: bool = True):
        super().__init__()
        if c_in % groups or c_out % groups:
            raise ValueError(f"channels {c_in}->{c_out} not divisible by groups={groups}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.groups = stride, groups
        self.padding = k // 2 if padding is None else padding
        self.weight = parameter(rng.trunc_normal((c_out, c_in // groups, k, k), dtype=dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        B, _, H, W = x.shape
        ho = T.conv_output_size(H, self.k, self.stride, self.padding)
        wo = T.conv_output_size(W, self.k, self.stride, self.padding)
        record_layer("conv", B * ho * wo * self.c_out * (self.c_in // self.groups) * self.k ** 2)
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)
