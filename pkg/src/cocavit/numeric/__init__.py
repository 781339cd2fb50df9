from .gradcheck import GradReport, grad_check
from .instrument import MacCounter, count_macs, scope
from .nn import DTYPES, Conv2d, LayerNorm, LayerNorm2d, Linear, Module, ModuleList, parameter
from .rng import Rng
from .tensor import NonFiniteError, ShapeError, Tensor, no_grad

__all__ = [
    "Conv2d", "DTYPES", "GradReport", "LayerNorm", "LayerNorm2d", "Linear", "MacCounter",
    "Module", "ModuleList", "NonFiniteError", "Rng", "ShapeError", "Tensor", "count_macs",
    "grad_check", "no_grad", "parameter", "scope",
]
