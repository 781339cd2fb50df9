"""Central finite-difference oracle for tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import Rng
from .tensor import NonFiniteError, Tensor, no_grad


@dataclass
class GradReport:
    max_rel_error: dict[str, float]
    points: int
    tol: float
    failure: str | None = None
    worst: dict[str, tuple] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.failure is not None:
            return False
        return all(e < self.tol for e in self.max_rel_error.values())

    @property
    def worst_error(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = self.failure or f"max rel err {self.worst_error:.3e}"
        return f"{status}: {detail} over {self.points} points (tol {self.tol:g})"


def rel_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from blowing up."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _central(f, flat: np.ndarray, i: int, eps: float) -> float:
    orig = flat[i]
    try:
        with no_grad():
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
    finally:
        flat[i] = orig
    return (fp - fm) / (2 * eps)


def grad_check(f: Callable[[], Tensor], params: dict[str, Tensor] | Sequence[Tensor],
               eps: float = 1e-4, tol: float = 1e-4, max_points: int | None = 40,
               rng: Rng | None = None, richardson: bool = True) -> GradReport:
    """Compare ``f``'s tape gradients against central differences.

    ``f`` is re-evaluated with each probed coordinate nudged by ``±eps``; at
    most ``max_points`` coordinates per parameter are probed (chosen by ``rng``).
    With ``richardson`` the steps ``eps`` and ``eps/2`` are combined, which
    cancels the O(eps²) truncation term.
    """
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        if p.dtype != np.float64:
            raise TypeError("grad_check needs 64-bit parameters")
        p.grad = None
    rng = rng or Rng(0)
    try:
        out = f()
        out.backward()
    except NonFiniteError as exc:
        return GradReport({}, 0, tol, failure=f"tape evaluation failed: {exc}")
    # differences below what rounding in f can resolve at this step are not counted
    floor = max(1e-6, 1e-10 * max(1.0, abs(out.item())) / eps)

    errors: dict[str, float] = {}
    worst: dict[str, tuple] = {}
    points = 0
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_points is not None and flat.size > max_points:
            idx = np.sort(rng.permutation(flat.size)[:max_points])
        err = 0.0
        for i in idx:
            try:
                numeric = _central(f, flat, int(i), eps)
                if richardson:
                    numeric = (4 * _central(f, flat, int(i), eps / 2) - numeric) / 3
            except NonFiniteError as exc:
                return GradReport(errors, points, tol, failure=f"{name}[{i}]: {exc}")
            if not np.isfinite(numeric):
                return GradReport(errors, points, tol, failure=f"{name}[{i}]: non-finite probe")
            e = rel_error(float(analytic.reshape(-1)[i]), numeric, floor)
            if e >= err:
                err = e
                worst[name] = (int(i), float(analytic.reshape(-1)[i]), numeric)
            points += 1
        errors[name] = err
    return GradReport(errors, points, tol, worst=worst)
