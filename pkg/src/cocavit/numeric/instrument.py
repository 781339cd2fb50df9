"""MAC accounting and layer scoping for the tensor engine.

Counters live in context-local storage so concurrent forwards never share one.
"""
from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from dataclasses import dataclass, field

_scope: contextvars.ContextVar[tuple[str, ...]] = contextvars.ContextVar("scope", default=())
_counter: contextvars.ContextVar["MacCounter | None"] = contextvars.ContextVar("counter", default=None)


@dataclass
class LayerRecord:
    """Closed-form expectation a layer registers while being measured."""

    layer: str
    kind: str
    formula_macs: int
    h: int | None = None
    w: int | None = None
    C: int | None = None
    T: int | None = None
    K: int | None = None


@dataclass
class MacCounter:
    by_scope: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    layers: list[LayerRecord] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.by_scope.values())

    def under(self, prefix: str) -> int:
        """MACs recorded at ``prefix`` or any scope nested below it."""
        if not prefix:
            return self.total
        dotted = prefix + "."
        return sum(v for k, v in self.by_scope.items() if k == prefix or k.startswith(dotted))


def current_scope() -> str:
    return ".".join(p for p in _scope.get() if p)


@contextlib.contextmanager
def scope(name: str):
    token = _scope.set(_scope.get() + (name,))
    try:
        yield
    finally:
        _scope.reset(token)


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def counting() -> bool:
    return _counter.get() is not None


def record_macs(n: int) -> None:
    counter = _counter.get()
    if counter is not None:
        counter.by_scope[current_scope()] += int(n)


def record_layer(kind: str, formula_macs: int, **dims) -> None:
    counter = _counter.get()
    if counter is not None:
        counter.layers.append(LayerRecord(current_scope(), kind, int(formula_macs), **dims))
