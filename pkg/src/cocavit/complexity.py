"""Closed-form attention cost model and measured-vs-formula reporting.

Costs are in MACs. Only matmul/conv multiply-accumulates count; biases,
softmax, norms and activations are free. ``T`` is the number of tokens in
one window (window side squared).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

KINDS = ("MSA", "WSA", "GGCA", "GCWA", "CoCA")


@dataclass(frozen=True)
class CostParams:
    h: int
    w: int
    C: int
    M_side: int = 7
    K: int = 16

    def __post_init__(self):
        if min(self.h, self.w, self.C, self.M_side) < 1 or self.K < 0:
            raise ValueError(f"invalid cost parameters {self}")
        if (self.h * self.w) % self.T:
            raise ValueError(f"h*w={self.h * self.w} not divisible by T={self.T}")

    @property
    def T(self) -> int:
        return self.M_side ** 2

    @property
    def hw(self) -> int:
        return self.h * self.w


def closed_form(kind: str, p: CostParams) -> int:
    hw, C, K, T = p.hw, p.C, p.K, p.T
    if kind == "MSA":
        return 4 * hw * C**2 + 2 * hw**2 * C
    if kind == "WSA":
        return 4 * hw * C**2 + 2 * T * hw * C
    if kind == "GGCA":
        return 4 * K * C**2 + 2 * hw * C**2 + 2 * K * (K + hw) * C
    if kind == "GCWA":
        return 4 * hw * C**2 + 2 * K * C**2 + 2 * T * hw * C + 2 * K * hw * C
    if kind == "CoCA":
        return 6 * (K + hw) * C**2 + (2 * K**2 + 2 * T * hw + 4 * K * hw) * C
    raise ValueError(f"unknown attention kind {kind!r}; expected one of {KINDS}")


def merge_macs(K: int, d_in: int, d_out: int) -> int:
    """Token merging: key/value/residual projections plus a K×K attention."""
    return 3 * K * d_in * d_out + 2 * K * K * d_out


def coca_overhead(p: CostParams) -> dict[str, int]:
    """Split closed-form CoCA minus WSA into its named terms."""
    hw, C, K = p.hw, p.C, p.K
    return {
        "patch_kv": 2 * hw * C**2,
        "coordinator_proj": 6 * K * C**2,
        "coordinator_self": 2 * K**2 * C,
        "coordinator_patch": 4 * K * hw * C,
    }


# reporting ------------------------------------------------------------------

CSV_COLUMNS = ("layer", "kind", "h", "w", "C", "T", "K", "formula_macs", "measured_macs", "rel_delta")


@dataclass
class CostRow:
    layer: str
    kind: str
    formula_macs: int
    measured_macs: int
    h: int | None = None
    w: int | None = None
    C: int | None = None
    T: int | None = None
    K: int | None = None

    @property
    def abs_delta(self) -> int:
        return self.measured_macs - self.formula_macs

    @property
    def rel_delta(self) -> float:
        if self.formula_macs == 0:
            return 0.0 if self.measured_macs == 0 else float("inf")
        return self.abs_delta / self.formula_macs


@dataclass
class CostReport:
    rows: list[CostRow]
    total_measured: int
    notes: list[str] = field(default_factory=list)

    @property
    def total_formula(self) -> int:
        return sum(r.formula_macs for r in self.rows)

    def total_by_prefix(self, prefix: str) -> int:
        return sum(r.measured_macs for r in self.rows if r.layer.startswith(prefix))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r.layer, r.kind, _blank(r.h), _blank(r.w), _blank(r.C), _blank(r.T),
                             _blank(r.K), r.formula_macs, r.measured_macs, f"{r.rel_delta:.6g}"])
        return buf.getvalue()

    def to_table(self) -> str:
        width = max([len(r.layer) for r in self.rows] + [5])
        lines = [f"{'layer':<{width}}  {'kind':<6} {'formula':>14} {'measured':>14} {'rel_delta':>10}"]
        for r in self.rows:
            lines.append(f"{r.layer:<{width}}  {r.kind:<6} {r.formula_macs:>14,} "
                         f"{r.measured_macs:>14,} {r.rel_delta:>10.3g}")
        lines.append(f"{'TOTAL':<{width}}  {'':<6} {self.total_formula:>14,} {self.total_measured:>14,}")
        lines.extend(f"# {n}" for n in self.notes)
        return "\n".join(lines)


def _blank(v):
    return "" if v is None else v


COMPOSITE_KINDS = ("WSA", "GGCA", "GCWA", "MSA", "merge")


def build_report(counter) -> CostReport:
    """Turn a finished :class:`MacCounter` into per-layer rows.

    Attention layers (and token mergers) are reported whole against their
    closed form; leaf linears/convs nested inside them are folded in.
    """
    composite = [r for r in counter.layers if r.kind in COMPOSITE_KINDS]
    prefixes = [r.layer + "." for r in composite]
    merged: dict[str, CostRow] = {}
    for rec in counter.layers:
        if rec.kind not in COMPOSITE_KINDS and any(rec.layer.startswith(p) for p in prefixes):
            continue
        if rec.layer in merged:  # a layer applied more than once in one forward
            merged[rec.layer].formula_macs += rec.formula_macs
            continue
        merged[rec.layer] = CostRow(rec.layer, rec.kind, rec.formula_macs, counter.under(rec.layer),
                                    rec.h, rec.w, rec.C, rec.T, rec.K)
    rows = list(merged.values())
    covered = sum(r.measured_macs for r in rows)
    notes = []
    if covered != counter.total:
        notes.append(f"{counter.total - covered} MACs recorded outside any registered layer")
    return CostReport(rows, counter.total, notes)


def fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R² of y against x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid**2).sum()) / ss_tot
    return float(slope), float(intercept), r2


def measure(fn, *args, **kwargs) -> tuple[CostReport, object]:
    """Run ``fn`` once under a fresh MAC counter; return (report, fn's result)."""
    from .numeric import no_grad
    from .numeric.instrument import count_macs

    with no_grad(), count_macs() as counter:
        out = fn(*args, **kwargs)
    return build_report(counter), out


@dataclass
class ScalingPoint:
    h: int
    w: int
    measured_overhead: int
    formula_overhead: int
    coordinator_patch: int  # measured overhead minus the 2hwC² and hw-independent terms
    four_k_hw_c: int


@dataclass
class ScalingReport:
    C: int
    K: int
    M_side: int
    points: list[ScalingPoint]
    slope: float
    intercept: float
    r2: float

    @property
    def exact(self) -> bool:
        return all(p.measured_overhead == p.formula_overhead
                   and p.coordinator_patch == p.four_k_hw_c for p in self.points)

    @property
    def linear(self) -> bool:
        return self.r2 > 0.999

    def to_table(self) -> str:
        lines = [f"C={self.C} K={self.K} M_side={self.M_side}",
                 f"{'h':>4} {'w':>4} {'measured':>12} {'formula':>12} {'4KhwC part':>12} {'4KhwC':>12}"]
        for p in self.points:
            lines.append(f"{p.h:>4} {p.w:>4} {p.measured_overhead:>12,} {p.formula_overhead:>12,} "
                         f"{p.coordinator_patch:>12,} {p.four_k_hw_c:>12,}")
        lines.append(f"fit vs hw: slope={self.slope:.6g} intercept={self.intercept:.6g} R2={self.r2:.12f}")
        return "\n".join(lines)


def coca_minus_wsa(h: int, w: int, C: int, K: int, M_side: int, heads: int = 1, seed: int = 0) -> int:
    """Measured MACs of one GGCA+GCWA pass minus one WSA pass on the same grid."""
    from .attention import AttentionWeights, gcwa, ggca, wsa_grid
    from .numeric import Rng, Tensor

    rng = Rng(seed)
    x = Tensor(rng.normal((1, h, w, C)))
    g = Tensor(rng.normal((1, K, C)))
    glob = AttentionWeights(C, heads, rng)
    local = AttentionWeights(C, heads, rng, window=M_side)
    local._local = "gcwa"
    glob._local = "ggca"

    def coca():
        return gcwa(x, ggca(x, g, glob), local)

    coca_report, _ = measure(coca)
    wsa_report, _ = measure(wsa_grid, x, local)
    return coca_report.total_measured - wsa_report.total_measured


def linear_scaling_check(sides=(8, 16, 32), C: int = 32, K: int = 16, M_side: int = 4,
                         heads: int = 1) -> ScalingReport:
    """Sweep square grids and check the coordinator overhead against its closed form.

    The measured overhead is exact against closed_form(CoCA) - closed_form(WSA);
    removing the patch key/value projections (2hwC²) and the hw-independent
    terms leaves exactly the 4KhwC coordinator-patch interaction.
    """
    if len(sides) < 3:
        raise ValueError("need at least 3 resolution points")
    points = []
    for s in sides:
        p = CostParams(s, s, C, M_side, K)
        measured = coca_minus_wsa(s, s, C, K, M_side, heads)
        formula = closed_form("CoCA", p) - closed_form("WSA", p)
        terms = coca_overhead(p)
        isolated = measured - terms["patch_kv"] - terms["coordinator_proj"] - terms["coordinator_self"]
        points.append(ScalingPoint(s, s, measured, formula, isolated, terms["coordinator_patch"]))
    slope, intercept, r2 = fit_line([p.h * p.w for p in points], [p.measured_overhead for p in points])
    return ScalingReport(C, K, M_side, points, slope, intercept, r2)
