import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocavit.attention import AttentionWeights, gcwa, ggca, msa, wsa_grid
from cocavit.complexity import (CSV_COLUMNS, CostParams, closed_form, coca_minus_wsa, coca_overhead,
                                linear_scaling_check, measure)
from cocavit.numeric import Linear, Rng, Tensor


def test_closed_form_examples():
    assert closed_form("WSA", CostParams(4, 4, 8, M_side=2)) == 5120
    assert closed_form("GGCA", CostParams(4, 4, 8, M_side=2, K=4)) == 4352
    assert closed_form("MSA", CostParams(2, 2, 1, M_side=1, K=0)) == 4 * 4 + 2 * 16


def test_closed_form_errors():
    with pytest.raises(ValueError):
        closed_form("SWIN", CostParams(4, 4, 8, 2))
    with pytest.raises(ValueError):
        CostParams(5, 5, 8, M_side=2)
    with pytest.raises(ValueError):
        CostParams(4, 4, 8, M_side=2, K=-1)


def test_coca_identity_sweep():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 9))
        p = CostParams(m * int(rng.integers(1, 9)), m * int(rng.integers(1, 9)), int(rng.integers(1, 512)),
                       m, int(rng.integers(0, 64)))
        assert closed_form("CoCA", p) == closed_form("GGCA", p) + closed_form("GCWA", p)
        assert closed_form("CoCA", p) - closed_form("WSA", p) == sum(coca_overhead(p).values())


def test_single_linear_counts_n_c_squared():
    lin = Linear(12, 12, Rng(0))
    report, _ = measure(lin, Tensor(np.ones((7, 12))))
    assert report.total_measured == 7 * 12 * 12
    assert report.rows[0].formula_macs == report.rows[0].measured_macs


def _isolated(kind, h, w, C, heads, m, K, B, seed):
    rng = Rng(seed)
    x = Tensor(rng.normal((B, h, w, C)))
    g = Tensor(rng.normal((B, K, C)))
    weights = AttentionWeights(C, heads, rng, window=None if kind in ("GGCA", "MSA") else m)
    fn = {"WSA": lambda: wsa_grid(x, weights), "GCWA": lambda: gcwa(x, g, weights),
          "GGCA": lambda: ggca(x, g, weights), "MSA": lambda: msa(x, weights)}[kind]
    report, _ = measure(fn)
    return report.total_measured, B * closed_form(kind, CostParams(h, w, C, m if kind in ("WSA", "GCWA") else 1, K))


@given(st.sampled_from(["WSA", "GGCA", "GCWA", "MSA"]), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(1, 3), st.integers(1, 4), st.integers(0, 5), st.integers(1, 2))
def test_measured_equals_closed_form(kind, nh, nw, m, heads, hd, K, B):
    measured, formula = _isolated(kind, nh * m, nw * m, heads * hd, heads, m, K, B, seed=nh + 7 * nw)
    assert measured == formula


def test_ggca_at_nano_shape():
    measured, formula = _isolated("GGCA", 4, 4, 8, 2, 1, 4, 1, 0)
    assert measured == formula == 4 * 4 * 64 + 2 * 16 * 64 + 2 * 4 * 20 * 8


def test_overhead_scaling_rules():
    base = coca_overhead(CostParams(8, 8, 16, 4, 4))
    doubled = coca_overhead(CostParams(16, 16, 16, 4, 4))
    more_k = coca_overhead(CostParams(8, 8, 16, 4, 8))
    assert doubled["coordinator_patch"] == 4 * base["coordinator_patch"]
    assert more_k["coordinator_patch"] == 2 * base["coordinator_patch"]
    assert coca_minus_wsa(8, 8, 16, 4, 4) == sum(base.values())


def test_coca_over_msa_vanishes_with_resolution():
    ratios = [closed_form("CoCA", p) / closed_form("MSA", p)
              for p in (CostParams(s, s, 64, 7, 16) for s in (14, 28, 56, 112, 224))]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] < 0.01


def test_linear_scaling_check():
    rep = linear_scaling_check((8, 16, 32), C=16, K=4, M_side=4)
    assert rep.exact and rep.linear
    assert rep.slope == pytest.approx(2 * 16**2 + 4 * 4 * 16)
    assert "R2" in rep.to_table()
    with pytest.raises(ValueError):
        linear_scaling_check((8, 16))


def test_report_csv_and_folding():
    w = AttentionWeights(8, 2, Rng(0), window=2)
    w._local = "attn"
    report, _ = measure(wsa_grid, Tensor(np.ones((1, 4, 4, 8))), w)
    lines = report.to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 2 and lines[1].startswith("attn,WSA,4,4,8,4,0,")
    assert report.notes == []
    assert "TOTAL" in report.to_table()
