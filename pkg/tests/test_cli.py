import numpy as np
import pytest

from cocavit import cli
from cocavit.numeric import tensor as T


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_shapes_nano(capsys):
    code, out, _ = run(capsys, "shapes")
    assert code == 0
    assert "plan [WSA]" in out and "plan [WSA, CoCA]" in out
    assert "coordinators (1, 4, 8)" in out


def test_shapes_28m(capsys):
    code, out, _ = run(capsys, "shapes", "--variant", "28M")
    assert code == 0
    assert "depths [2, 2, 15, 2]" in out and "dims [96, 144, 288, 432]" in out


def test_malformed_config_exits_2_naming_stage(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("variant = nano\ndims = [8, 8, 9, 8]\n")
    code, _, err = run(capsys, "shapes", "--config", str(cfg))
    assert code == 2 and "stage3" in err
    cfg.write_text("variant = nano\nwindow = [4, 4, 4]\n")
    code, _, err = run(capsys, "params", "--config", str(cfg))
    assert code == 2 and "unknown" in err


def test_unknown_flag_is_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["shapes", "--sead", "1"])
    assert exc.value.code == 2


def test_params_report(capsys, tmp_path):
    code, out, _ = run(capsys, "params", "--variant", "11M", "--out", str(tmp_path / "p.txt"))
    assert code == 0 and "published 11.4M" in out
    assert (tmp_path / "p.txt").read_text().strip() == out.strip()


def test_flops_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "flops", "--out", str(tmp_path / "f.csv"))
    assert code == 0 and "GMACs" in out
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "layer,kind,h,w,C,T,K,formula_macs,measured_macs,rel_delta"
    assert any(",GGCA," in r for r in rows) and any(",GCWA," in r for r in rows)


def test_gradcheck_lists_every_block(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0
    for name in ("WSA", "GGCA", "GCWA", "ConvGLU", "MBConv", "generator", "merger", "anchor-loss", "nano-model"):
        assert f"\n{name} " in out
    assert "all blocks pass" in out


def test_gradcheck_detects_corrupted_backward(capsys, monkeypatch):
    monkeypatch.setattr(T, "_gelu_grad", lambda x: np.zeros_like(x))
    code, out, _ = run(capsys, "gradcheck")
    assert code == 1 and "FAIL" in out


def test_train_toy_is_deterministic(capsys, tmp_path):
    args = ["train-toy", "--steps", "6", "--seed", "3"]
    code, a, _ = run(capsys, *args, "--out", str(tmp_path / "a.ckpt"), "--log", str(tmp_path / "a.csv"))
    assert code == 0
    code, b, _ = run(capsys, *args, "--out", str(tmp_path / "b.ckpt"), "--log", str(tmp_path / "b.csv"))
    assert a.replace("a.ckpt", "") == b.replace("b.ckpt", "")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_train_toy_size_guard(capsys):
    code, _, err = run(capsys, "train-toy", "--variant", "11M", "--steps", "1")
    assert code == 2 and "--override-size-guard" in err


def test_ablate(capsys):
    code, out, _ = run(capsys, "ablate", "--steps", "3", "--no-coordinators", "--uniform-mlp-ratio")
    assert code == 0
    assert "baseline" in out and "no-coordinators+uniform-mlp-ratio" in out
