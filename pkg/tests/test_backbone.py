import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocavit.backbone import (COCA_BLOCK, WSA_BLOCK, ConfigError, ConvGLU, MBConv, ModelConfig, build_model,
                              get_variant, glu_hidden, plan_blocks)
from cocavit.numeric import NonFiniteError, Rng, Tensor
from conftest import assert_bitwise


def test_plan_examples():
    plan = plan_blocks([12], [3])[0]
    assert [i + 1 for i, k in enumerate(plan) if k == COCA_BLOCK] == [3, 6, 9, 12]
    assert plan.count(WSA_BLOCK) == 8
    assert plan_blocks([2], [2]) == [[WSA_BLOCK, COCA_BLOCK]]
    assert plan_blocks([5], [-1]) == [[WSA_BLOCK] * 5]
    with pytest.raises(ConfigError):
        plan_blocks([2], [0])


@given(st.lists(st.tuples(st.integers(1, 20), st.sampled_from([-1, 1, 2, 3, 4, 7])), min_size=1, max_size=4))
def test_plan_counts(stages):
    depths, freqs = [d for d, _ in stages], [f for _, f in stages]
    plan = plan_blocks(depths, freqs)
    for kinds, d, f in zip(plan, depths, freqs):
        assert len(kinds) == d
        assert kinds.count(COCA_BLOCK) == (0 if f == -1 else d // f)


def test_variant_geometry():
    assert get_variant("11M").stage_dims == [72, 96, 192, 336]
    assert get_variant("11M").depths == [2, 2, 12, 2]
    c28 = get_variant("28M")
    assert c28.depths == [2, 2, 15, 2] and c28.stage_dims == [96, 144, 288, 432]
    with pytest.raises(ConfigError):
        get_variant("huge")


def test_variants_are_copies():
    get_variant("nano").heads.append(9)
    assert get_variant("nano").heads == [2, 2, 2]


@pytest.mark.parametrize("name", ["11M", "21M"])
def test_coca_block_count(name):
    model = build_model(get_variant(name), Rng(0), np.float32)
    assert [s.kinds.count(COCA_BLOCK) for s in model.stages] == [1, 4, 0]
    assert model.ggca_count() == 5


def test_config_errors_name_the_stage():
    bad = ModelConfig(conv_dim=8, heads=[2, 2, 2], depths=[1, 1, 2, 1], mlp_ratios=[5, 4, 3], windows=[4, 4, 4],
                      interaction=[2, 2, -1], head_dim=4, dims=[8, 8, 9, 8])
    with pytest.raises(ConfigError) as exc:
        bad.validate()
    assert exc.value.stage == "stage3"
    with pytest.raises(ConfigError, match="interaction"):
        ModelConfig(8, [2, 2, 2], [1, 1, 2, 1], [5, 4, 3], [4, 4, 4], [2, 0, -1], head_dim=4).validate()
    with pytest.raises(ConfigError, match="increase"):
        ModelConfig(8, [2, 2, 2], [1, 1, 2, 1], [3, 4, 5], [4, 4, 4], [2, 2, -1], head_dim=4).validate()


def test_mbconv_zero_projection_is_identity():
    blk = MBConv(8, Rng(0))
    blk.project.weight.data[:] = 0
    blk.project.bias.data[:] = 0
    x = Rng(1).normal((2, 8, 5, 5))
    assert_bitwise(blk(Tensor(x)).data, x)


def test_mbconv_keeps_shape_at_11m_scale():
    blk = MBConv(72, Rng(0), dtype=np.float32)
    assert blk(Tensor(np.zeros((1, 72, 56, 56), np.float32))).shape == (1, 72, 56, 56)


def test_mbconv_interior_shift_equivariance():
    blk = MBConv(8, Rng(0))
    x = Rng(2).normal((1, 8, 10, 10))
    shifted = np.roll(x, 1, axis=3)  # circular, so the SE pooling sees the same statistics
    a, b = blk(Tensor(x)).data, blk(Tensor(shifted)).data
    np.testing.assert_allclose(b[..., 2:-2, 3:-1], a[..., 2:-2, 2:-2], atol=1e-12)


def test_convglu_zero_gate_is_identity():
    glu = ConvGLU(8, 4, Rng(0))
    glu.dw.weight.data[:] = 0
    glu.dw.bias.data[:] = 0
    x = Rng(1).normal((1, 4, 4, 8))
    assert_bitwise(glu(Tensor(x)).data, x)


def test_convglu_widths():
    assert glu_hidden(96, 5) == 320
    glu = ConvGLU(96, 5, Rng(0), dtype=np.float32)
    assert glu.fc1.weight.shape == (96, 640) and glu.fc2.weight.shape == (320, 96)
    with pytest.raises(ConfigError):
        ConvGLU(1, 1, Rng(0))


def nano_images(B=2, seed=0):
    return Tensor(Rng(seed).normal((B, 3, 32, 32)))


def test_nano_forward_shapes():
    model = build_model(get_variant("nano"), Rng(42))
    res = model(nano_images())
    assert res.logits.shape == (2, 4)
    assert res.coords.shape == (2, 4, 8)
    assert res.anchor is not None and res.final_coords.shape == (2, 4, 8)


def test_coordinator_threading_11m():
    cfg = get_variant("11M")
    model = build_model(cfg, Rng(0), np.float32)
    res = model(Tensor(np.zeros((1, 3, 224, 224), np.float32)))
    assert res.coord_shapes == [None, (1, 16, 96), (1, 16, 192), (1, 16, 336)]
    assert [tuple(s) for s in res.stage_shapes] == [(1, 72, 56, 56), (1, 28, 28, 96), (1, 14, 14, 192),
                                                    (1, 7, 7, 336)]


def test_identical_images_identical_logits():
    x = nano_images(1).data
    res = build_model(get_variant("nano"), Rng(1))(Tensor(np.concatenate([x, x])))
    assert_bitwise(res.logits.data[0], res.logits.data[1])


def test_forward_is_deterministic():
    a = build_model(get_variant("nano"), Rng(7))(nano_images()).logits.data
    b = build_model(get_variant("nano"), Rng(7))(nano_images()).logits.data
    assert_bitwise(a, b)


def test_masked_coordinators_match_pure_window_path():
    model = build_model(get_variant("nano"), Rng(3))
    x = nano_images(seed=4)
    masked = model(x, coord_mask=True).logits.data
    plain = model(x, use_coordinators=False).logits.data
    np.testing.assert_allclose(masked, plain, rtol=0, atol=1e-12)
    assert not np.allclose(model(x).logits.data, plain, rtol=0, atol=1e-12)


def test_forward_never_mutates_weights():
    model = build_model(get_variant("nano"), Rng(3))
    before = model.state_dict()
    model(nano_images())
    for k, v in model.state_dict().items():
        assert_bitwise(v, before[k])


def test_non_finite_activation_names_layer():
    x = nano_images(1).data
    x[0, 0, 0, 0] = np.inf
    with pytest.raises(NonFiniteError, match="stem"):
        build_model(get_variant("nano"), Rng(0))(Tensor(x))


def test_bad_image_size():
    with pytest.raises(ValueError):
        build_model(get_variant("nano"), Rng(0))(Tensor(np.zeros((1, 3, 40, 40))))


def test_no_coordinator_config_builds_pure_window_model():
    cfg = get_variant("nano")
    cfg.coordinators = False
    model = build_model(cfg, Rng(0))
    res = model(nano_images())
    assert res.coords is None and res.anchor is None and model.generator is None
