import numpy as np
import pytest

from sadi.autodiff import Adam, Graph, Tensor
from sadi.config import LossWeights, TrainConfig
from sadi.errors import ContractError, DimensionError
from sadi.losses import generator_loss
from sadi.model import (
    CriticParams,
    GeneratorParams,
    coarse_stage,
    critic_forward,
    critic_stack,
    generate,
    inpaint,
    load_model,
    masked_input,
    refine,
    save_model,
)
from sadi.scenes import random_scene_spec, synth_scene
from sadi.types import DisparityImage, HoleMask


def _hole(size=16, lo=5, hi=11):
    hole = np.zeros((size, size), dtype=bool)
    hole[lo:hi, lo:hi] = True
    return hole


@pytest.fixture
def scene(rng):
    return synth_scene(random_scene_spec(rng, 16)).disparity.values


@pytest.mark.parametrize("attention_on", [True, False])
def test_background_is_bit_equal(scene, attention_on):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2, surface_attention_on=attention_on)
    params = GeneratorParams.create(width=2, seed=3)
    hole = _hole()
    coarse, final = generate(params, masked_input(scene, hole), cfg, scale=float(scene.max()))
    assert coarse.shape == final.shape == (1, 16, 16)
    assert np.array_equal(final.data[0][~hole], scene[~hole])
    assert np.array_equal(coarse.data[0][~hole], scene[~hole])
    if not attention_on:
        assert final is coarse


def test_generator_input_checks(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    params = GeneratorParams.create(width=2)
    bad = masked_input(scene, _hole())
    bad.data[1, 0, 0] = 0.5
    with pytest.raises(ContractError):
        generate(params, bad, cfg)
    with pytest.raises(DimensionError):
        generate(params, masked_input(scene[:14, :14], _hole(14, 4, 9)), cfg)
    with pytest.raises(DimensionError):
        generate(params, Tensor(np.zeros((1, 16, 16))), cfg)


def test_fresh_merge_passes_transferred_disparity(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    params = GeneratorParams.create(width=2, seed=1)
    hole = _hole()
    masked = masked_input(scene, hole)
    scale = float(scene.max())
    coarse = coarse_stage(params, masked, scale)
    known = Tensor(masked.data[:1])
    final, result = refine(params, coarse, known, hole, cfg.attention, scale)
    top = coarse.data[0][~hole].max()
    np.testing.assert_allclose(final.data[0][hole], result.features.data[0][hole] * top, rtol=1e-12)


@pytest.mark.parametrize("surface,channels", [(True, 4), (False, 1)])
def test_critic_channels(scene, surface, channels):
    critic = CriticParams.create(width=2, surface=surface)
    assert critic.in_channels == channels
    score = critic_forward(critic, Tensor(scene[None]), scale=float(scene.max()))
    assert score.shape == ()
    assert np.isfinite(score.item())


def test_zero_critic_scores_zero(scene):
    critic = CriticParams.zeros(width=2)
    assert critic_forward(critic, Tensor(scene[None])).item() == 0.0


def test_save_and_load_model(tmp_path, scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2, seed=5, surface_discrimination_on=False)
    generator = GeneratorParams.create(width=2, seed=5)
    critic = CriticParams.create(width=2, seed=5, surface=False)
    generator.tensors["enc1.bias"].data += 0.25
    path = save_model(tmp_path / "m.ckpt", generator, critic, cfg, scale=42.0)
    g2, c2, cfg2, scale = load_model(path)
    assert scale == 42.0
    assert cfg2.to_dict() == cfg.to_dict()
    assert c2.in_channels == 1
    for key, t in generator.tensors.items():
        np.testing.assert_array_equal(g2.tensors[key].data, t.data)
    for key, t in critic.tensors.items():
        np.testing.assert_array_equal(c2.tensors[key].data, t.data)


def test_inpaint_fills_only_the_hole(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    params = GeneratorParams.create(width=2)
    hole = _hole()
    out = inpaint(params, DisparityImage(scene), HoleMask(hole), cfg, scale=float(scene.max()))
    assert out.valid.all()
    assert np.array_equal(out.values[~hole], scene[~hole])
    assert np.all(out.values[hole] >= 0.0)


def test_inpaint_fills_invalid_pixels_and_pads(rng):
    values = synth_scene(random_scene_spec(rng, 18)).disparity.values.copy()
    valid = np.ones_like(values, dtype=bool)
    valid[0, 0] = False
    hole = np.zeros_like(valid)
    hole[6:12, 6:12] = True
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    out, attention = inpaint(GeneratorParams.create(width=2), DisparityImage(values, valid), HoleMask(hole), cfg,
                             return_attention=True)
    assert out.shape == (18, 18)
    assert out.valid.all()
    assert attention is not None
    assert attention.features.shape[1:] == (20, 20)


def test_inpaint_without_hole_returns_copy(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    d = DisparityImage(scene)
    out = inpaint(GeneratorParams.create(width=2), d, HoleMask(np.zeros((16, 16), dtype=bool)), cfg)
    assert out is not d
    assert np.array_equal(out.values, d.values)


def test_inpaint_shape_mismatch(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2)
    with pytest.raises(DimensionError):
        inpaint(GeneratorParams.create(width=2), DisparityImage(scene), HoleMask(_hole(12, 2, 4)), cfg)


def test_one_adam_step_lowers_l1_on_a_fixed_batch(scene):
    cfg = TrainConfig(image_size=16, hole_size=6, width=2, surface_attention_on=False)
    params = GeneratorParams.create(width=2, seed=2)
    critic = CriticParams.create(width=2, seed=2)
    weights = LossWeights(beta=0.0, alpha=0.0)
    masked = masked_input(scene, _hole())
    truth = Tensor(scene[None])
    scale = float(scene.max())

    def objective():
        _, final = generate(params, masked, cfg, scale)
        return generator_loss(lambda f: critic_stack(critic, f), [final], [truth], weights)

    opt = Adam(params.parameters(), lr=1e-4)
    with Graph() as graph:
        loss, before = objective()
    graph.backward(loss, inputs=params.parameters())
    opt.step()
    _, after = objective()
    assert after.g_l1 < before.g_l1
