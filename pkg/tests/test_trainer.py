import csv
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from sadi.autodiff import Tensor
from sadi.config import LossWeights, TrainConfig
from sadi.constants import TRAIN_LOG_COLUMNS
from sadi.errors import TrainingDivergedError
from sadi.metrics import MetricReport
from sadi.model import load_model
from sadi.trainer import Trainer, held_out_samples, run_ablation


def test_one_row_per_update(tiny_config):
    result = Trainer(tiny_config).run(save=False)
    assert len(result.history) == tiny_config.steps * (tiny_config.weights.n_critic + 1)
    assert len(result.generator_rows()) == tiny_config.steps
    assert [r["critic_iter"] for r in result.critic_rows()] == [0, 1, 0, 1]
    for row in result.generator_rows():
        assert row["critic_iter"] == ""
        assert row["d_total"] == ""
        assert math.isfinite(row["g_total"])
    for row in result.critic_rows():
        assert row["g_total"] == ""
        assert math.isfinite(row["d_gp"])
    assert result.scale > 0


def test_same_seed_same_history(tiny_config):
    first = Trainer(tiny_config).run(save=False)
    second = Trainer(tiny_config).run(save=False)
    assert first.history == second.history
    for key, t in first.generator.tensors.items():
        np.testing.assert_array_equal(second.generator.tensors[key].data, t.data)


def test_vectorial_switch_only_changes_weighting(tiny_config):
    cfg = replace(tiny_config, steps=1)
    on = Trainer(cfg).run(save=False)
    off = Trainer(replace(cfg, vectorial_loss_on=False)).run(save=False)
    assert on.critic_rows() == off.critic_rows()
    g_on, g_off = on.generator_rows()[0], off.generator_rows()[0]
    assert g_on["g_vec"] == pytest.approx(g_off["g_vec"], rel=1e-12)
    assert g_on["g_total"] - g_off["g_total"] == pytest.approx(cfg.weights.alpha * g_on["g_vec"], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("surface,channels", [(True, 4), (False, 1)])
def test_critic_input_follows_switch(tiny_config, surface, channels):
    trainer = Trainer(replace(tiny_config, surface_discrimination_on=surface))
    assert trainer.critic.in_channels == channels


def test_fixed_disparity_scale(tiny_config):
    result = Trainer(replace(tiny_config, steps=1, disparity_scale=50.0)).run(save=False)
    assert result.scale == 50.0


def test_non_finite_loss_aborts(tiny_config, monkeypatch):
    def broken(critic, real, fake, weights, rng=None, channels=4, report=None):
        report.d_total = float("nan")
        return Tensor(0.0)

    monkeypatch.setattr("sadi.trainer.critic_loss", broken)
    with pytest.raises(TrainingDivergedError) as info:
        Trainer(tiny_config).run(save=False)
    assert info.value.step == 1
    assert info.value.phase == "critic"


def test_session_artifacts(tiny_config):
    result = Trainer(tiny_config).run(save=True)
    paths = {k: Path(v) for k, v in result.paths.items()}
    assert all(p.exists() for p in paths.values())

    lines = paths["train_log"].read_text().splitlines()
    assert "# geometry.image_size=16" in lines
    rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    assert list(rows[0]) == TRAIN_LOG_COLUMNS
    assert len(rows) == len(result.history)

    steps = [json.loads(line) for line in paths["steps"].read_text().splitlines()]
    assert [s["step"] for s in steps] == [1, 2]

    summary = json.loads(paths["summary"].read_text())
    assert summary["artifacts"]["checkpoint"] == str(paths["checkpoint"])
    assert summary["disparity_scale"] == result.scale

    generator, _, cfg, scale = load_model(paths["checkpoint"])
    assert scale == result.scale
    assert cfg.to_dict() == tiny_config.to_dict()
    np.testing.assert_array_equal(generator.tensors["dec4.weight"].data,
                                  result.generator.tensors["dec4.weight"].data)


def test_evaluate_on_held_out(tiny_config):
    trainer = Trainer(replace(tiny_config, steps=1))
    trainer.run(save=False)
    samples = held_out_samples(tiny_config, 2, seed=10_000)
    per_pair, mean = trainer.evaluate(samples)
    assert len(per_pair) == 2
    assert isinstance(mean, MetricReport)
    assert mean.mse >= 0.0


def test_ablation_smoke(tiny_config, tmp_path):
    rows = run_ablation(replace(tiny_config, steps=1, weights=replace(tiny_config.weights, n_critic=1)),
                        seeds=(0,), eval_samples=1, out_dir=tmp_path / "ablation")
    assert [name for name, _ in rows] == ["CA", "CA + VL", "SA + VL", "Proposal"]
    assert (tmp_path / "ablation" / "pixel_errors.csv").exists()
    assert (tmp_path / "ablation" / "distribution_distances.md").exists()


def test_training_lowers_hole_vectorial_error(tiny_config):
    cfg = replace(tiny_config, steps=60, batch_size=2, lr=2e-3, width=4, surface_attention_on=False,
                  disparity_scale=30.0, vectorial_region="hole", weights=LossWeights(beta=0.0, n_critic=1))
    samples = held_out_samples(cfg, 4, seed=10_000)
    trainer = Trainer(cfg)
    _, before = trainer.evaluate(samples)
    trainer.run(save=False)
    _, after = trainer.evaluate(samples)
    assert after.ve < before.ve


def _mean_hole_ve(cfg, seeds, vectorial_on, eval_samples=8):
    values = []
    for seed in seeds:
        run_cfg = replace(cfg, seed=seed, vectorial_loss_on=vectorial_on)
        trainer = Trainer(run_cfg)
        trainer.run(save=False)
        _, mean = trainer.evaluate(held_out_samples(run_cfg, eval_samples, 10_000 + seed))
        values.append(mean.ve)
    return float(np.mean(values))


@pytest.mark.slow
def test_vectorial_loss_lowers_hole_error_over_seeds(tmp_path):
    base = TrainConfig(image_size=64, hole_size=24, batch_size=2, steps=150, lr=1e-3, width=8,
                       surface_attention_on=False, weights=LossWeights(n_critic=2),
                       out_dir=str(tmp_path))
    with_vl = _mean_hole_ve(base, (0, 1, 2), True)
    without = _mean_hole_ve(base, (0, 1, 2), False)
    assert with_vl <= 0.9 * without


@pytest.mark.slow
def test_ablation_over_seeds(tmp_path):
    base = TrainConfig(image_size=32, hole_size=12, batch_size=2, steps=30, width=4, out_dir=str(tmp_path))
    rows = run_ablation(base, seeds=(0, 1, 2), eval_samples=4)
    for _, report in rows:
        assert np.isfinite(report.mse)
        assert np.isfinite(report.ve)
