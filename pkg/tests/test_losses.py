import numpy as np
import pytest

from sadi.autodiff import Graph, Tensor
from sadi.autodiff import functional as F
from sadi.autodiff.gradcheck import numeric_gradient
from sadi.config import LossWeights
from sadi.errors import ContractError, DimensionError, DomainError
from sadi.losses import (
    LossReport,
    critic_loss,
    disparity_features,
    generator_loss,
    gradient_penalty,
    l1_loss,
    vectorial_loss,
)


def normals_const(vec, shape=(4, 5)):
    return Tensor(np.broadcast_to(np.asarray(vec, float)[:, None, None], (3,) + shape).copy())


def test_l1_loss_is_mean_absolute_difference():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    y = Tensor(np.array([[1.0, 0.0], [5.0, 4.0]]))
    assert l1_loss(x, y).item() == pytest.approx(1.0)
    assert l1_loss(x, x).item() == 0.0


def test_vectorial_loss_full_image():
    up = normals_const([0.0, 0.0, 1.0])
    side = normals_const([1.0, 0.0, 0.0])
    assert vectorial_loss(up, up).item() == 0.0
    assert vectorial_loss(up, side).item() == pytest.approx(2.0)


def test_vectorial_loss_restricted_to_region():
    up = normals_const([0.0, 0.0, 1.0])
    other = up.data.copy()
    other[:, 0, 0] = [1.0, 0.0, 0.0]
    region = np.zeros((4, 5), dtype=bool)
    region[0, :2] = True
    assert vectorial_loss(up, Tensor(other), region).item() == pytest.approx(1.0)
    assert vectorial_loss(up, Tensor(other)).item() == pytest.approx(2.0 / 20)


def test_vectorial_loss_rejects_bad_input():
    up = normals_const([0.0, 0.0, 1.0])
    with pytest.raises(DomainError):
        vectorial_loss(up, up, np.zeros((4, 5), dtype=bool))
    with pytest.raises(DimensionError):
        vectorial_loss(up, normals_const([0.0, 0.0, 1.0], (4, 6)))
    with pytest.raises(DimensionError):
        vectorial_loss(Tensor(np.zeros((2, 4, 5))), Tensor(np.zeros((2, 4, 5))))


def test_gradient_penalty_of_constant_critic_is_one(rng):
    real = Tensor(rng.normal(size=(4, 8, 8)))
    fake = Tensor(rng.normal(size=(4, 8, 8)))
    with Graph():
        gp = gradient_penalty(lambda x: Tensor(np.array(3.0)), real, fake, 0.5)
    assert gp.item() == pytest.approx(1.0, abs=1e-7)


def test_gradient_penalty_of_sum_critic(rng):
    # grad of sum(x) is all ones, so the norm is sqrt(4) = 2
    real = Tensor(rng.normal(size=(1, 2, 2)))
    fake = Tensor(rng.normal(size=(1, 2, 2)))
    with Graph():
        gp = gradient_penalty(F.sum, real, fake, 0.7)
    assert gp.item() == pytest.approx(1.0, abs=1e-12)


def test_gradient_penalty_matches_numeric_inner_gradient(rng):
    k1 = rng.normal(size=(3, 1, 3, 3)) * 0.5
    k2 = rng.normal(size=(1, 3, 3, 3)) * 0.5

    def critic(x):
        hidden = F.leaky_relu(F.conv2d(x, k1), 0.2)
        return F.sum(F.conv2d(hidden, k2))

    real = rng.normal(size=(1, 8, 8))
    fake = rng.normal(size=(1, 8, 8))
    u = 0.3
    x_hat = u * real + (1.0 - u) * fake
    numeric = numeric_gradient(critic, x_hat)
    expected = (np.linalg.norm(numeric) - 1.0) ** 2

    with Graph():
        gp = gradient_penalty(critic, Tensor(real), Tensor(fake), u)
    assert gp.item() == pytest.approx(expected, abs=1e-3)

    leaf = Tensor(x_hat, requires_grad=True)
    with Graph() as graph:
        (inner,) = graph.gradient(critic(leaf), [leaf], create_graph=True)
    np.testing.assert_allclose(inner.data, numeric, atol=1e-6)


def test_gradient_penalty_of_unit_slope_critic_is_zero(rng):
    w = rng.normal(size=(4, 8, 8))
    w /= np.linalg.norm(w)
    real = Tensor(rng.normal(size=(4, 8, 8)))
    fake = Tensor(rng.normal(size=(4, 8, 8)))
    with Graph():
        gp = gradient_penalty(lambda x: F.sum(F.mul(x, w)), real, fake, 0.25)
    assert gp.item() == pytest.approx(0.0, abs=1e-12)


def test_gradient_penalty_needs_scalar_critic(rng):
    x = Tensor(rng.normal(size=(4, 4, 4)))
    with Graph():
        with pytest.raises(ContractError):
            gradient_penalty(lambda t: F.mul(t, 2.0), x, x, 0.5)


def test_critic_loss_value_and_report():
    real = [Tensor(np.ones((4, 4, 4)))]
    fake = [Tensor(np.zeros((4, 4, 4)))]
    report = LossReport()
    total = critic_loss(F.mean, real, fake, LossWeights(lambda_gp=0.0), u=0.5, report=report)
    assert total.item() == pytest.approx(-1.0)
    assert report.d_wasserstein_estimate == pytest.approx(1.0)
    assert report.d_total == pytest.approx(-1.0)


def test_critic_loss_checks_channels():
    x = [Tensor(np.zeros((1, 4, 4)))]
    with pytest.raises(ContractError):
        critic_loss(F.mean, x, x, LossWeights(), u=0.5, channels=4)
    critic_loss(F.mean, x, x, LossWeights(), u=0.5, channels=1)


def test_generator_loss_terms(rng):
    truth = Tensor(rng.uniform(5.0, 10.0, size=(1, 6, 6)))
    out = Tensor(truth.data + rng.normal(size=(1, 6, 6)))
    critic = lambda f: F.mean(f)
    weights = LossWeights(beta=0.5, phi=2.0, alpha=3.0)
    total, report = generator_loss(critic, out, truth, weights)
    expected = 0.5 * report.g_adv + 2.0 * report.g_l1 + 3.0 * report.g_vec
    assert report.g_total == pytest.approx(expected, rel=1e-12)
    assert total.item() == report.g_total
    assert report.g_adv == pytest.approx(-F.mean(disparity_features(out)).item())
    assert report.g_vec > 0


def test_generator_loss_alpha_zero_ignores_vectorial_term(rng):
    truth = Tensor(rng.uniform(5.0, 10.0, size=(1, 6, 6)))
    out = Tensor(truth.data + rng.normal(size=(1, 6, 6)))
    critic = lambda f: F.mean(f)
    _, with_vec = generator_loss(critic, out, truth, LossWeights(alpha=1.0))
    _, without = generator_loss(critic, out, truth, LossWeights(alpha=0.0))
    assert without.g_vec == with_vec.g_vec
    assert with_vec.g_total - without.g_total == pytest.approx(with_vec.g_vec, rel=1e-12)


def test_generator_loss_sums_coarse_and_final_stages(rng):
    truth = Tensor(rng.uniform(5.0, 10.0, size=(1, 6, 6)))
    out = Tensor(truth.data + 1.0)
    critic = lambda f: F.mean(f)
    _, single = generator_loss(critic, out, truth, LossWeights())
    _, both = generator_loss(critic, out, truth, LossWeights(), coarse=out)
    assert both.g_l1 == pytest.approx(2.0 * single.g_l1)
    assert both.g_total == pytest.approx(2.0 * single.g_total)


def test_generator_loss_batch_mismatch():
    t = Tensor(np.ones((1, 4, 4)))
    with pytest.raises(DimensionError):
        generator_loss(F.mean, [t, t], [t], LossWeights())


def test_loss_report_finiteness():
    assert LossReport().is_finite()
    assert not LossReport(g_total=float("nan")).is_finite()
