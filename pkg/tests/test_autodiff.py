import numpy as np
import pytest

from sadi.autodiff import Adam, Graph, Tensor, current_graph, grad_check
from sadi.autodiff import functional as F
from sadi.config import LossWeights
from sadi.errors import ContractError, DimensionError
from sadi.losses import generator_loss, gradient_penalty, l1_loss, vectorial_loss
from sadi.normals import normals_op

TOL = 1e-4


def test_elementwise_gradients(seeded_rng):
    x = seeded_rng.normal(size=(8, 8))
    y = seeded_rng.uniform(1.0, 2.0, size=(8, 8))
    assert grad_check(lambda t: F.sum(F.mul(t, y)), x) < TOL
    assert grad_check(lambda t: F.sum(F.div(y, F.add(F.square(t), 1.0))), x) < TOL
    assert grad_check(lambda t: F.sum(F.tanh(t)), x) < TOL
    assert grad_check(lambda t: F.sum(F.leaky_relu(t, 0.2)), x) < TOL
    assert grad_check(lambda t: F.sum(F.exp(F.mul(t, 0.5))), x) < TOL
    assert grad_check(lambda t: F.mean(F.sqrt(F.add(F.square(t), 1.0))), x) < TOL
    assert grad_check(lambda t: F.sum(F.abs(t)), x) < TOL


def test_conv2d_gradients(seeded_rng):
    x = seeded_rng.normal(size=(2, 8, 8))
    k = seeded_rng.normal(size=(3, 2, 3, 3))
    assert grad_check(lambda t: F.sum(F.square(F.conv2d(t, k))), x) < TOL
    assert grad_check(lambda t: F.sum(F.square(F.conv2d(t, k, stride=2))), x) < TOL
    assert grad_check(lambda t: F.sum(F.square(F.conv2d(t, k, padding="replicate"))), x) < TOL
    assert grad_check(lambda w: F.sum(F.square(F.conv2d(x, w, stride=2))), k) < TOL


def test_transpose_conv2d_gradients(seeded_rng):
    x = seeded_rng.normal(size=(3, 4, 4))
    k = seeded_rng.normal(size=(3, 2, 3, 3))
    assert grad_check(lambda t: F.sum(F.square(F.transpose_conv2d(t, k, stride=2, pad=1, output_size=(8, 8)))),
                      x) < TOL
    assert grad_check(lambda w: F.sum(F.square(F.transpose_conv2d(x, w))), k) < TOL


@pytest.mark.parametrize("stride,size", [(1, (8, 8)), (2, (8, 8)), (2, (7, 7))])
def test_transpose_conv_is_adjoint_of_conv(rng, stride, size):
    x = rng.normal(size=(2,) + size)
    k = rng.normal(size=(3, 2, 3, 3))
    y_shape = F.conv2d(x, k, stride=stride).shape
    y = rng.normal(size=y_shape)
    lhs = np.sum(F.conv2d(x, k, stride=stride).data * y)
    rhs = np.sum(x * F.transpose_conv2d(y, k, stride=stride, pad=1, output_size=size).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_shape_op_gradients(seeded_rng):
    x = seeded_rng.normal(size=(2, 4, 4))
    w = seeded_rng.normal(size=(2, 8, 8))
    assert grad_check(lambda t: F.sum(F.mul(F.upsample_nearest(t), w)), x) < TOL
    assert grad_check(lambda t: F.sum(F.square(F.concat([t, F.mul(t, 2.0)], axis=0))), x) < TOL
    assert grad_check(lambda t: F.sum(F.square(F.narrow(t, 1, 1, 2))), x) < TOL
    index = np.array([[0, 5, -1], [31, 5, 2]])
    assert grad_check(lambda t: F.sum(F.square(F.take(t, index))), x) < TOL
    assert grad_check(lambda t: F.sum(F.square(F.expand(F.sum(t, axis=0, keepdims=True), (2, 4, 4)))), x) < TOL
    v = seeded_rng.normal(size=(3,))
    assert grad_check(lambda t: F.sum(F.square(F.scatter(t, np.array([4, -1, 4]), (2, 3)))), v) < TOL
    assert grad_check(lambda t: F.sum(F.mul(F.softmax(t, axis=0), w[:, :4, :4])), x) < TOL
    assert grad_check(lambda t: F.reduce("mean", F.square(t)), x) < TOL


def test_normals_and_loss_gradients(seeded_rng):
    d = seeded_rng.uniform(5.0, 10.0, size=(1, 8, 8))
    gt = seeded_rng.uniform(5.0, 10.0, size=(1, 8, 8))
    gt_normals = normals_op(Tensor(gt))
    w = seeded_rng.normal(size=(3, 8, 8))
    assert grad_check(lambda t: F.sum(F.mul(normals_op(t), w)), d) < TOL
    assert grad_check(lambda t: l1_loss(t, Tensor(gt)), d) < TOL
    assert grad_check(lambda t: vectorial_loss(normals_op(t), gt_normals), d) < TOL
    region = np.zeros((8, 8), dtype=bool)
    region[2:6, 3:7] = True
    assert grad_check(lambda t: vectorial_loss(normals_op(t), gt_normals, region), d) < TOL


def test_generator_loss_through_two_layer_net(seeded_rng):
    masked = seeded_rng.uniform(0.0, 1.0, size=(2, 8, 8))
    k2 = seeded_rng.normal(size=(1, 3, 3, 3)) * 0.5
    kc = seeded_rng.normal(size=(1, 4, 3, 3)) * 0.1
    truth = Tensor(seeded_rng.uniform(1.0, 2.0, size=(1, 8, 8)))

    def critic(features):
        return F.mean(F.leaky_relu(F.conv2d(features, kc), 0.2))

    def loss(k1):
        hidden = F.leaky_relu(F.conv2d(masked, k1), 0.2)
        out = F.add(F.conv2d(hidden, k2), 1.5)
        return generator_loss(critic, out, truth, LossWeights(beta=0.1))[0]

    k1 = seeded_rng.normal(size=(3, 2, 3, 3)) * 0.5
    assert grad_check(loss, k1) < TOL


def test_gradient_penalty_is_differentiable_in_critic_parameters(seeded_rng):
    real = Tensor(seeded_rng.normal(size=(4, 8, 8)))
    fake = Tensor(seeded_rng.normal(size=(4, 8, 8)))

    def penalty(k):
        graph = current_graph() or Graph()
        with graph:
            critic = lambda x: F.mean(F.leaky_relu(F.conv2d(x, k, stride=2), 0.2))
            return gradient_penalty(critic, real, fake, 0.3)

    k = seeded_rng.normal(size=(2, 4, 3, 3))
    assert grad_check(penalty, k) < TOL


def test_ops_outside_a_graph_record_nothing():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = F.mul(x, 3.0)
    assert y.node is None
    with Graph() as graph:
        z = F.sum(F.mul(x, 3.0))
    assert len(graph) == 2
    graph.backward(z)
    np.testing.assert_array_equal(x.grad, np.full((2, 2), 3.0))


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Graph() as graph:
        y = F.mul(x, 2.0)
    with pytest.raises(ContractError):
        graph.backward(y)


def test_broadcasting_is_limited_to_scalars():
    with pytest.raises(DimensionError):
        F.add(np.ones((2, 3)), np.ones((3,)))
    assert F.add(np.ones((2, 3)), 1.0).data.sum() == 12.0


def test_adam_minimises_quadratic():
    x = Tensor(np.array([0.0, 10.0]), requires_grad=True)
    opt = Adam([x], lr=0.1, beta1=0.9, beta2=0.999)
    for _ in range(500):
        opt.zero_grad()
        with Graph() as graph:
            loss = F.sum(F.square(F.sub(x, 3.0)))
        graph.backward(loss)
        opt.step()
    np.testing.assert_allclose(x.data, [3.0, 3.0], atol=1e-2)


def test_reduce_kinds():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert F.reduce("sum", x).item() == 15.0
    assert F.reduce("mean", x).item() == 2.5
    np.testing.assert_array_equal(F.reduce("sum", x, axis=0).data, [3.0, 5.0, 7.0])
    with pytest.raises(ValueError):
        F.reduce("max", x)


def test_elementwise_dispatch():
    x = Tensor(np.array([-2.0, 0.0, 3.0]), requires_grad=True)
    np.testing.assert_array_equal(F.elementwise("relu", x).data, [0.0, 0.0, 3.0])
    np.testing.assert_array_equal(F.elementwise("leaky_relu", x, slope=0.5).data, [-1.0, 0.0, 3.0])
    np.testing.assert_array_equal(F.elementwise("mul", x, 2.0).data, [-4.0, 0.0, 6.0])
    with pytest.raises(ValueError):
        F.elementwise("sigmoid", x)


def test_abs_subgradient_is_zero_at_zero():
    x = Tensor(np.array([-2.0, 0.0, 3.0]), requires_grad=True)
    with Graph() as graph:
        loss = F.sum(F.abs(x))
    graph.backward(loss)
    np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])


def test_relu_gradient(seeded_rng):
    x = seeded_rng.normal(size=(8, 8))
    x[np.abs(x) < 1e-3] = 0.5
    assert grad_check(lambda t: F.sum(F.mul(F.relu(t), F.relu(t))), x) < TOL


def conv_reference(x, k, stride, padding, pad):
    c_in, h, w = x.shape
    c_out, _, kh, kw = k.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for y in range(ho):
            for z in range(wo):
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            i = y * stride + u - pad
                            j = z * stride + v - pad
                            if padding == "zero":
                                if not (0 <= i < h and 0 <= j < w):
                                    continue
                            else:
                                i = min(max(i, 0), h - 1)
                                j = min(max(j, 0), w - 1)
                            out[o, y, z] += k[o, c, u, v] * x[c, i, j]
    return out


@pytest.mark.parametrize("padding", ["zero", "replicate"])
@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("c_in,c_out,ksize,size", [
    (2, 3, 3, 8),
    (1, 1, 3, 5),
    (4, 4, 5, 16),
    (3, 2, 1, 7),
])
def test_conv2d_matches_nested_loops(rng, padding, stride, c_in, c_out, ksize, size):
    x = rng.normal(size=(c_in, size, size))
    k = rng.normal(size=(c_out, c_in, ksize, ksize))
    pad = ksize // 2
    expected = conv_reference(x, k, stride, padding, pad)
    got = F.conv2d(x, k, stride=stride, padding=padding).data
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_conv2d_without_padding_matches_nested_loops(rng):
    x = rng.normal(size=(2, 9, 9))
    k = rng.normal(size=(3, 2, 3, 3))
    expected = conv_reference(x, k, 2, "zero", 0)
    np.testing.assert_allclose(F.conv2d(x, k, stride=2, pad=0).data, expected, rtol=0, atol=1e-12)


def test_conv2d_identity_kernel_with_replicate_padding():
    x = np.full((1, 5, 5), 3.0)
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(F.conv2d(x, k, padding="replicate").data, x)


def test_conv2d_sum_kernel():
    out = F.conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), padding="zero").data
    assert out[0, 1, 1] == 9.0
    assert out[0, 0, 0] == 4.0


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError):
        F.conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))


def test_transpose_conv2d_scalar_kernel(rng):
    x = rng.normal(size=(1, 6, 7))
    out = F.transpose_conv2d(x, np.full((1, 1, 1, 1), 2.0)).data
    np.testing.assert_array_equal(out, 2.0 * x)


def test_transpose_conv2d_spreads_single_pixel():
    out = F.transpose_conv2d(np.ones((1, 1, 1)), np.ones((1, 1, 3, 3))).data
    np.testing.assert_array_equal(out, np.ones((1, 3, 3)))


def test_transpose_conv_adjoint_single_channel(rng):
    a = rng.normal(size=(1, 6, 6))
    k = rng.normal(size=(1, 1, 3, 3))
    b = rng.normal(size=(1, 6, 6))
    lhs = np.sum(F.conv2d(a, k).data * b)
    rhs = np.sum(a * F.transpose_conv2d(b, k, pad=1).data)
    assert abs(lhs - rhs) < 1e-9


def test_softmax_gradient_is_differentiable(seeded_rng):
    w = seeded_rng.normal(size=(4, 3))

    def grad_norm(t):
        graph = current_graph() or Graph()
        leaf = t if t.requires_grad else Tensor(t.data, requires_grad=True)
        with graph:
            y = F.sum(F.mul(F.softmax(leaf, axis=0), w))
            (g,) = graph.gradient(y, [leaf], create_graph=True)
            return F.sum(F.square(g))

    x = seeded_rng.normal(size=(4, 3))
    assert grad_check(grad_norm, x) < TOL
