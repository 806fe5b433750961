import itertools

import numpy as np
import pytest

from tensor import (
    ContractError, DomainError, ShapeError, Tensor, bilinear_sample, clamp, concat, conv2d,
    downsample2x, einsum, elementwise, grad_check, no_grad, pad, parameter, reduce, reshape,
    stack, take, transpose, upsample2x, where,
)
from tensor import ops
from tensor.serialization import tensor_from_bytes, tensor_to_bytes

GRAD_TOLERANCE = 1e-4


def weighted_sum(out, weights):
    return ops.total(out * weights)


def summed_to(tiled, shape):
    lead = tiled.ndim - len(shape)
    out = tiled.sum(axis=tuple(range(lead))) if lead else tiled
    axes = tuple(i for i, size in enumerate(shape) if size == 1)
    return out.sum(axis=axes, keepdims=True) if axes else out


def away_from_zero(rng, shape, low=0.3, high=1.5):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


@pytest.mark.parametrize("kind", ["exp", "tanh", "sigmoid", "square"])
def test_unary_gradients_on_any_input(rng, kind):
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))
    assert grad_check(lambda a: weighted_sum(elementwise(kind, a), w), Tensor(x)) < GRAD_TOLERANCE


@pytest.mark.parametrize("kind", ["log", "sqrt"])
def test_unary_gradients_on_positive_input(rng, kind):
    x = rng.uniform(0.5, 2.0, size=(2, 5))
    w = rng.normal(size=(2, 5))
    assert grad_check(lambda a: weighted_sum(elementwise(kind, a), w), Tensor(x)) < GRAD_TOLERANCE


@pytest.mark.parametrize("kind", ["abs", "relu"])
def test_kinked_gradients_away_from_kink(rng, kind):
    x = away_from_zero(rng, (4, 3))
    w = rng.normal(size=(4, 3))
    assert grad_check(lambda a: weighted_sum(elementwise(kind, a), w), Tensor(x)) < GRAD_TOLERANCE


@pytest.mark.parametrize("kind", ["add", "sub", "mul", "div", "min", "max"])
def test_binary_gradients_with_broadcasting(rng, kind):
    a = rng.normal(size=(2, 3, 4))
    b = rng.uniform(0.5, 1.5, size=(3, 1)) + 2.0 if kind == "div" else rng.normal(size=(3, 1))
    w = rng.normal(size=(2, 3, 4))
    assert grad_check(lambda x, y: weighted_sum(elementwise(kind, x, y), w), [a, b]) < GRAD_TOLERANCE


def test_sigmoid_sum_gradient_is_nearly_exact(rng):
    x = rng.normal(size=(5,))
    assert grad_check(lambda a: ops.total(ops.sigmoid(a)), Tensor(x)) < 1e-6


def test_structural_op_gradients(rng):
    x = rng.normal(size=(2, 3, 4))
    w_t = rng.normal(size=(4, 3, 2))
    w_r = rng.normal(size=(6, 4))
    w_take = rng.normal(size=(2, 3, 3))
    w_pad = rng.normal(size=(2, 5, 6))
    assert grad_check(lambda a: weighted_sum(transpose(a), w_t), Tensor(x)) < GRAD_TOLERANCE
    assert grad_check(lambda a: weighted_sum(reshape(a, (6, 4)), w_r), Tensor(x)) < GRAD_TOLERANCE
    assert grad_check(lambda a: weighted_sum(take(a, [3, 0, 3], axis=2), w_take), Tensor(x)) < GRAD_TOLERANCE
    assert grad_check(lambda a: weighted_sum(pad(a, 1), w_pad), Tensor(x)) < GRAD_TOLERANCE


def test_concat_and_stack_gradients(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    w_c = rng.normal(size=(4, 3))
    w_s = rng.normal(size=(2, 2, 3))
    assert grad_check(lambda x, y: weighted_sum(concat([x, y], axis=0), w_c), [a, b]) < GRAD_TOLERANCE
    assert grad_check(lambda x, y: weighted_sum(stack([x, y], axis=1), w_s), [a, b]) < GRAD_TOLERANCE


@pytest.mark.parametrize("kind", ["sum", "mean", "max", "min"])
def test_reduce_gradients(rng, kind):
    x = rng.normal(size=(3, 4, 2))
    w = rng.normal(size=(3, 2))
    assert grad_check(lambda a: weighted_sum(reduce(kind, a, axes=1), w), Tensor(x)) < GRAD_TOLERANCE


def test_einsum_gradients(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
    w = rng.normal(size=(3, 5))
    assert grad_check(lambda x, y: weighted_sum(einsum("ij,jk->ik", x, y), w), [a, b]) < GRAD_TOLERANCE
    # Indice propre à une opérande (somme implicite)
    w_row = rng.normal(size=(3,))
    assert grad_check(lambda x: weighted_sum(einsum("ij->i", x), w_row), Tensor(a)) < GRAD_TOLERANCE


def test_clamp_gradient_inside_bounds(rng):
    x = rng.uniform(-0.8, 0.8, size=(3, 3))
    w = rng.normal(size=(3, 3))
    assert grad_check(lambda a: weighted_sum(clamp(a, -1.0, 1.0), w), Tensor(x)) < GRAD_TOLERANCE


@pytest.mark.parametrize("stride, padding", [(1, 1), (2, 1), (1, 0)])
def test_conv2d_gradients(rng, stride, padding):
    x = rng.normal(size=(2, 5, 5))
    k = rng.normal(size=(3, 2, 3, 3))
    h_out = (5 + 2 * padding - 3) // stride + 1
    w = rng.normal(size=(3, h_out, h_out))
    f = lambda a, b: weighted_sum(conv2d(a, b, stride=stride, padding=padding), w)
    assert grad_check(f, [x, k]) < GRAD_TOLERANCE


def test_resampling_gradients(rng):
    x = rng.normal(size=(2, 4, 6))
    w_up = rng.normal(size=(2, 8, 12))
    w_down = rng.normal(size=(2, 2, 3))
    assert grad_check(lambda a: weighted_sum(upsample2x(a), w_up), Tensor(x)) < GRAD_TOLERANCE
    assert grad_check(lambda a: weighted_sum(downsample2x(a), w_down), Tensor(x)) < GRAD_TOLERANCE


def test_bilinear_sample_gradients(rng):
    image = rng.normal(size=(2, 5, 6))
    coords = np.stack([rng.uniform(0.2, 4.8, size=(3, 3)), rng.uniform(0.2, 3.8, size=(3, 3))])
    w = rng.normal(size=(2, 3, 3))
    f = lambda img, xy: weighted_sum(bilinear_sample(img, xy), w)
    assert grad_check(f, [image, coords]) < GRAD_TOLERANCE


def test_composite_graph_gradient(rng):
    x = rng.normal(size=(2, 6, 6))
    k = rng.normal(size=(2, 2, 3, 3)) * 0.3

    def f(a, b):
        features = ops.tanh(conv2d(a, b, padding=1))
        pooled = downsample2x(features)
        return ops.mean(ops.square(upsample2x(pooled) - a)) + ops.total(ops.sigmoid(pooled)) * 0.1

    assert grad_check(f, [x, k]) < GRAD_TOLERANCE


def test_broadcasting_matches_explicit_tiling():
    # Toutes les formes de rang ≤ 3 aux dimensions 1, 2 ou 3
    shapes = [shape for rank in range(4) for shape in itertools.product((1, 2, 3), repeat=rank)]
    rng = np.random.default_rng(0)
    for shape_a, shape_b in itertools.product(shapes, repeat=2):
        try:
            target = np.broadcast_shapes(shape_a, shape_b)
        except ValueError:
            with pytest.raises(ShapeError):
                ops.add(Tensor(np.zeros(shape_a)), Tensor(np.zeros(shape_b)))
            continue
        a, b = rng.normal(size=shape_a), rng.normal(size=shape_b)
        tiled_a, tiled_b = np.broadcast_to(a, target), np.broadcast_to(b, target)
        assert np.array_equal(ops.add(Tensor(a), Tensor(b)).data, tiled_a + tiled_b)
        assert np.array_equal(ops.mul(Tensor(a), Tensor(b)).data, tiled_a * tiled_b)

        pa, pb = parameter(a), parameter(b)
        ops.total(ops.mul(pa, pb)).backward()
        assert np.shape(pa.grad) == shape_a
        assert np.allclose(pa.grad, summed_to(tiled_b, shape_a))
        assert np.allclose(pb.grad, summed_to(tiled_a, shape_b))


def test_leaf_gradients_accumulate():
    x = parameter(np.array([1.0, 2.0]))
    loss = ops.total(x * x)
    loss.backward()
    loss.backward()
    assert np.array_equal(x.grad, np.array([4.0, 8.0]))


def test_shared_parameter_gets_sum_of_contributions():
    x = parameter(np.array(3.0))
    (x * 2.0 + x * x).backward()
    assert x.grad == pytest.approx(8.0)


def test_backward_is_linear_in_the_loss(rng):
    x = parameter(rng.uniform(0.5, 1.5, size=(3, 4)))
    k = parameter(rng.normal(size=(2, 1, 3, 3)))
    w = rng.normal(size=(2, 3, 4))

    def first():
        return ops.total(ops.exp(x) * ops.sigmoid(x * 2.0))

    def second():
        return weighted_sum(conv2d(ops.log(x).reshape(1, 3, 4), k, padding=1), w)

    grads = []
    for loss in (first, second, lambda: first() + second()):
        x.grad, k.grad = None, None
        loss().backward()
        grads.append((x.grad.copy(), None if k.grad is None else k.grad.copy()))
    (gx_a, _), (gx_b, gk_b), (gx_sum, gk_sum) = grads
    assert np.max(np.abs(gx_sum - (gx_a + gx_b))) < 1e-12
    assert np.max(np.abs(gk_sum - gk_b)) < 1e-12


def test_no_grad_records_nothing():
    x = parameter(np.ones(3))
    with no_grad():
        y = ops.exp(x)
    assert not y.requires_grad
    assert y.node is None


def test_domain_errors_report_positions():
    with pytest.raises(DomainError) as info:
        ops.log(Tensor(np.array([1.0, 0.0, -2.0])))
    assert info.value.positions.tolist() == [[1], [2]]
    with pytest.raises(DomainError):
        ops.div(Tensor(np.ones(2)), Tensor(np.array([1.0, 0.0])))
    with pytest.raises(DomainError):
        ops.sqrt(Tensor(np.array([-1e-3])))


def test_sqrt_has_zero_gradient_at_zero():
    x = parameter(np.array([0.0, 4.0]))
    ops.total(ops.sqrt(x)).backward()
    assert np.array_equal(x.grad, np.array([0.0, 0.25]))


def test_backward_requires_scalar_root():
    with pytest.raises(ContractError):
        (parameter(np.ones(3)) * 2.0).backward()


def test_shape_errors():
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), padding=1)
    with pytest.raises(ShapeError):
        reshape(Tensor(np.ones(6)), (4, 2))
    with pytest.raises(ShapeError):
        downsample2x(Tensor(np.ones((1, 3, 4))))


def test_resampling_roundtrip_on_bilinear_ramp():
    i, j = np.meshgrid(np.arange(6.0), np.arange(8.0), indexing="ij")
    ramp = np.stack([0.5 + 0.1 * i - 0.2 * j, 2.0 * i + j])
    out = downsample2x(upsample2x(Tensor(ramp)))
    assert np.max(np.abs(out.data - ramp)) < 1e-6


def test_bilinear_sample_is_exact_at_integer_coordinates(rng):
    image = rng.normal(size=(3, 4, 5))
    v, u = np.meshgrid(np.arange(4.0), np.arange(5.0), indexing="ij")
    assert np.array_equal(bilinear_sample(Tensor(image), Tensor(np.stack([u, v]))).data, image)


def test_bilinear_sample_clamps_to_border():
    image = Tensor(np.arange(6.0).reshape(1, 2, 3))
    coords = Tensor(np.array([[[-5.0, 10.0]], [[0.0, 7.0]]]))
    assert bilinear_sample(image, coords).data.tolist() == [[[0.0, 5.0]]]


def test_where_selects_with_constant_mask():
    mask = np.array([True, False, True])
    out = where(mask, Tensor(np.ones(3)), Tensor(np.zeros(3)))
    assert out.data.tolist() == [1.0, 0.0, 1.0]


def test_tensor_bytes_reject_bad_magic():
    payload = tensor_to_bytes(Tensor(np.eye(2)))
    assert np.array_equal(tensor_from_bytes(payload).data, np.eye(2))
    with pytest.raises(ValueError):
        tensor_from_bytes(b"XXXX" + payload[4:])
    with pytest.raises(ValueError):
        tensor_from_bytes(payload[:-8])
