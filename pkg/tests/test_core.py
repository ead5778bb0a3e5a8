import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchvid import kernels
from sketchvid.core import (
    NonFiniteError,
    Parameter,
    RMSprop,
    ShapeError,
    Tape,
    Tensor,
    backward,
    concat,
    conv2d,
    global_avg_pool,
    linear,
    mean,
    relu,
    reshape,
    rmsprop_step,
    scale,
    scale_grad,
    softmax_cross_entropy,
    square,
    sum_,
    take,
)
from sketchvid.kernels import _pykernels

from oracles import central_difference, channel_means, conv2d_loops, cross_entropy, matvec, rel_error, rmsprop_trace


def test_tensor_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        Tensor([np.inf])


# ---------------------------------------------------------------- conv2d

def test_conv_identity_kernel():
    x = np.arange(9.0).reshape(1, 3, 3)
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    assert np.array_equal(out.data, x)


def test_conv_zero_input():
    rng = np.random.default_rng(0)
    out = conv2d(Tensor(np.zeros((2, 6, 6))), Tensor(rng.normal(size=(3, 2, 3, 3))), stride=2, padding=1)
    assert not out.data.any()


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 8, 8))
    w = rng.normal(size=(4, 2, 3, 3))
    out = conv2d(Tensor(x), Tensor(w), stride=2, padding=1)
    assert out.shape == (4, 4, 4)
    assert np.abs(out.data - conv2d_loops(x, w, 2, 1)).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 7), st.integers(1, 3), st.integers(1, 2),
       st.integers(0, 2), st.integers(0, 10 ** 6))
def test_conv_output_shape_and_values(c_in, c_out, size, k, stride, padding, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(c_in, size, size))
    w = rng.normal(size=(c_out, c_in, k, k))
    out = conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding)
    oh = (size + 2 * padding - k) // stride + 1
    assert out.shape == (c_out, oh, oh)
    assert np.allclose(out.data, conv2d_loops(x, w, stride, padding), atol=1e-10)


def test_conv_batched_equals_per_sample():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 2, 7, 7))
    w = rng.normal(size=(4, 2, 3, 3))
    batched = conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    for i in range(3):
        assert np.allclose(batched[i], conv2d(Tensor(x[i]), Tensor(w), stride=2, padding=1).data, atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ShapeError, match="channels"):
        conv2d(Tensor(np.zeros((2, 5, 5))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ShapeError, match="larger"):
        conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


# ---------------------------------------------------------------- small ops

def test_relu_examples():
    assert np.array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    assert not relu(Tensor(-np.arange(1.0, 5.0))).data.any()
    pos = np.arange(1.0, 5.0)
    assert np.array_equal(relu(Tensor(pos)).data, pos)


def test_linear_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x)
    b = np.array([0.5, -1.5])
    assert np.array_equal(linear(Tensor(x), Tensor(np.zeros((2, 3))), Tensor(b)).data, b)
    rng = np.random.default_rng(3)
    w, x4, b3 = rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=3)
    assert np.abs(linear(Tensor(x4), Tensor(w), Tensor(b3)).data - matvec(w, x4, b3)).max() < 1e-12
    with pytest.raises(ShapeError):
        linear(Tensor(np.zeros(5)), Tensor(w), Tensor(b3))


def test_global_avg_pool_examples():
    assert np.allclose(global_avg_pool(Tensor(np.full((1, 3, 3), 7.0))).data, [7.0])
    assert np.allclose(global_avg_pool(Tensor(np.array([[[1.0, 3.0]]]))).data, [2.0])
    x = np.random.default_rng(4).normal(size=(3, 4, 4))
    assert np.abs(global_avg_pool(Tensor(x)).data - channel_means(x)).max() < 1e-12


def test_softmax_cross_entropy_examples():
    onehot = np.eye(5)[0]
    assert abs(softmax_cross_entropy(Tensor(np.zeros(5)), onehot).item() - math.log(5)) < 1e-12
    assert softmax_cross_entropy(Tensor([1e4, 0, 0, 0, 0]), onehot).item() < 1e-12
    s = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
    assert abs(softmax_cross_entropy(Tensor(s), onehot).item() - cross_entropy(s, 0)) < 1e-10
    with pytest.raises(ValueError, match="one-hot"):
        softmax_cross_entropy(Tensor(s), np.array([1.0, 1.0, 0, 0, 0]))


# ---------------------------------------------------------------- backward

def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(5).normal(size=(3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = sum_(x)
    backward(loss, tape)
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_backward_zero_scale_gives_zero_gradient():
    p = Parameter("w", np.arange(4.0))
    with Tape() as tape:
        loss = sum_(scale(p.tensor, 0.0))
    backward(loss, tape)
    assert not p.grad.any()


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = relu(x)
    with pytest.raises(ShapeError):
        backward(y, tape)


def test_gradients_accumulate_until_zeroed():
    p = Parameter("w", np.array([1.0, 2.0]))
    for _ in range(2):
        with Tape() as tape:
            loss = sum_(square(p.tensor))
        backward(loss, tape)
    assert np.allclose(p.grad, 2 * 2 * np.array([1.0, 2.0]))
    p.zero_grad()
    assert not p.grad.any()


def test_tape_backward_visits_records_in_reverse():
    seen = []
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        a = relu(x)
        b = square(a)
        loss = sum_(b)
    for rec in tape.records:
        fn = rec.backward

        def wrapped(g, fn=fn, out=rec.out):
            seen.append(id(out))
            return fn(g)

        rec.backward = wrapped
    backward(loss, tape)
    assert seen == [id(r.out) for r in reversed(tape.records)]


def _grad_check(build, params, eps=1e-4):
    """Compare analytic gradients of ``build()`` with central differences."""
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build()
    backward(loss, tape)
    for p in params:
        num = central_difference(lambda: build().item(), p.tensor.data, eps)
        assert rel_error(p.grad, num) < 1e-3, p.name


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_gradient_check_layers(seed):
    rng = np.random.default_rng(seed)
    x = Parameter("x", rng.normal(size=(2, 2, 5, 5)))
    k = Parameter("k", rng.normal(size=(3, 2, 3, 3)))
    w = Parameter("w", rng.normal(size=(4, 3)))
    b = Parameter("b", rng.normal(size=4))
    w2 = Parameter("w2", rng.normal(size=(5, 4)))
    b2 = Parameter("b2", rng.normal(size=5))
    target = np.eye(5)[rng.integers(5)]

    def build():
        h = relu(conv2d(x.tensor, k.tensor, stride=2, padding=1))
        h = global_avg_pool(h)
        h = relu(linear(h, w.tensor, b.tensor))
        h = linear(h, w2.tensor, b2.tensor)
        row = reshape(take(h, [1]), (5,))
        return softmax_cross_entropy(row, target) + mean(square(h))

    _grad_check(build, [x, k, w, b, w2, b2])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_of_backward(seed, a, c):
    rng = np.random.default_rng(seed)
    p = Parameter("p", rng.normal(size=6))

    def grad_of(fn):
        p.zero_grad()
        with Tape() as tape:
            loss = fn()
        backward(loss, tape)
        return p.grad.copy()

    f = lambda: sum_(square(p.tensor))  # noqa: E731
    g = lambda: sum_(relu(p.tensor))  # noqa: E731
    combo = grad_of(lambda: scale(f(), a) + scale(g(), c))
    assert np.allclose(combo, a * grad_of(f) + c * grad_of(g), atol=1e-12)


def test_scale_grad_is_identity_forward():
    x = Tensor(np.arange(3.0), requires_grad=True)
    with Tape() as tape:
        y = scale_grad(x, 0.25)
        loss = sum_(y)
    assert np.array_equal(y.data, x.data)
    backward(loss, tape)
    assert np.allclose(x.grad, 0.25)


def test_concat_take_gradients():
    rng = np.random.default_rng(6)
    a = Parameter("a", rng.normal(size=(2, 3)))
    b = Parameter("b", rng.normal(size=(1, 3)))

    def build():
        c = concat([a.tensor, b.tensor], axis=0)
        return sum_(square(take(c, [0, 2, 2])))

    _grad_check(build, [a, b])


def test_forward_determinism():
    rng = np.random.default_rng(7)
    x, k = rng.normal(size=(2, 3, 9, 9)), rng.normal(size=(4, 3, 3, 3))
    one = conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
    two = conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
    assert one.tobytes() == two.tobytes()


# ---------------------------------------------------------------- RMSprop

def test_rmsprop_zero_gradient():
    p = Parameter("p", np.array([1.0, -2.0]))
    p.square_avg[...] = 4.0
    rmsprop_step([p], lr=0.1)
    assert np.array_equal(p.value, [1.0, -2.0])
    assert np.allclose(p.square_avg, 3.6)


def test_rmsprop_first_step_closed_form():
    p = Parameter("p", np.array([0.5]))
    p.grad[...] = 2.0
    rmsprop_step([p], lr=1e-3, decay=0.9, eps=1e-8)
    assert abs(p.value[0] - (0.5 - 1e-3 * 2.0 / (math.sqrt(0.1 * 4.0) + 1e-8))) < 1e-15


def test_rmsprop_three_step_trace():
    grads = [0.3, -1.2, 0.7]
    p = Parameter("p", np.array([1.5]))
    opt = RMSprop([p], lr=0.01, decay=0.9, eps=1e-8)
    for g in grads:
        opt.zero_grad()
        p.grad[...] = g
        opt.step()
    value, sq = rmsprop_trace(1.5, grads, 0.01, 0.9, 1e-8)
    assert abs(p.value[0] - value) < 1e-10
    assert abs(p.square_avg[0] - sq) < 1e-10


def test_rmsprop_non_finite_names_parameter():
    p = Parameter("layer.weight", np.array([1.0]))
    p.grad[...] = np.inf
    with pytest.raises(NonFiniteError, match="layer.weight"):
        rmsprop_step([p], lr=0.1)


# ---------------------------------------------------------------- kernel backends

def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_compiled_kernels_match_python():
    from sketchvid.kernels import _ckernels
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 3, 9, 9))
    assert np.array_equal(_ckernels.im2col(x, 3, 2, 4, 4), _pykernels.im2col(x, 3, 2, 4, 4))
    cols = rng.normal(size=(2, 27, 16))
    assert np.allclose(_ckernels.col2im(cols, 2, 3, 9, 9, 3, 2, 4, 4),
                       _pykernels.col2im(cols, 2, 3, 9, 9, 3, 2, 4, 4), atol=1e-12)
    img, u, v = rng.random((12, 10)), rng.normal(size=(12, 10)) * 3, rng.normal(size=(12, 10)) * 3
    assert np.allclose(_ckernels.warp_bilinear(img, u, v), _pykernels.warp_bilinear(img, u, v), atol=1e-12)
    args = [rng.normal(size=(12, 10)) for _ in range(4)]
    args[2] = np.abs(args[2])
    outs = []
    for mod in (_ckernels, _pykernels):
        state = [np.zeros((12, 10)) for _ in range(6)]
        n = mod.tvl1_inner(*args, *state, 0.045, 0.3, 0.25, 1e-4, 30)
        outs.append((n, state))
    assert outs[0][0] == outs[1][0]
    for a, b in zip(outs[0][1], outs[1][1]):
        assert np.allclose(a, b, atol=1e-9)
