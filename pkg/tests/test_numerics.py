import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import redpanda.numerics as nx
from redpanda.numerics import Tensor, checkpoint
from redpanda.numerics.gradcheck import max_rel_error, numerical_grad

STEP = 1e-4
TOL = 1e-5


def conv_reference(x, w, stride=1, pad=0):
    """Quadruple-loop cross-correlation over NHWC input."""
    n, h, wd, c = x.shape
    kh, kw, _, cout = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    patch = xp[b, i * stride:i * stride + kh, j * stride:j * stride + kw, :]
                    out[b, i, j, o] = np.sum(patch * w[:, :, :, o])
    return out


def check_grads(build, arrays, tol=TOL):
    """Compare backward() against central differences for scalar build(*tensors)."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    nx.backward(build(*tensors))
    numeric = numerical_grad(lambda *arrs: build(*[Tensor(a) for a in arrs]).item(),
                             [a.copy() for a in arrays], step=STEP)
    for t, g in zip(tensors, numeric):
        assert max_rel_error(t.grad, g) < tol


def away_from_zero(a, gap=1e-2):
    return np.where(np.abs(a) < gap, np.sign(a + 1e-300) * gap + a, a)


# --------------------------------------------------------------- forward ops

def test_conv_identity_kernel_is_identity():
    x = np.random.default_rng(0).random((2, 6, 5, 3))
    w = np.eye(3).reshape(1, 1, 3, 3)
    out = nx.conv2d(Tensor(x), Tensor(w))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0), (2, 0)])
def test_conv_matches_loop_reference(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.normal(size=(1, 5, 5, 1))
    w = rng.normal(size=(3, 3, 1, 1))
    got = nx.conv2d(Tensor(x), Tensor(w), stride=stride, padding=pad).data
    np.testing.assert_allclose(got, conv_reference(x, w, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_multichannel_same_padding():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 7, 6, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    np.testing.assert_allclose(nx.conv2d(Tensor(x), Tensor(w)).data, conv_reference(x, w, 1, 1), atol=1e-12)


def test_conv_shape_errors_name_op():
    with pytest.raises(ValueError, match="conv2d"):
        nx.conv2d(Tensor(np.zeros((1, 4, 4, 2))), Tensor(np.zeros((3, 3, 3, 1))))
    with pytest.raises(ValueError, match="matmul"):
        nx.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ValueError, match="add"):
        nx.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))


def test_l2_normalize_3_4():
    np.testing.assert_allclose(nx.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8])


def test_l2_normalize_zero_raises():
    with pytest.raises(ValueError):
        nx.l2_normalize(Tensor(np.zeros((2, 3))), axis=1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_l2_normalize_unit_norm(values):
    out = nx.l2_normalize(Tensor(np.array(values))).data
    assert abs(np.linalg.norm(out) - 1.0) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-1e3, 1e3))
def test_logsumexp_shift_invariance(values, c):
    x = np.array(values)
    lhs = nx.logsumexp(Tensor(x), axis=0).item()
    rhs = nx.logsumexp(Tensor(x - c), axis=0).item() + c
    assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(c))


def test_logsumexp_overflow_safe():
    assert nx.logsumexp(Tensor([1000.0, 1000.0]), axis=0).item() == pytest.approx(1000.0 + np.log(2))


def test_logsumexp_mask_excludes_entries():
    x = np.array([[1.0, 2.0, 300.0]])
    masked = nx.logsumexp(Tensor(x), axis=1, mask=np.array([[True, True, False]])).item()
    assert masked == pytest.approx(np.log(np.exp(1.0) + np.exp(2.0)))


def test_upsample_and_concat_values():
    x = np.arange(4.0).reshape(1, 2, 2, 1)
    up = nx.upsample2x(Tensor(x)).data[0, :, :, 0]
    np.testing.assert_array_equal(up, [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])
    cat = nx.concat([Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2)))], axis=1).data
    np.testing.assert_array_equal(cat, [[1, 0, 0], [1, 0, 0]])


# --------------------------------------------------------------- backward

def test_grad_of_sum_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
    nx.backward(nx.sum_(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_grad_of_unused_leaf_is_zero():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones((2, 2)), requires_grad=True)
    grads = nx.backward(nx.sum_(x * 2.0), wrt=[x, unused])
    np.testing.assert_array_equal(grads[unused], np.zeros((2, 2)))
    np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))


def test_normalize_dot_matches_finite_differences():
    rng = np.random.default_rng(11)
    c = rng.normal(size=5)
    check_grads(lambda x: nx.sum_(nx.l2_normalize(x) * c), [rng.normal(size=5)])


def test_non_scalar_loss_raises():
    with pytest.raises(nx.GraphError):
        nx.backward(Tensor(np.ones(3), requires_grad=True) * 2.0)


def test_reused_graph_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = nx.sum_(x * x)
    nx.backward(loss)
    with pytest.raises(nx.GraphError):
        nx.backward(loss)


def test_backward_overwrites_not_accumulates():
    x = Tensor(np.ones(3), requires_grad=True)
    nx.backward(nx.sum_(x * 3.0))
    nx.backward(nx.sum_(x * 3.0))
    np.testing.assert_array_equal(x.grad, np.full(3, 3.0))


def test_shared_subexpression_accumulates_within_graph():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    nx.backward(nx.sum_(y + y * 3.0))
    np.testing.assert_allclose(x.grad, [16.0])


def _random_case(op, rng):
    """Build (fn, arrays) for one randomized gradient check of ``op``."""
    if op == "matmul":
        m, k, n = rng.integers(1, 5, size=3)
        c = rng.normal(size=(m, n))
        return lambda a, b: nx.sum_(nx.matmul(a, b) * c), [rng.normal(size=(m, k)), rng.normal(size=(k, n))]
    if op == "conv2d":
        stride = int(rng.integers(1, 3))
        h, w = rng.integers(3, 7, size=2)
        cin, cout = rng.integers(1, 4, size=2)
        x = rng.normal(size=(2, h, w, cin))
        k = rng.normal(size=(3, 3, cin, cout))
        c = rng.normal(size=nx.conv2d(Tensor(x), Tensor(k), stride=stride).shape)
        return lambda a, b: nx.sum_(nx.conv2d(a, b, stride=stride) * c), [x, k]
    shape = tuple(int(s) for s in rng.integers(1, 5, size=2))
    c = rng.normal(size=shape)
    if op == "relu":
        return lambda a: nx.sum_(nx.relu(a) * c), [away_from_zero(rng.normal(size=shape))]
    if op == "leaky_relu":
        return lambda a: nx.sum_(nx.leaky_relu(a) * c), [away_from_zero(rng.normal(size=shape))]
    if op == "sigmoid":
        return lambda a: nx.sum_(nx.sigmoid(a) * c), [rng.normal(size=shape)]
    if op == "add":
        return lambda a, b: nx.sum_(nx.add(a, b) * c), [rng.normal(size=shape), rng.normal(size=shape[1:])]
    if op == "mul":
        return lambda a, b: nx.sum_(nx.mul(a, b) * c), [rng.normal(size=shape), rng.normal(size=shape)]
    if op == "sub":
        return lambda a, b: nx.sum_(nx.sub(a, b) * c), [rng.normal(size=shape), rng.normal(size=shape)]
    if op == "square":
        return lambda a: nx.sum_(nx.square(a) * c), [rng.normal(size=shape)]
    if op == "exp":
        return lambda a: nx.sum_(nx.exp(a) * c), [rng.normal(size=shape)]
    if op == "log":
        return lambda a: nx.sum_(nx.log(a) * c), [rng.uniform(0.5, 2.0, size=shape)]
    if op == "mean":
        axis = int(rng.integers(0, 2))
        cm = rng.normal(size=shape[1 - axis])
        return lambda a: nx.sum_(nx.mean(a, axis=axis) * cm), [rng.normal(size=shape)]
    if op == "sum":
        axis = int(rng.integers(0, 2))
        cs = rng.normal(size=shape[1 - axis])
        return lambda a: nx.sum_(nx.sum_(a, axis=axis) * cs), [rng.normal(size=shape)]
    if op == "l2_normalize":
        return lambda a: nx.sum_(nx.l2_normalize(a, axis=1) * c), [rng.normal(size=shape)]
    if op == "logsumexp":
        mask = rng.random(shape) < 0.7
        mask[:, 0] = True
        cl = rng.normal(size=shape[0])
        return lambda a: nx.sum_(nx.logsumexp(a, axis=1, mask=mask) * cl), [rng.normal(size=shape) * 3]
    if op == "upsample2x":
        x = rng.normal(size=(1, shape[0], shape[1], 2))
        cu = rng.normal(size=(1, 2 * shape[0], 2 * shape[1], 2))
        return lambda a: nx.sum_(nx.upsample2x(a) * cu), [x]
    if op == "concat":
        cc = rng.normal(size=(shape[0], shape[1] + 2))
        return lambda a, b: nx.sum_(nx.concat([a, b], axis=1) * cc), [rng.normal(size=shape),
                                                                       rng.normal(size=(shape[0], 2))]
    if op == "reshape":
        cr = rng.normal(size=(shape[0] * shape[1],))
        return lambda a: nx.sum_(a.reshape(-1) * cr), [rng.normal(size=shape)]
    if op == "transpose":
        ct = rng.normal(size=shape[::-1])
        return lambda a: nx.sum_(a.T * ct), [rng.normal(size=shape)]
    if op == "slice_rows":
        cs = rng.normal(size=(1, shape[1]))
        return lambda a: nx.sum_(nx.slice_rows(a, 0, 1) * cs), [rng.normal(size=shape)]
    raise KeyError(op)


DIFF_OPS = ["matmul", "conv2d", "relu", "leaky_relu", "sigmoid", "add", "mul", "sub", "square",
            "exp", "log", "mean", "sum", "l2_normalize", "logsumexp", "upsample2x", "concat",
            "reshape", "transpose", "slice_rows"]


@pytest.mark.parametrize("op", DIFF_OPS)
def test_randomized_gradcheck(op):
    for seed in range(20):
        fn, arrays = _random_case(op, np.random.default_rng([seed, DIFF_OPS.index(op)]))
        check_grads(fn, arrays)


# --------------------------------------------------------------- Adam

def test_adam_zero_grad_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = nx.Adam([p], lr=0.1)
    opt.step([np.zeros(2)])
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_zero_lr_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = nx.Adam([p], lr=0.0)
    opt.step([np.array([0.3, -0.1])])
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_single_step_matches_hand_computation():
    g, lr, b1, b2, eps = 0.5, 0.01, 0.9, 0.999, 1e-8
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1)
    v_hat = v / (1 - b2)
    expected = 1.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
    p = Tensor(np.array([1.0]), requires_grad=True)
    nx.Adam([p], lr=lr).step([np.array([g])])
    assert p.data[0] == pytest.approx(expected, rel=1e-12)


def test_adam_rejects_nan():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(nx.DivergenceError):
        nx.Adam([p]).step([np.array([np.nan, 0.0])])


def test_adam_step_counter_increases():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = nx.Adam([p])
    for expected in (1, 2, 3):
        opt.step([np.ones(2)])
        assert opt.t == expected


# --------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    params = {"a.w": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.float32([1.5])}
    path = tmp_path / "ck.bin"
    checkpoint.save(path, params, {"seed": 3})
    loaded, meta = checkpoint.load(path)
    assert list(loaded) == ["a.w", "b"]
    np.testing.assert_array_equal(loaded["a.w"], params["a.w"])
    assert meta == {"seed": 3}
    assert path.read_bytes()[:4] == b"RPCK"
    assert path.read_bytes()[4] == 1


def test_checkpoint_rejects_garbage():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"nope" + bytes(10))
    blob = checkpoint.dumps({"x": np.ones(4, dtype=np.float32)})
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])


def test_checkpoint_bytes_are_little_endian_f32():
    blob = checkpoint.dumps({"x": np.array([1.0], dtype=np.float32)})
    assert blob.endswith(np.array([1.0], dtype="<f4").tobytes())
    assert isinstance(io.BytesIO(blob).read(), bytes)
