"""Dense tensors with tape-free reverse-mode differentiation.

Every op returns a new :class:`Tensor`. When at least one input requires a
gradient, the output keeps references to its parents and a closure that
maps the output gradient to parent gradients. :func:`backward` walks that
graph once in reverse topological order.

Images are laid out NHWC and convolution kernels as (kh, kw, c_in, c_out).
"""
import numpy as np


class GraphError(RuntimeError):
    """Raised when a graph is misused (non-scalar loss, reused graph)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_op", "_freed")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._freed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._op == "leaf"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a constant instead")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _raise_item(t):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    if dtype is None and np.isscalar(x):
        return Tensor(np.asarray(x))
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward_fn, op):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._op = op
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _coerce_pair(a, b):
    a_t, b_t = isinstance(a, Tensor), isinstance(b, Tensor)
    if a_t and not b_t:
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif b_t and not a_t:
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not a_t and not b_t:
        a, b = Tensor(a), Tensor(b)
    return a, b


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = _coerce_pair(a, b)
    _check_broadcast("add", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), back, "add")


def sub(a, b):
    a, b = _coerce_pair(a, b)
    _check_broadcast("sub", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), back, "sub")


def mul(a, b):
    a, b = _coerce_pair(a, b)
    _check_broadcast("mul", a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), back, "mul")


def square(x):
    def back(g):
        return (2.0 * x.data * g,)

    return _make(x.data * x.data, (x,), back, "square")


def exp(x):
    out_data = np.exp(x.data)

    def back(g):
        return (g * out_data,)

    return _make(out_data, (x,), back, "exp")


def log(x):
    if np.any(x.data <= 0):
        raise ValueError("log: input must be strictly positive")

    def back(g):
        return (g / x.data,)

    return _make(np.log(x.data), (x,), back, "log")


def relu(x):
    mask = x.data > 0

    def back(g):
        return (g * mask,)

    return _make(x.data * mask, (x,), back, "relu")


def leaky_relu(x, slope=0.2):
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)

    def back(g):
        return (g * scale,)

    return _make(x.data * scale, (x,), back, "leaky_relu")


def sigmoid(x):
    out_data = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def back(g):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (x,), back, "sigmoid")


# ------------------------------------------------------------------ reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims=False):
    axes = _norm_axis(axis, x.ndim)
    out_data = x.data.sum(axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out_data, (x,), back, "sum")


def mean(x, axis=None, keepdims=False):
    axes = _norm_axis(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    if count == 0:
        raise ValueError(f"mean: empty reduction over shape {x.shape}")
    out_data = x.data.mean(axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make(out_data, (x,), back, "mean")


def logsumexp(x, axis=-1, mask=None):
    """Log-sum-exp along ``axis``; entries where ``mask`` is False are excluded.

    Excluded entries contribute an exact zero to the sum and receive an exact
    zero gradient, so their values cannot influence the result.
    """
    axis = axis % x.ndim
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValueError(f"logsumexp: mask shape {mask.shape} != input shape {x.shape}")
        if not np.all(mask.any(axis=axis)):
            raise ValueError("logsumexp: a slice has no unmasked entries")
        vals = np.where(mask, x.data, -np.inf)
    else:
        vals = x.data
    m = vals.max(axis=axis, keepdims=True)
    e = np.exp(vals - m)
    s = e.sum(axis=axis, keepdims=True)
    out_keep = np.log(s) + m
    out_data = np.squeeze(out_keep, axis=axis)

    def back(g):
        soft = e / s
        return (np.expand_dims(g, axis) * soft,)

    return _make(out_data, (x,), back, "logsumexp")


def l2_normalize(x, axis=-1, eps=0.0):
    """Scale slices along ``axis`` to unit Euclidean norm.

    A zero slice raises: a zero code always signals an upstream bug.
    """
    axis = axis % x.ndim
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if np.any(norm <= eps):
        raise ValueError("l2_normalize: zero-norm input")
    y = x.data / norm

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - y * dot) / norm,)

    return _make(y, (x,), back, "l2_normalize")


# -------------------------------------------------------------------- shaping

def reshape(x, shape):
    shape = tuple(shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {x.shape} to {shape}") from None

    def back(g):
        return (g.reshape(x.shape),)

    return _make(out_data, (x,), back, "reshape")


def transpose(x):
    if x.ndim != 2:
        raise ValueError(f"transpose: expected a 2-D tensor, got shape {x.shape}")

    def back(g):
        return (g.T,)

    return _make(x.data.T, (x,), back, "transpose")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: nothing to concatenate")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]} along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


def slice_rows(x, start, stop):
    """Rows ``start:stop`` along the first axis."""
    n = x.shape[0]
    if not 0 <= start <= stop <= n:
        raise ValueError(f"slice_rows: [{start}:{stop}] out of bounds for shape {x.shape}")

    def back(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return _make(x.data[start:stop], (x,), back, "slice_rows")


def upsample2x(x):
    """Nearest-neighbour 2x upsampling of an NHWC tensor."""
    if x.ndim != 4:
        raise ValueError(f"upsample2x: expected NHWC input, got shape {x.shape}")
    n, h, w, c = x.shape
    out_data = np.broadcast_to(x.data[:, :, None, :, None, :], (n, h, 2, w, 2, c)).reshape(n, 2 * h, 2 * w, c)

    def back(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return _make(out_data, (x,), back, "upsample2x")


# ------------------------------------------------------------------ linear algebra

def matmul(a, b):
    a, b = _coerce_pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), back, "matmul")


def _conv_geometry(h, w, kh, kw, stride, pad):
    ho = (h + 2 * pad[0] - kh) // stride + 1
    wo = (w + 2 * pad[1] - kw) // stride + 1
    return ho, wo


def _im2col(xp, kh, kw, stride, ho, wo):
    n, _, _, c = xp.shape
    sn, sh, sw, sc = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (n, ho, wo, kh, kw, c), (sn, sh * stride, sw * stride, sh, sw, sc), writeable=False)
    return view.reshape(n * ho * wo, kh * kw * c)


def _correlate(xp, w, stride, ho, wo):
    kh, kw, cin, cout = w.shape
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = cols @ w.reshape(kh * kw * cin, cout)
    return out.reshape(xp.shape[0], ho, wo, cout), cols


def _pad_hw(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))


def conv2d(x, w, stride=1, padding="same"):
    """2-D cross-correlation of NHWC ``x`` with a (kh, kw, c_in, c_out) kernel.

    ``padding`` is ``"same"`` (zero padding of k // 2), ``"valid"``, or an int.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d: expected NHWC input and 4-D kernel, got {x.shape} and {w.shape}")
    n, h, wd, c = x.shape
    kh, kw, cin, cout = w.shape
    if cin != c:
        raise ValueError(f"conv2d: input has {c} channels but kernel {w.shape} expects {cin}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if padding == "same":
        pad = (kh // 2, kw // 2)
    elif padding == "valid":
        pad = (0, 0)
    else:
        pad = (int(padding), int(padding))
    ho, wo = _conv_geometry(h, wd, kh, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {w.shape} with stride {stride} does not fit input {x.shape}")

    xp = _pad_hw(x.data, *pad)
    out_data, cols = _correlate(xp, w.data, stride, ho, wo)

    def back(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            if stride == 1 and kh - 1 - pad[0] >= 0 and kw - 1 - pad[1] >= 0:
                # input gradient = correlation of g with the flipped, transposed kernel
                w_flip = np.ascontiguousarray(w.data[::-1, ::-1].transpose(0, 1, 3, 2))
                gp = _pad_hw(g, kh - 1 - pad[0], kw - 1 - pad[1])
                gx, _ = _correlate(gp, w_flip, 1, xp.shape[1] - 2 * pad[0], xp.shape[2] - 2 * pad[1])
                gx = gx[:, :h, :wd, :]
            else:
                dcols = (g2 @ w.data.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
                dxp = np.zeros(xp.shape, dtype=g.dtype)
                he = stride * (ho - 1) + 1
                we = stride * (wo - 1) + 1
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, i:i + he:stride, j:j + we:stride, :] += dcols[:, :, :, i, j, :]
                gx = dxp[:, pad[0]:pad[0] + h, pad[1]:pad[1] + wd, :]
        return gx, gw

    return _make(out_data, (x, w), back, "conv2d")


# ---------------------------------------------------------------- backward

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, wrt=None):
    """Differentiate a scalar ``loss`` through its recorded graph.

    Every leaf that requires a gradient and participates in the graph gets a
    fresh ``.grad`` (previous values are overwritten, never accumulated).
    Leaves listed in ``wrt`` that do not participate get zeros. The graph is
    released afterwards; calling ``backward`` on it again raises
    :class:`GraphError`.

    Returns a dict mapping each leaf tensor to its gradient array.
    """
    if loss.size != 1:
        raise GraphError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if loss._freed:
        raise GraphError("backward: this graph was already differentiated; rebuild it with a new forward pass")

    grads = {}
    if loss.requires_grad:
        order = _topo_order(loss)
        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if node.is_leaf:
                if g is None:
                    g = np.zeros_like(node.data)
                node.grad = g
                grads[node] = g
                continue
            if g is not None:
                parent_grads = node._backward(g)
                for p, pg in zip(node._parents, parent_grads):
                    if pg is None or not p.requires_grad:
                        continue
                    key = id(p)
                    if key in pending:
                        pending[key] = pending[key] + pg
                    else:
                        pending[key] = pg
            node._backward = None
            node._parents = ()
            node._freed = True
    if wrt is not None:
        for leaf in wrt:
            if leaf not in grads:
                leaf.grad = np.zeros_like(leaf.data)
                grads[leaf] = leaf.grad
    return grads
