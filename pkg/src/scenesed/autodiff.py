"""Dense float64 tensors with reverse-mode differentiation.

Every layer of the detector is built from the operations in this module.
Each operation records its parent tensors and a closure that routes the
upstream gradient; :func:`backward` walks the recorded graph once in
reverse topological order. Gradients accumulate additively, so a tensor
used in several branches receives the sum of the branch gradients, and
calling backward on several graphs that share parameters sums their
contributions (how batches are accumulated).

Broadcasting is deliberately restricted: scalar-tensor arithmetic and
trailing-axis bias addition only. Anything else raises, which keeps shape
bugs loud.
"""

import numpy as np

from . import kernels as K
from .errors import SceneSedError


class GradientError(SceneSedError):
    """Raised for malformed backward calls or missing gradients."""


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ev = np.exp(x[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise GradientError("tensor/tensor division is not supported; multiply by a scalar")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def abs(self):
        return absolute(self)


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _result(data, parents, backward_fn):
    rg = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=rg, parents=parents if rg else (),
                  backward_fn=backward_fn if rg else None)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(out):
    """Propagate d(out)/d(node) to every reachable tensor that wants a gradient.

    `out` must be scalar (a single element). The graph is a DAG by
    construction, so a plain iterative DFS gives a valid topological order.
    """
    if out.data.size != 1:
        raise GradientError(f"backward requires a scalar output, got shape {out.data.shape}")
    if not out.requires_grad:
        return
    order = []
    visited = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    _accum(out, np.ones_like(out.data))
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra operations


def add(a, b):
    if not isinstance(b, Tensor):
        b_val = float(b)
        data = a.data + b_val

        def bw(g):
            _accum(a, g)

        return _result(data, (a,), bw)
    if a.shape == b.shape:
        data = a.data + b.data

        def bw(g):
            _accum(a, g)
            _accum(b, g)

        return _result(data, (a, b), bw)
    if b.ndim == 1 and a.ndim > 1 and a.shape[-1] == b.shape[0]:
        # trailing-axis bias
        data = a.data + b.data

        def bw(g):
            _accum(a, g)
            _accum(b, g.reshape(-1, b.shape[0]).sum(axis=0))

        return _result(data, (a, b), bw)
    if a.ndim == 0 or b.ndim == 0:
        data = a.data + b.data

        def bw(g):
            _accum(a, g if a.ndim else np.sum(g))
            _accum(b, g if b.ndim else np.sum(g))

        return _result(data, (a, b), bw)
    raise GradientError(f"cannot add shapes {a.shape} and {b.shape}")


def mul(a, b):
    if not isinstance(b, Tensor):
        b_val = float(b)
        data = a.data * b_val

        def bw(g):
            _accum(a, g * b_val)

        return _result(data, (a,), bw)
    if a.shape == b.shape:
        data = a.data * b.data

        def bw(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)

        return _result(data, (a, b), bw)
    if a.ndim == 0 or b.ndim == 0:
        data = a.data * b.data

        def bw(g):
            _accum(a, g * b.data if a.ndim else np.sum(g * b.data))
            _accum(b, g * a.data if b.ndim else np.sum(g * a.data))

        return _result(data, (a, b), bw)
    raise GradientError(f"cannot multiply shapes {a.shape} and {b.shape}")


def matmul(a, b):
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise GradientError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def bw(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        return _result(data, (a, b), bw)
    if a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise GradientError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def bw(g):
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)

        return _result(data, (a, b), bw)
    if a.ndim == 1 and b.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise GradientError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def bw(g):
            _accum(a, b.data @ g)
            _accum(b, np.outer(a.data, g))

        return _result(data, (a, b), bw)
    raise GradientError(f"unsupported matmul ranks: {a.ndim} @ {b.ndim}")


def tsum(x):
    data = np.array(x.data.sum())

    def bw(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _result(data, (x,), bw)


def tmean(x, axis=None):
    if axis is None:
        n = x.data.size
        data = np.array(x.data.mean())

        def bw(g):
            _accum(x, np.full_like(x.data, float(g) / n))

        return _result(data, (x,), bw)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    n = 1
    for ax in axes:
        n *= x.shape[ax]
    data = x.data.mean(axis=axes)

    def bw(g):
        ge = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(ge / n, x.data.shape).copy())

    return _result(data, (x,), bw)


def sigmoid(x):
    s = _sigmoid(x.data)

    def bw(g):
        _accum(x, g * s * (1.0 - s))

    return _result(s, (x,), bw)


def tanh(x):
    t = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1.0 - t * t))

    return _result(t, (x,), bw)


def swish(x):
    """x * sigmoid(x); the network's activation function."""
    s = _sigmoid(x.data)
    data = x.data * s

    def bw(g):
        _accum(x, g * (s + x.data * s * (1.0 - s)))

    return _result(data, (x,), bw)


def exp(x):
    e = np.exp(x.data)

    def bw(g):
        _accum(x, g * e)

    return _result(e, (x,), bw)


def log(x):
    data = np.log(x.data)

    def bw(g):
        _accum(x, g / x.data)

    return _result(data, (x,), bw)


def absolute(x):
    """|x| with subgradient 0 at exact zeros (np.sign(0) == 0)."""
    data = np.abs(x.data)

    def bw(g):
        _accum(x, g * np.sign(x.data))

    return _result(data, (x,), bw)


def reshape(x, shape):
    data = x.data.reshape(shape)

    def bw(g):
        _accum(x, g.reshape(x.data.shape))

    return _result(data, (x,), bw)


def transpose(x, axes=None):
    data = np.ascontiguousarray(x.data.transpose(axes))
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(x, np.ascontiguousarray(g.transpose(inv)))

    return _result(data, (x,), bw)


def concat(tensors, axis=0):
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, np.ascontiguousarray(g[tuple(sl)]))

    return _result(data, tuple(tensors), bw)


def tile_rows(v, n_rows):
    """Repeat a vector as the rows of an (n_rows, len(v)) matrix."""
    if v.ndim != 1:
        raise GradientError(f"tile_rows expects a vector, got shape {v.shape}")
    data = np.tile(v.data, (n_rows, 1))

    def bw(g):
        _accum(v, g.sum(axis=0))

    return _result(data, (v,), bw)


def crop2d(x, out_h, out_w):
    """Keep the leading out_h x out_w corner of the last two axes."""
    if x.shape[-2] < out_h or x.shape[-1] < out_w:
        raise GradientError(f"cannot crop {x.shape} to ({out_h}, {out_w})")
    data = np.ascontiguousarray(x.data[..., :out_h, :out_w])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[..., :out_h, :out_w] = g
        _accum(x, gx)

    return _result(data, (x,), bw)


# ---------------------------------------------------------------------------
# network operations backed by the kernel layer


def conv2d(x, w, b, padding=(0, 0)):
    """Stride-1 cross-correlation over a (C_in, H, W) map.

    Weight is (C_out, C_in, kh, kw); padding is per spatial axis. With
    "same" padding (k // 2 for odd kernels) the spatial extent is
    preserved.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise GradientError(f"conv2d expects (C,H,W) input and 4-d weight, got {x.shape}, {w.shape}")
    if x.shape[0] != w.shape[1]:
        raise GradientError(f"conv2d channel mismatch: input has {x.shape[0]}, weight expects {w.shape[1]}")
    pad_h, pad_w = padding
    kh, kw = w.shape[2], w.shape[3]
    in_h, in_w = x.shape[1], x.shape[2]
    if kh > in_h + 2 * pad_h or kw > in_w + 2 * pad_w:
        raise GradientError(f"kernel ({kh}, {kw}) does not fit padded input ({in_h + 2 * pad_h}, {in_w + 2 * pad_w})")
    if b.shape != (w.shape[0],):
        raise GradientError(f"conv2d bias shape {b.shape} does not match {w.shape[0]} output channels")
    data = K.conv2d_forward(x.data, w.data, pad_h, pad_w) + b.data[:, None, None]

    def bw(g):
        if x.requires_grad:
            _accum(x, K.conv2d_backward_input(g, w.data, in_h, in_w, pad_h, pad_w))
        if w.requires_grad:
            _accum(w, K.conv2d_backward_weight(g, x.data, kh, kw, pad_h, pad_w))
        if b.requires_grad:
            _accum(b, g.sum(axis=(1, 2)))

    return _result(data, (x, w, b), bw)


def max_pool2d(x, pool):
    """Non-overlapping max pooling; trailing remainder rows/cols are dropped.

    Backward routes each window's gradient to its first maximal element.
    """
    pool_h, pool_w = pool
    if x.ndim != 3:
        raise GradientError(f"max_pool2d expects (C,H,W), got {x.shape}")
    if pool_h < 1 or pool_w < 1:
        raise GradientError("pool extents must be >= 1")
    in_h, in_w = x.shape[1], x.shape[2]
    if pool_h > in_h or pool_w > in_w:
        raise GradientError(f"pool ({pool_h}, {pool_w}) larger than input axis ({in_h}, {in_w})")
    data, arg = K.maxpool2d_forward(x.data, pool_h, pool_w)

    def bw(g):
        _accum(x, K.maxpool2d_backward(g, arg, in_h, in_w, pool_h, pool_w))

    return _result(data, (x,), bw)


def transposed_conv2d(x, w, stride=(1, 1), b=None):
    """Fractionally-strided upsampling; the adjoint of stride-1 conv2d.

    Weight is (C_in, C_out, kh, kw); output extent is (in-1)*stride + kernel
    per axis.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise GradientError(f"transposed_conv2d expects (C,H,W) input and 4-d weight, got {x.shape}, {w.shape}")
    if x.shape[0] != w.shape[0]:
        raise GradientError(f"transposed_conv2d channel mismatch: input has {x.shape[0]}, weight expects {w.shape[0]}")
    stride_h, stride_w = stride
    if stride_h < 1 or stride_w < 1:
        raise GradientError("stride must be >= 1 per axis")
    kh, kw = w.shape[2], w.shape[3]
    data = K.tconv2d_forward(x.data, w.data, stride_h, stride_w)
    parents = (x, w)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise GradientError(f"transposed_conv2d bias shape {b.shape} does not match {w.shape[1]} output channels")
        data = data + b.data[:, None, None]
        parents = (x, w, b)

    def bw(g):
        if x.requires_grad:
            _accum(x, K.tconv2d_backward_input(g, w.data, stride_h, stride_w))
        if w.requires_grad:
            _accum(w, K.tconv2d_backward_weight(g, x.data, kh, kw, stride_h, stride_w))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(1, 2)))

    return _result(data, parents, bw)


def gru_step(h_prev, x, params):
    """One GRU step built from primitive ops.

    Gate convention: u = sigmoid(Wu x + Uu h + bu), r likewise, candidate
    c = tanh(Wc x + Uc (r*h) + bc), next state h' = (1-u)*h + u*c.
    """
    if x.shape != (params.w_update.shape[1],) or h_prev.shape != (params.u_update.shape[1],):
        raise GradientError(
            f"gru_step dimension mismatch: x {x.shape}, h {h_prev.shape}, "
            f"W {params.w_update.shape}, U {params.u_update.shape}")
    u = sigmoid(params.w_update @ x + params.u_update @ h_prev + params.b_update)
    r = sigmoid(params.w_reset @ x + params.u_reset @ h_prev + params.b_reset)
    c = tanh(params.w_cand @ x + params.u_cand @ mul(r, h_prev) + params.b_cand)
    return mul(1.0 - u, h_prev) + mul(u, c)


def gru_sequence(x, h0, params):
    """Run a whole GRU layer over (T, D) input in one fused op.

    Identical math to folding :func:`gru_step` over the rows, but forward
    and backward-through-time run inside the kernel layer.
    """
    if x.ndim != 2:
        raise GradientError(f"gru_sequence expects (T, D) input, got {x.shape}")
    if x.shape[1] != params.w_update.shape[1]:
        raise GradientError(f"gru_sequence input width {x.shape[1]} does not match W {params.w_update.shape}")
    p = params
    h, u, r, cand = K.gru_forward(
        x.data, h0.data, p.w_update.data, p.u_update.data, p.b_update.data,
        p.w_reset.data, p.u_reset.data, p.b_reset.data,
        p.w_cand.data, p.u_cand.data, p.b_cand.data)

    def bw(g):
        (gx, gh0, gwu, guu, gbu, gwr, gur, gbr, gwc, guc, gbc) = K.gru_backward(
            g, x.data, h0.data, h, u, r, cand,
            p.w_update.data, p.u_update.data, p.w_reset.data, p.u_reset.data,
            p.w_cand.data, p.u_cand.data)
        _accum(x, gx)
        _accum(h0, gh0)
        _accum(p.w_update, gwu)
        _accum(p.u_update, guu)
        _accum(p.b_update, gbu)
        _accum(p.w_reset, gwr)
        _accum(p.u_reset, gur)
        _accum(p.b_reset, gbr)
        _accum(p.w_cand, gwc)
        _accum(p.u_cand, guc)
        _accum(p.b_cand, gbc)

    parents = (x, h0, p.w_update, p.u_update, p.b_update,
               p.w_reset, p.u_reset, p.b_reset, p.w_cand, p.u_cand, p.b_cand)
    return _result(h, parents, bw)


def flip_rows(x):
    """Reverse the time axis of a (T, D) tensor (for the backward GRU pass)."""
    data = np.ascontiguousarray(x.data[::-1])

    def bw(g):
        _accum(x, np.ascontiguousarray(g[::-1]))

    return _result(data, (x,), bw)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy, evaluated in the stable logit form.

    Per cell: max(y, 0) - y*z + log(1 + exp(-|y|)). Gradient is
    (sigmoid(y) - z) / size.
    """
    z = np.asarray(targets, dtype=np.float64)
    if logits.shape != z.shape:
        raise GradientError(f"bce_with_logits shape mismatch: logits {logits.shape}, targets {z.shape}")
    y = logits.data
    per_cell = np.maximum(y, 0.0) - y * z + np.log1p(np.exp(-np.abs(y)))
    data = np.array(per_cell.mean())
    n = y.size

    def bw(g):
        _accum(logits, (float(g) / n) * (_sigmoid(y) - z))

    return _result(data, (logits,), bw)
