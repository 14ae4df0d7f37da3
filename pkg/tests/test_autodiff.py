"""Tensor-engine tests: value oracles and finite-difference gradient checks."""

import numpy as np
import pytest

from scenesed import autodiff as ad
from scenesed.autodiff import GradientError, Parameter, Tensor, backward
from scenesed.model import GruParams

from helpers import finite_diff, rel_err

TOL = 1e-4
FD_H = 1e-5


def param(name, data):
    return Parameter(name, np.asarray(data, dtype=float))


# ---------------------------------------------------------------------------
# backward basics


def test_square_sum_gradient():
    w = param("w", [1.0, 2.0])
    backward(ad.tsum(ad.mul(w, w)))
    assert np.array_equal(w.grad, [2.0, 4.0])


def test_sigmoid_gradient_at_zero():
    x = param("x", 0.0)
    backward(ad.sigmoid(x))
    assert abs(float(x.grad) - 0.25) < 1e-15


def test_gradient_accumulates_over_branches():
    x = param("x", [3.0, -1.0])
    backward(ad.tsum(ad.add(x, x)))
    assert np.array_equal(x.grad, [2.0, 2.0])


def test_backward_requires_scalar():
    x = param("x", [1.0, 2.0])
    with pytest.raises(GradientError):
        backward(ad.mul(x, x))


def test_repeated_backward_accumulates_into_parameters():
    w = param("w", [1.0, 2.0])
    backward(ad.tsum(ad.mul(w, w)))
    backward(ad.tsum(ad.mul(w, w)))
    assert np.array_equal(w.grad, [4.0, 8.0])


def test_constants_get_no_gradient():
    c = Tensor([1.0, 2.0])
    w = param("w", [3.0, 4.0])
    backward(ad.tsum(ad.mul(c, w)))
    assert c.grad is None
    assert np.array_equal(w.grad, [1.0, 2.0])


# ---------------------------------------------------------------------------
# broadcasting rules


def test_add_rejects_mismatched_shapes():
    a = param("a", np.ones((2, 3)))
    b = param("b", np.ones((3, 2)))
    with pytest.raises(GradientError):
        ad.add(a, b)


def test_mul_rejects_row_broadcast():
    a = param("a", np.ones((2, 3)))
    b = param("b", np.ones(3))
    with pytest.raises(GradientError):
        ad.mul(a, b)


def test_bias_row_add_gradient():
    a = param("a", np.arange(6.0).reshape(2, 3))
    b = param("b", [1.0, 2.0, 3.0])
    backward(ad.tsum(ad.add(a, b)))
    assert np.array_equal(b.grad, [2.0, 2.0, 2.0])
    assert np.array_equal(a.grad, np.ones((2, 3)))


# ---------------------------------------------------------------------------
# swish


def test_swish_values():
    x = Tensor([0.0, 20.0, 1.0])
    out = ad.swish(x)
    assert out.data[0] == 0.0
    assert abs(out.data[1] - 20.0) < 1e-7
    assert abs(out.data[2] - 0.7310585786300049) < 1e-15  # 1 * sigmoid(1)


def test_swish_gradient_matches_formula():
    rng = np.random.default_rng(0)
    x = param("x", rng.normal(size=7))
    backward(ad.tsum(ad.swish(x)))
    s = 1.0 / (1.0 + np.exp(-x.data))
    expected = s + x.data * s * (1.0 - s)
    assert rel_err(x.grad, expected) < 1e-12


def test_abs_subgradient_zero_at_zero():
    x = param("x", [0.0, -2.0, 3.0])
    backward(ad.tsum(ad.absolute(x)))
    assert np.array_equal(x.grad, [0.0, -1.0, 1.0])


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_identity_kernel(backend):
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(1, 4, 5)))
    w = Tensor(np.ones((1, 1, 1, 1)))
    b = Tensor(np.zeros(1))
    out = ad.conv2d(x, w, b, padding=(0, 0))
    assert np.array_equal(out.data, x.data)


def test_conv2d_hand_case(backend):
    x = Tensor([[[1.0, 2.0], [3.0, 4.0]]])
    w = Tensor([[[[1.0, 0.0], [0.0, 1.0]]]])
    b = Tensor(np.zeros(1))
    out = ad.conv2d(x, w, b, padding=(0, 0))
    assert out.data.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == 5.0  # 1*1 + 4*1


def conv_oracle(x, w, pad_h, pad_w):
    """Direct quadruple-loop summation."""
    c_out, c_in, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    out_h = x.shape[1] + 2 * pad_h - kh + 1
    out_w = x.shape[2] + 2 * pad_w - kw + 1
    y = np.zeros((c_out, out_h, out_w))
    for oc in range(c_out):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0.0
                for ic in range(c_in):
                    for dy in range(kh):
                        for dx in range(kw):
                            acc += xp[ic, oy + dy, ox + dx] * w[oc, ic, dy, dx]
                y[oc, oy, ox] = acc
    return y


def test_conv2d_matches_naive_oracle(backend):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    for pad in [(0, 0), (1, 1), (1, 0)]:
        out = ad.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)), padding=pad)
        assert np.allclose(out.data, conv_oracle(x, w, *pad), rtol=1e-12, atol=1e-13)


def test_conv2d_channel_mismatch(backend):
    with pytest.raises(GradientError):
        ad.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)))


def test_conv2d_kernel_must_fit():
    with pytest.raises(GradientError):
        ad.conv2d(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), Tensor(np.zeros(1)))


def test_conv2d_gradients_vs_finite_differences(backend):
    rng = np.random.default_rng(3)
    xv = rng.normal(size=(2, 5, 4))
    wv = rng.normal(size=(3, 2, 3, 3))
    bv = rng.normal(size=3)

    def run():
        x, w, b = param("x", xv), param("w", wv), param("b", bv)
        out = ad.tsum(ad.conv2d(x, w, b, padding=(1, 1)))
        return out, (x, w, b)

    out, (x, w, b) = run()
    backward(out)
    fd = finite_diff(lambda: float(ad.conv2d(Tensor(xv), Tensor(wv), Tensor(bv), padding=(1, 1)).data.sum()),
                     [xv, wv, bv], h=FD_H)
    assert rel_err(x.grad, fd[0]) < TOL
    assert rel_err(w.grad, fd[1]) < TOL
    assert rel_err(b.grad, fd[2]) < TOL


# ---------------------------------------------------------------------------
# max_pool2d


def test_maxpool_identity(backend):
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(2, 3, 4)))
    out = ad.max_pool2d(x, (1, 1))
    assert np.array_equal(out.data, x.data)


def test_maxpool_1d_case(backend):
    x = Tensor(np.array([4.0, 1.0, 3.0, 2.0]).reshape(1, 1, 4))
    out = ad.max_pool2d(x, (1, 2))
    assert np.array_equal(out.data.ravel(), [4.0, 3.0])


def test_maxpool_tie_routes_to_first(backend):
    x = param("x", np.array([[2.0, 2.0, 1.0, 3.0]]).reshape(1, 1, 4))
    backward(ad.tsum(ad.max_pool2d(x, (1, 2))))
    assert np.array_equal(x.grad.ravel(), [1.0, 0.0, 0.0, 1.0])


def test_maxpool_rejects_oversized_window():
    with pytest.raises(GradientError):
        ad.max_pool2d(Tensor(np.zeros((1, 2, 2))), (3, 1))


def test_maxpool_truncates_remainder(backend):
    x = Tensor(np.arange(10.0).reshape(1, 1, 10))
    out = ad.max_pool2d(x, (1, 4))
    assert np.array_equal(out.data.ravel(), [3.0, 7.0])  # trailing 8, 9 dropped


def test_maxpool_gradient_vs_finite_differences(backend):
    rng = np.random.default_rng(5)
    xv = rng.normal(size=(2, 6, 4))  # continuous values: ties have probability 0
    x = param("x", xv)
    backward(ad.tsum(ad.max_pool2d(x, (2, 2))))
    fd = finite_diff(lambda: float(ad.max_pool2d(Tensor(xv), (2, 2)).data.sum()), [xv], h=FD_H)
    assert rel_err(x.grad, fd[0]) < TOL


# ---------------------------------------------------------------------------
# transposed_conv2d


def test_tconv_identity(backend):
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(1, 3, 4)))
    w = Tensor(np.ones((1, 1, 1, 1)))
    out = ad.transposed_conv2d(x, w, stride=(1, 1))
    assert np.array_equal(out.data, x.data)


def test_tconv_copies_kernel(backend):
    x = Tensor(np.ones((1, 1, 1)))
    w = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3))
    out = ad.transposed_conv2d(x, w, stride=(1, 1))
    assert np.array_equal(out.data.ravel(), [1.0, 2.0, 3.0])


def test_tconv_output_extent(backend):
    x = Tensor(np.zeros((2, 4, 3)))
    w = Tensor(np.zeros((2, 5, 3, 2)))
    out = ad.transposed_conv2d(x, w, stride=(2, 3))
    assert out.data.shape == (5, (4 - 1) * 2 + 3, (3 - 1) * 3 + 2)


def test_tconv_is_adjoint_of_conv(backend):
    """Forward transposed conv == the input-gradient of stride-1 conv2d."""
    rng = np.random.default_rng(7)
    g = rng.normal(size=(3, 4, 5))           # upstream gradient of a conv output
    w = rng.normal(size=(3, 2, 3, 3))        # conv weight (C_out=3, C_in=2)
    x = param("x", rng.normal(size=(2, 6, 7)))
    out = ad.conv2d(x, Tensor(w), Tensor(np.zeros(3)), padding=(0, 0))
    backward(ad.tsum(ad.mul(out, Tensor(g))))
    swapped = np.ascontiguousarray(w.transpose(0, 1, 2, 3))  # (C_out, C_in, kh, kw)
    tout = ad.transposed_conv2d(Tensor(g), Tensor(swapped), stride=(1, 1))
    assert np.allclose(tout.data, x.grad, rtol=1e-12, atol=1e-13)


def test_tconv_channel_mismatch(backend):
    with pytest.raises(GradientError):
        ad.transposed_conv2d(Tensor(np.zeros((2, 3, 3))), Tensor(np.zeros((3, 1, 2, 2))))


def test_tconv_gradients_vs_finite_differences(backend):
    rng = np.random.default_rng(8)
    xv = rng.normal(size=(2, 3, 4))
    wv = rng.normal(size=(2, 3, 3, 2))
    bv = rng.normal(size=3)

    def value():
        out = ad.transposed_conv2d(Tensor(xv), Tensor(wv), stride=(2, 1), b=Tensor(bv))
        return float(ad.tsum(ad.swish(out)).data)

    x, w, b = param("x", xv), param("w", wv), param("b", bv)
    backward(ad.tsum(ad.swish(ad.transposed_conv2d(x, w, stride=(2, 1), b=b))))
    fd = finite_diff(value, [xv, wv, bv], h=FD_H)
    assert rel_err(x.grad, fd[0]) < TOL
    assert rel_err(w.grad, fd[1]) < TOL
    assert rel_err(b.grad, fd[2]) < TOL


# ---------------------------------------------------------------------------
# GRU


def make_gru_params(n_in, n_hidden, scale=0.0, seed=0):
    rng = np.random.default_rng(seed)

    def arr(shape):
        return scale * rng.normal(size=shape)

    return GruParams(
        w_update=param("wu", arr((n_hidden, n_in))),
        u_update=param("uu", arr((n_hidden, n_hidden))),
        b_update=param("bu", arr((n_hidden,))),
        w_reset=param("wr", arr((n_hidden, n_in))),
        u_reset=param("ur", arr((n_hidden, n_hidden))),
        b_reset=param("br", arr((n_hidden,))),
        w_cand=param("wc", arr((n_hidden, n_in))),
        u_cand=param("uc", arr((n_hidden, n_hidden))),
        b_cand=param("bc", arr((n_hidden,))),
    )


def gru_param_list(p):
    return [p.w_update, p.u_update, p.b_update, p.w_reset, p.u_reset,
            p.b_reset, p.w_cand, p.u_cand, p.b_cand]


def test_gru_step_zero_params_halves_state():
    p = make_gru_params(2, 2, scale=0.0)
    h = Tensor([1.0, 1.0])
    x = Tensor([0.3, -0.7])
    out = ad.gru_step(h, x, p)
    # u = 0.5, candidate = 0 under the stated convention
    assert np.allclose(out.data, [0.5, 0.5], rtol=0, atol=1e-15)


def test_gru_step_zero_state_fixed_point():
    p = make_gru_params(3, 2, scale=0.0)
    out = ad.gru_step(Tensor([0.0, 0.0]), Tensor([0.0, 0.0, 0.0]), p)
    assert np.array_equal(out.data, [0.0, 0.0])


def test_gru_step_dimension_mismatch():
    p = make_gru_params(3, 2)
    with pytest.raises(GradientError):
        ad.gru_step(Tensor([0.0, 0.0, 0.0]), Tensor([0.0, 0.0, 0.0]), p)


def test_gru_sequence_matches_step_composition(backend):
    rng = np.random.default_rng(9)
    n_steps, n_in, n_hidden = 5, 3, 4
    p = make_gru_params(n_in, n_hidden, scale=0.4, seed=10)
    xv = rng.normal(size=(n_steps, n_in))
    fused = ad.gru_sequence(Tensor(xv), Tensor(np.zeros(n_hidden)), p)
    h = Tensor(np.zeros(n_hidden))
    rows = []
    for t in range(n_steps):
        h = ad.gru_step(h, Tensor(xv[t]), p)
        rows.append(h.data)
    assert np.allclose(fused.data, np.array(rows), rtol=1e-12, atol=1e-14)


def test_gru_sequence_gradients_vs_finite_differences(backend):
    rng = np.random.default_rng(11)
    n_steps, n_in, n_hidden = 5, 3, 4
    xv = rng.normal(size=(n_steps, n_in))
    p = make_gru_params(n_in, n_hidden, scale=0.4, seed=12)
    weight = rng.normal(size=(n_steps, n_hidden))  # fixed projection to a scalar
    arrays = [xv] + [t.data for t in gru_param_list(p)]

    def value():
        out = ad.gru_sequence(Tensor(xv), Tensor(np.zeros(n_hidden)), p)
        return float((out.data * weight).sum())

    x = param("x", xv)
    out = ad.gru_sequence(x, Tensor(np.zeros(n_hidden)), p)
    backward(ad.tsum(ad.mul(out, Tensor(weight))))
    fd = finite_diff(value, arrays, h=FD_H)
    assert rel_err(x.grad, fd[0]) < TOL
    for tensor, fd_grad in zip(gru_param_list(p), fd[1:]):
        assert rel_err(tensor.grad, fd_grad) < TOL, tensor.name


def test_gru_step_chain_gradients_vs_finite_differences():
    """BPTT through the primitive-op composition, sequence length 5."""
    rng = np.random.default_rng(13)
    n_steps, n_in, n_hidden = 5, 2, 3
    xv = rng.normal(size=(n_steps, n_in))
    p = make_gru_params(n_in, n_hidden, scale=0.5, seed=14)

    def run(as_params):
        h = Tensor(np.zeros(n_hidden))
        for t in range(n_steps):
            h = ad.gru_step(h, Tensor(xv[t]), p)
        return ad.tsum(h)

    out = run(p)
    backward(out)
    analytic = [t.grad.copy() for t in gru_param_list(p)]
    fd = finite_diff(lambda: float(run(p).data), [t.data for t in gru_param_list(p)], h=FD_H)
    for got, want, tensor in zip(analytic, fd, gru_param_list(p)):
        assert rel_err(got, want) < TOL, tensor.name


# ---------------------------------------------------------------------------
# composite network fragment


def test_three_layer_composition_gradcheck(backend):
    """conv -> swish -> pool -> conv -> swish -> pool -> linear chain."""
    rng = np.random.default_rng(15)
    xv = rng.normal(size=(1, 6, 8))
    w1 = rng.normal(size=(3, 1, 3, 3)) * 0.5
    b1 = rng.normal(size=3) * 0.1
    w2 = rng.normal(size=(2, 3, 3, 3)) * 0.5
    b2 = rng.normal(size=2) * 0.1
    w3 = rng.normal(size=(2 * 3 * 2, 4)) * 0.5
    b3 = rng.normal(size=4) * 0.1

    arrays = [xv, w1, b1, w2, b2, w3, b3]

    def build(t):
        x = ad.conv2d(t[0], t[1], t[2], padding=(1, 1))
        x = ad.max_pool2d(ad.swish(x), (1, 2))
        x = ad.conv2d(x, t[3], t[4], padding=(1, 1))
        x = ad.max_pool2d(ad.swish(x), (2, 2))
        x = ad.reshape(x, (1, -1))
        x = ad.swish(ad.add(ad.matmul(x, t[5]), t[6]))
        return ad.tsum(x)

    tensors = [param(f"t{i}", a) for i, a in enumerate(arrays)]
    backward(build(tensors))
    fd = finite_diff(lambda: float(build([Tensor(a) for a in arrays]).data), arrays, h=FD_H)
    for tensor, fd_grad in zip(tensors, fd):
        assert rel_err(tensor.grad, fd_grad) < TOL, tensor.name


def test_forward_and_gradients_are_deterministic(backend):
    def run():
        rng = np.random.default_rng(16)
        x = param("x", rng.normal(size=(2, 4, 6)))
        w = param("w", rng.normal(size=(3, 2, 3, 3)))
        b = param("b", rng.normal(size=3))
        out = ad.tsum(ad.swish(ad.max_pool2d(ad.conv2d(x, w, b, padding=(1, 1)), (2, 2))))
        backward(out)
        return out.data.copy(), x.grad.copy(), w.grad.copy(), b.grad.copy()

    first = run()
    second = run()
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_backends_agree_on_full_fragment():
    from scenesed import kernels
    rng = np.random.default_rng(17)
    xv = rng.normal(size=(2, 8, 6))
    wv = rng.normal(size=(3, 2, 3, 3))
    bv = rng.normal(size=3)
    results = {}
    previous = kernels.active_backend()
    try:
        for name in ("numpy", "numba"):
            kernels.use_backend(name)
            x = param("x", xv.copy())
            out = ad.tsum(ad.max_pool2d(ad.swish(ad.conv2d(x, Tensor(wv), Tensor(bv), padding=(1, 1))), (2, 3)))
            backward(out)
            results[name] = (float(out.data), x.grad.copy())
    finally:
        kernels.use_backend(previous)
    assert abs(results["numpy"][0] - results["numba"][0]) < 1e-10
    assert rel_err(results["numpy"][1], results["numba"][1]) < 1e-10
