"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations live here: ``numba_jit`` (default,
@njit-compiled loops) and ``numpy_ref`` (pure vectorized numpy). Pick one
with the ``SCENESED_KERNELS`` environment variable ("numba" or "numpy")
before import, or at runtime with :func:`use_backend`. Each backend is
bit-deterministic on its own; the two may differ from each other by
floating-point reordering only. ``benchmarks/bench_backends.py`` compares
them.
"""

import os

from . import numpy_ref

_impl = numpy_ref
_name = "numpy"


def use_backend(name):
    """Switch the active kernel backend ("numpy" or "numba")."""
    global _impl, _name
    if name == "numpy":
        _impl, _name = numpy_ref, "numpy"
    elif name == "numba":
        from . import numba_jit
        _impl, _name = numba_jit, "numba"
    else:
        raise ValueError(f"unknown kernel backend: {name!r}")
    return _name


def active_backend():
    return _name


def _init_from_env():
    want = os.environ.get("SCENESED_KERNELS", "numba").strip().lower()
    if want == "numba":
        try:
            use_backend("numba")
        except ImportError:
            use_backend("numpy")
    else:
        use_backend(want)


_init_from_env()


def conv2d_forward(x, w, pad_h, pad_w):
    return _impl.conv2d_forward(x, w, pad_h, pad_w)


def conv2d_backward_input(gy, w, in_h, in_w, pad_h, pad_w):
    return _impl.conv2d_backward_input(gy, w, in_h, in_w, pad_h, pad_w)


def conv2d_backward_weight(gy, x, kh, kw, pad_h, pad_w):
    return _impl.conv2d_backward_weight(gy, x, kh, kw, pad_h, pad_w)


def maxpool2d_forward(x, pool_h, pool_w):
    return _impl.maxpool2d_forward(x, pool_h, pool_w)


def maxpool2d_backward(gy, arg, in_h, in_w, pool_h, pool_w):
    return _impl.maxpool2d_backward(gy, arg, in_h, in_w, pool_h, pool_w)


def tconv2d_forward(x, w, stride_h, stride_w):
    return _impl.tconv2d_forward(x, w, stride_h, stride_w)


def tconv2d_backward_input(gy, w, stride_h, stride_w):
    return _impl.tconv2d_backward_input(gy, w, stride_h, stride_w)


def tconv2d_backward_weight(gy, x, kh, kw, stride_h, stride_w):
    return _impl.tconv2d_backward_weight(gy, x, kh, kw, stride_h, stride_w)


def gru_forward(x, h0, wu, uu, bu, wr, ur, br, wc, uc, bc):
    return _impl.gru_forward(x, h0, wu, uu, bu, wr, ur, br, wc, uc, bc)


def gru_backward(gh, x, h0, h, u, r, cand, wu, uu, wr, ur, wc, uc):
    return _impl.gru_backward(gh, x, h0, h, u, r, cand, wu, uu, wr, ur, wc, uc)
