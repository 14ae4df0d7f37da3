"""Pure-numpy kernel implementations.

Vectorized fallbacks for every hot kernel. Shapes follow the channel-first
convention: feature maps are (C, H, W) with H the time axis and W the
frequency axis. All arrays are float64; convolutions are stride-1
cross-correlations, pooling windows never overlap.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad2d(x, pad_h, pad_w):
    if pad_h == 0 and pad_w == 0:
        return x
    return np.pad(x, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))


def conv2d_forward(x, w, pad_h, pad_w):
    xp = _pad2d(x, pad_h, pad_w)
    # windows: (C_in, H_out, W_out, kh, kw)
    win = sliding_window_view(xp, (w.shape[2], w.shape[3]), axis=(1, 2))
    return np.einsum("chwuv,ocuv->ohw", win, w, optimize=True)


def conv2d_backward_input(gy, w, in_h, in_w, pad_h, pad_w):
    c_out, c_in, kh, kw = w.shape
    out_h, out_w = gy.shape[1], gy.shape[2]
    gx = np.zeros((c_in, in_h, in_w))
    for dy in range(kh):
        y0 = max(0, pad_h - dy)
        y1 = min(out_h, in_h + pad_h - dy)
        if y0 >= y1:
            continue
        for dx in range(kw):
            x0 = max(0, pad_w - dx)
            x1 = min(out_w, in_w + pad_w - dx)
            if x0 >= x1:
                continue
            contrib = np.tensordot(w[:, :, dy, dx], gy[:, y0:y1, x0:x1], axes=(0, 0))
            gx[:, y0 + dy - pad_h:y1 + dy - pad_h, x0 + dx - pad_w:x1 + dx - pad_w] += contrib
    return gx


def conv2d_backward_weight(gy, x, kh, kw, pad_h, pad_w):
    xp = _pad2d(x, pad_h, pad_w)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return np.einsum("ohw,chwuv->ocuv", gy, win, optimize=True)


def maxpool2d_forward(x, pool_h, pool_w):
    c, h, w = x.shape
    out_h, out_w = h // pool_h, w // pool_w
    trimmed = x[:, :out_h * pool_h, :out_w * pool_w]
    blocks = trimmed.reshape(c, out_h, pool_h, out_w, pool_w).transpose(0, 1, 3, 2, 4)
    flat = blocks.reshape(c, out_h, out_w, pool_h * pool_w)
    arg = flat.argmax(axis=3)  # first occurrence on ties
    y = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]
    return np.ascontiguousarray(y), arg.astype(np.int64)


def maxpool2d_backward(gy, arg, in_h, in_w, pool_h, pool_w):
    c, out_h, out_w = gy.shape
    gx = np.zeros((c, in_h, in_w))
    ci, oy, ox = np.indices((c, out_h, out_w))
    iy = oy * pool_h + arg // pool_w
    ix = ox * pool_w + arg % pool_w
    # windows are disjoint, so plain assignment cannot collide
    gx[ci, iy, ix] = gy
    return gx


def tconv2d_forward(x, w, stride_h, stride_w):
    c_in, h, win = x.shape
    c_in2, c_out, kh, kw = w.shape
    out_h = (h - 1) * stride_h + kh
    out_w = (win - 1) * stride_w + kw
    y = np.zeros((c_out, out_h, out_w))
    for dy in range(kh):
        for dx in range(kw):
            contrib = np.tensordot(w[:, :, dy, dx], x, axes=(0, 0))
            y[:, dy:dy + (h - 1) * stride_h + 1:stride_h,
              dx:dx + (win - 1) * stride_w + 1:stride_w] += contrib
    return y


def tconv2d_backward_input(gy, w, stride_h, stride_w):
    c_in, c_out, kh, kw = w.shape
    out_h, out_w = gy.shape[1], gy.shape[2]
    h = (out_h - kh) // stride_h + 1
    win = (out_w - kw) // stride_w + 1
    gx = np.zeros((c_in, h, win))
    for dy in range(kh):
        for dx in range(kw):
            sl = gy[:, dy:dy + (h - 1) * stride_h + 1:stride_h,
                    dx:dx + (win - 1) * stride_w + 1:stride_w]
            gx += np.tensordot(w[:, :, dy, dx], sl, axes=(1, 0))
    return gx


def tconv2d_backward_weight(gy, x, kh, kw, stride_h, stride_w):
    c_in, h, win = x.shape
    c_out = gy.shape[0]
    gw = np.zeros((c_in, c_out, kh, kw))
    for dy in range(kh):
        for dx in range(kw):
            sl = gy[:, dy:dy + (h - 1) * stride_h + 1:stride_h,
                    dx:dx + (win - 1) * stride_w + 1:stride_w]
            gw[:, :, dy, dx] = np.tensordot(x, sl, axes=([1, 2], [1, 2]))
    return gw


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def gru_forward(x, h0, wu, uu, bu, wr, ur, br, wc, uc, bc):
    n_steps = x.shape[0]
    n_hidden = h0.shape[0]
    h = np.empty((n_steps, n_hidden))
    u = np.empty((n_steps, n_hidden))
    r = np.empty((n_steps, n_hidden))
    cand = np.empty((n_steps, n_hidden))
    prev = h0
    for t in range(n_steps):
        xt = x[t]
        ut = _sigmoid(wu @ xt + uu @ prev + bu)
        rt = _sigmoid(wr @ xt + ur @ prev + br)
        ct = np.tanh(wc @ xt + uc @ (rt * prev) + bc)
        ht = (1.0 - ut) * prev + ut * ct
        u[t], r[t], cand[t], h[t] = ut, rt, ct, ht
        prev = ht
    return h, u, r, cand


def gru_backward(gh, x, h0, h, u, r, cand, wu, uu, wr, ur, wc, uc):
    n_steps, n_in = x.shape
    n_hidden = h0.shape[0]
    gx = np.empty((n_steps, n_in))
    gwu = np.zeros_like(wu)
    guu = np.zeros_like(uu)
    gbu = np.zeros(n_hidden)
    gwr = np.zeros_like(wr)
    gur = np.zeros_like(ur)
    gbr = np.zeros(n_hidden)
    gwc = np.zeros_like(wc)
    guc = np.zeros_like(uc)
    gbc = np.zeros(n_hidden)
    carry = np.zeros(n_hidden)
    for t in range(n_steps - 1, -1, -1):
        prev = h[t - 1] if t > 0 else h0
        g = gh[t] + carry
        du = g * (cand[t] - prev) * u[t] * (1.0 - u[t])
        dc = g * u[t] * (1.0 - cand[t] * cand[t])
        drh = uc.T @ dc
        dr = drh * prev * r[t] * (1.0 - r[t])
        carry = g * (1.0 - u[t]) + uu.T @ du + ur.T @ dr + drh * r[t]
        gx[t] = wu.T @ du + wr.T @ dr + wc.T @ dc
        xt = x[t]
        gwu += np.outer(du, xt)
        gwr += np.outer(dr, xt)
        gwc += np.outer(dc, xt)
        guu += np.outer(du, prev)
        gur += np.outer(dr, prev)
        guc += np.outer(dc, r[t] * prev)
        gbu += du
        gbr += dr
        gbc += dc
    return gx, carry, gwu, guu, gbu, gwr, gur, gbr, gwc, guc, gbc
