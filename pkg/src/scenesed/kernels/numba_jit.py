"""Numba-compiled kernel implementations.

Same contracts as ``numpy_ref``; the loops here are what the detector
actually spends its time in. Compiled lazily on first call, cached on
disk. No parallel sections: results must be bit-deterministic.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _pad2d(x, pad_h, pad_w):
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * pad_h, w + 2 * pad_w))
    xp[:, pad_h:pad_h + h, pad_w:pad_w + w] = x
    return xp


@njit(cache=True)
def conv2d_forward(x, w, pad_h, pad_w):
    c_out, c_in, kh, kw = w.shape
    xp = _pad2d(x, pad_h, pad_w)
    out_h = x.shape[1] + 2 * pad_h - kh + 1
    out_w = x.shape[2] + 2 * pad_w - kw + 1
    y = np.zeros((c_out, out_h, out_w))
    for oc in range(c_out):
        for ic in range(c_in):
            for dy in range(kh):
                for dx in range(kw):
                    wv = w[oc, ic, dy, dx]
                    for oy in range(out_h):
                        for ox in range(out_w):
                            y[oc, oy, ox] += wv * xp[ic, oy + dy, ox + dx]
    return y


@njit(cache=True)
def conv2d_backward_input(gy, w, in_h, in_w, pad_h, pad_w):
    c_out, c_in, kh, kw = w.shape
    out_h, out_w = gy.shape[1], gy.shape[2]
    gxp = np.zeros((c_in, in_h + 2 * pad_h, in_w + 2 * pad_w))
    for oc in range(c_out):
        for ic in range(c_in):
            for dy in range(kh):
                for dx in range(kw):
                    wv = w[oc, ic, dy, dx]
                    for oy in range(out_h):
                        for ox in range(out_w):
                            gxp[ic, oy + dy, ox + dx] += wv * gy[oc, oy, ox]
    return gxp[:, pad_h:pad_h + in_h, pad_w:pad_w + in_w].copy()


@njit(cache=True)
def conv2d_backward_weight(gy, x, kh, kw, pad_h, pad_w):
    c_out, out_h, out_w = gy.shape
    c_in = x.shape[0]
    xp = _pad2d(x, pad_h, pad_w)
    gw = np.zeros((c_out, c_in, kh, kw))
    for oc in range(c_out):
        for ic in range(c_in):
            for dy in range(kh):
                for dx in range(kw):
                    acc = 0.0
                    for oy in range(out_h):
                        for ox in range(out_w):
                            acc += gy[oc, oy, ox] * xp[ic, oy + dy, ox + dx]
                    gw[oc, ic, dy, dx] = acc
    return gw


@njit(cache=True)
def maxpool2d_forward(x, pool_h, pool_w):
    c, h, w = x.shape
    out_h, out_w = h // pool_h, w // pool_w
    y = np.empty((c, out_h, out_w))
    arg = np.empty((c, out_h, out_w), np.int64)
    for ci in range(c):
        for oy in range(out_h):
            for ox in range(out_w):
                best = -np.inf
                bi = 0
                for dy in range(pool_h):
                    for dx in range(pool_w):
                        v = x[ci, oy * pool_h + dy, ox * pool_w + dx]
                        if v > best:
                            best = v
                            bi = dy * pool_w + dx
                y[ci, oy, ox] = best
                arg[ci, oy, ox] = bi
    return y, arg


@njit(cache=True)
def maxpool2d_backward(gy, arg, in_h, in_w, pool_h, pool_w):
    c, out_h, out_w = gy.shape
    gx = np.zeros((c, in_h, in_w))
    for ci in range(c):
        for oy in range(out_h):
            for ox in range(out_w):
                a = arg[ci, oy, ox]
                gx[ci, oy * pool_h + a // pool_w, ox * pool_w + a % pool_w] = gy[ci, oy, ox]
    return gx


@njit(cache=True)
def tconv2d_forward(x, w, stride_h, stride_w):
    c_in, h, win = x.shape
    c_in2, c_out, kh, kw = w.shape
    out_h = (h - 1) * stride_h + kh
    out_w = (win - 1) * stride_w + kw
    y = np.zeros((c_out, out_h, out_w))
    for ic in range(c_in):
        for oc in range(c_out):
            for dy in range(kh):
                for dx in range(kw):
                    wv = w[ic, oc, dy, dx]
                    for iy in range(h):
                        for ix in range(win):
                            y[oc, iy * stride_h + dy, ix * stride_w + dx] += wv * x[ic, iy, ix]
    return y


@njit(cache=True)
def tconv2d_backward_input(gy, w, stride_h, stride_w):
    c_in, c_out, kh, kw = w.shape
    out_h, out_w = gy.shape[1], gy.shape[2]
    h = (out_h - kh) // stride_h + 1
    win = (out_w - kw) // stride_w + 1
    gx = np.zeros((c_in, h, win))
    for ic in range(c_in):
        for oc in range(c_out):
            for dy in range(kh):
                for dx in range(kw):
                    wv = w[ic, oc, dy, dx]
                    for iy in range(h):
                        for ix in range(win):
                            gx[ic, iy, ix] += wv * gy[oc, iy * stride_h + dy, ix * stride_w + dx]
    return gx


@njit(cache=True)
def tconv2d_backward_weight(gy, x, kh, kw, stride_h, stride_w):
    c_in, h, win = x.shape
    c_out = gy.shape[0]
    gw = np.zeros((c_in, c_out, kh, kw))
    for ic in range(c_in):
        for oc in range(c_out):
            for dy in range(kh):
                for dx in range(kw):
                    acc = 0.0
                    for iy in range(h):
                        for ix in range(win):
                            acc += x[ic, iy, ix] * gy[oc, iy * stride_h + dy, ix * stride_w + dx]
                    gw[ic, oc, dy, dx] = acc
    return gw


@njit(cache=True)
def _sigmoid_vec(v):
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        z = v[i]
        if z >= 0.0:
            out[i] = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            out[i] = e / (1.0 + e)
    return out


@njit(cache=True)
def gru_forward(x, h0, wu, uu, bu, wr, ur, br, wc, uc, bc):
    n_steps = x.shape[0]
    n_hidden = h0.shape[0]
    h = np.empty((n_steps, n_hidden))
    u = np.empty((n_steps, n_hidden))
    r = np.empty((n_steps, n_hidden))
    cand = np.empty((n_steps, n_hidden))
    prev = h0.copy()
    for t in range(n_steps):
        xt = x[t]
        ut = _sigmoid_vec(np.dot(wu, xt) + np.dot(uu, prev) + bu)
        rt = _sigmoid_vec(np.dot(wr, xt) + np.dot(ur, prev) + br)
        ct = np.tanh(np.dot(wc, xt) + np.dot(uc, rt * prev) + bc)
        ht = (1.0 - ut) * prev + ut * ct
        u[t] = ut
        r[t] = rt
        cand[t] = ct
        h[t] = ht
        prev = ht
    return h, u, r, cand


@njit(cache=True)
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
    wut = np.ascontiguousarray(wu.T)
    wrt = np.ascontiguousarray(wr.T)
    wct = np.ascontiguousarray(wc.T)
    uut = np.ascontiguousarray(uu.T)
    urt = np.ascontiguousarray(ur.T)
    uct = np.ascontiguousarray(uc.T)
    carry = np.zeros(n_hidden)
    for t in range(n_steps - 1, -1, -1):
        if t > 0:
            prev = h[t - 1]
        else:
            prev = h0
        g = gh[t] + carry
        du = g * (cand[t] - prev) * u[t] * (1.0 - u[t])
        dc = g * u[t] * (1.0 - cand[t] * cand[t])
        drh = np.dot(uct, dc)
        dr = drh * prev * r[t] * (1.0 - r[t])
        carry = g * (1.0 - u[t]) + np.dot(uut, du) + np.dot(urt, dr) + drh * r[t]
        gx[t] = np.dot(wut, du) + np.dot(wrt, dr) + np.dot(wct, dc)
        for i in range(n_hidden):
            dui = du[i]
            dri = dr[i]
            dci = dc[i]
            for j in range(n_in):
                xv = x[t, j]
                gwu[i, j] += dui * xv
                gwr[i, j] += dri * xv
                gwc[i, j] += dci * xv
            for j in range(n_hidden):
                hv = prev[j]
                guu[i, j] += dui * hv
                gur[i, j] += dri * hv
                guc[i, j] += dci * (r[t, j] * hv)
            gbu[i] += dui
            gbr[i] += dri
            gbc[i] += dci
    return gx, carry, gwu, guu, gbu, gwr, gur, gbr, gwc, guc, gbc
