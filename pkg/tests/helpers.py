"""Shared test utilities: central finite differences and error measures."""

import numpy as np


def rel_err(approx, exact, floor=1e-5):
    """Max elementwise relative error with the denominator floored.

    The floor (default 1e-5) keeps near-zero entries comparable at the
    noise scale of central differences on an O(1) function
    (~eps/(2h) ~ 5e-12 absolute), where a pure ratio would demand more
    precision than the finite-difference oracle itself has.
    """
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = np.maximum(np.abs(approx) + np.abs(exact), floor)
    return np.max(np.abs(approx - exact) / denom)


def finite_diff(f, arrays, h=1e-5):
    """Central-difference gradient of scalar f() wrt each array in `arrays`.

    f takes no arguments and reads the arrays in place; each array is
    perturbed one element at a time.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f()
            flat[i] = orig - h
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def finite_diff_sample(f, array, indices, h=1e-5):
    """Central differences at selected flat indices only."""
    flat = array.reshape(-1)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return out
