"""AdaBelief optimizer.

Tracks the usual first moment plus a "belief" second moment built from the
gradient's deviation from that running mean. Update per parameter, with t
counting from 1 on the first step:

    m <- b1*m + (1-b1)*g
    s <- b2*s + (1-b2)*(g-m)^2 + eps
    mhat = m / (1 - b1^t);  shat = s / (1 - b2^t)
    theta <- theta - lr * mhat / (sqrt(shat) + eps)

Defaults b1=0.9, b2=0.999, eps=1e-3.
"""

import numpy as np

from .autodiff import GradientError


class AdaBelief:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-3):
        self.params = list(params)
        names = [getattr(p, "name", None) for p in self.params]
        if len(set(names)) != len(names):
            raise GradientError("optimizer parameters must have unique names")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.s = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise GradientError(f"parameter {p.name!r} has no gradient; run backward first")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            s = self.s[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            diff = g - m
            s *= self.beta2
            s += (1.0 - self.beta2) * diff * diff + self.eps
            update = (m / bc1) / (np.sqrt(s / bc2) + self.eps)
            p.data -= self.lr * update

    def zero_grad(self):
        for p in self.params:
            p.grad = None
