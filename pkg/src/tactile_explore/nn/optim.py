"""Adaptive-moment (Adam) optimizer over a network's parameters."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, networks, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, max_grad_norm=None):
        if not isinstance(networks, (list, tuple)):
            networks = [networks]
        self.networks = list(networks)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = [np.zeros_like(p) for _, p, _ in self._params()]
        self.v = [np.zeros_like(p) for _, p, _ in self._params()]

    def _params(self):
        for net in self.networks:
            yield from net.parameters()

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.vdot(g, g)) for _, _, g in self._params())))

    def step(self) -> float:
        """Apply one update from the accumulated gradients, then zero them. Returns the pre-clip norm."""
        norm = self.grad_norm()
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for (_, p, g), m, v in zip(self._params(), self.m, self.v):
            gs = g * scale if scale != 1.0 else g
            m *= b1
            m += (1.0 - b1) * gs
            v *= b2
            v += (1.0 - b2) * gs * gs
            p -= (self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)).astype(p.dtype)
            g.fill(0)
        for net in self.networks:
            net.mark_updated()
        return norm

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src
