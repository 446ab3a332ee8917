"""SGD and Adam with per-epoch learning-rate decay and global-norm clipping."""
from __future__ import annotations

from typing import Dict, Iterable, List

import numpy as np

from .tensor import Parameter, parameters_grad_norm


class Optimizer:
    kind = "base"

    def __init__(self, learning_rate: float, decay_factor: float = 1.0):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
        if not 0 < decay_factor <= 1:
            raise ValueError(f"decay_factor must be in (0, 1], got {decay_factor}")
        self.learning_rate = float(learning_rate)
        self.decay_factor = float(decay_factor)

    def step(self, params: Iterable[Parameter]) -> None:
        raise NotImplementedError

    def decay_lr(self) -> float:
        self.learning_rate *= self.decay_factor
        return self.learning_rate

    def state_dict(self) -> Dict:
        return {"kind": self.kind, "learning_rate": self.learning_rate,
                "decay_factor": self.decay_factor}


class SGD(Optimizer):
    kind = "sgd"

    def step(self, params):
        for p in params:
            p.data -= self.learning_rate * p.grad


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, learning_rate: float, decay_factor: float = 1.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(learning_rate, decay_factor)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in params:
            g = p.grad
            if p.name not in self.m:
                self.m[p.name] = np.zeros_like(p.data)
                self.v[p.name] = np.zeros_like(p.data)
            m, v = self.m[p.name], self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)

    def state_dict(self):
        d = super().state_dict()
        d.update(beta1=self.beta1, beta2=self.beta2, eps=self.eps, t=self.t)
        return d


def make_optimizer(kind: str, learning_rate: float, decay_factor: float = 1.0) -> Optimizer:
    if kind == "adam":
        return Adam(learning_rate, decay_factor)
    if kind == "sgd":
        return SGD(learning_rate, decay_factor)
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_from_state(state: Dict, moments: Dict[str, np.ndarray]) -> Optimizer:
    opt = make_optimizer(state["kind"], state["learning_rate"], state["decay_factor"])
    if isinstance(opt, Adam):
        opt.beta1, opt.beta2, opt.eps, opt.t = state["beta1"], state["beta2"], state["eps"], state["t"]
        for key, arr in moments.items():
            which, name = key.split(":", 1)
            (opt.m if which == "m" else opt.v)[name] = arr.copy()
    return opt


def clip_grad_norm(params: List[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    norm = parameters_grad_norm(params)
    if max_norm and norm > max_norm:
        coef = max_norm / (norm + 1e-12)
        for p in params:
            p.grad *= coef
    return norm


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()
