"""Trainable parameter containers, initialisation and small dense networks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Value


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_glorot(shape, seed) -> np.ndarray:
    """Glorot-uniform matrix of ``shape = (fan_out, fan_in)``; 1-d shapes give zero biases."""
    shape = tuple(shape)
    if len(shape) == 1:
        return np.zeros(shape)
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return _rng(seed).uniform(-bound, bound, size=shape)


class ParamSet:
    """Ordered, uniquely named collection of trainable leaves."""

    def __init__(self, arrays=None):
        self._values: dict[str, Value] = {}
        for name, arr in (arrays or {}).items():
            self.add(name, arr)

    def add(self, name: str, array) -> Value:
        if name in self._values:
            raise KeyError(f"duplicate parameter name {name!r}")
        v = Value(np.array(array, dtype=np.float64), requires_grad=True, name=name)
        self._values[name] = v
        return v

    def __getitem__(self, name) -> Value:
        return self._values[name]

    def __contains__(self, name):
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def items(self):
        return self._values.items()

    def values(self):
        return self._values.values()

    def names(self):
        return list(self._values)

    def select(self, prefix: str) -> list[str]:
        return [n for n in self._values if n.startswith(prefix)]

    def zero_grad(self):
        for v in self._values.values():
            v.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        """Deep copy of the current parameter arrays."""
        return {n: v.data.copy() for n, v in self._values.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._values) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for n, v in self._values.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != v.data.shape:
                raise ad.ShapeMismatch(f"{n}: {arr.shape} vs {v.data.shape}")
            v.data = arr.copy()
            v.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        return {n: v.grad.copy() for n, v in self._values.items()}

    def sq_norm(self) -> Value:
        """Sum of squares of all parameters, as a graph node."""
        total = None
        for v in self._values.values():
            term = ad.sum(ad.mul(v, v))
            total = term if total is None else ad.add(total, term)
        return total if total is not None else Value(0.0)


def add_mlp(params: ParamSet, prefix: str, n_in: int, n_hidden: int, n_out: int, rng):
    """Register weights for a two-layer perceptron under ``prefix``."""
    params.add(f"{prefix}.W1", init_glorot((n_hidden, n_in), rng))
    params.add(f"{prefix}.b1", np.zeros(n_hidden))
    params.add(f"{prefix}.W2", init_glorot((n_out, n_hidden), rng))
    params.add(f"{prefix}.b2", np.zeros(n_out))


def mlp(x, params: ParamSet, prefix: str, output: str = "sigmoid", frozen: bool = False) -> Value:
    """ReLU hidden layer followed by ``output`` ('sigmoid' or 'linear').

    With ``frozen=True`` the weights enter as constants, so no gradient
    reaches them through this call.
    """
    W1, b1, W2, b2 = (params[f"{prefix}.{k}"] for k in ("W1", "b1", "W2", "b2"))
    if frozen:
        W1, b1, W2, b2 = (ad.detach(p) for p in (W1, b1, W2, b2))
    h = ad.relu(ad.dense(x, W1, b1))
    z = ad.dense(h, W2, b2)
    if output == "sigmoid":
        return ad.sigmoid(z)
    if output == "linear":
        return z
    raise ValueError(f"unknown output activation {output!r}")
