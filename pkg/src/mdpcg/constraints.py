"""Affine mass constraints ``w . y - b >= 0`` and their toll tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class AffineConstraint:
    """``sum_{(t,s,a)} weights[(t,s,a)] * y[t,s,a] - bound >= 0``."""

    weights: dict
    bound: float
    name: str = ""

    def __post_init__(self):
        weights = {tuple(int(i) for i in k): float(v) for k, v in dict(self.weights).items() if v != 0}
        if not weights:
            raise ValueError("constraint needs at least one nonzero weight")
        for key in weights:
            if len(key) != 3:
                raise ValueError(f"weight keys are (t, s, a) triples, got {key}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bound", float(self.bound))

    def gradient(self, shape) -> np.ndarray:
        w = np.zeros(shape)
        for (t, s, a), v in self.weights.items():
            if not (0 <= t < shape[0] and 0 <= s < shape[1] and 0 <= a < shape[2]):
                raise DimensionMismatch(f"constraint cell {(t, s, a)} outside tensor shape {shape}")
            w[t, s, a] += v
        return w

    def slack(self, y) -> float:
        return float(sum(v * y[k] for k, v in self.weights.items()) - self.bound)

    @classmethod
    def lower_bound(cls, cell, value, name=""):
        """``y[cell] >= value``."""
        return cls({tuple(cell): 1.0}, value, name)

    @classmethod
    def upper_bound(cls, cell, value, name=""):
        """``y[cell] <= value``, stored as ``value - y[cell] >= 0``."""
        return cls({tuple(cell): -1.0}, -value, name)

    @classmethod
    def state_mass(cls, t, s, num_actions, min_mass, name=""):
        """``sum_a y[t, s, a] >= min_mass``."""
        return cls({(t, s, a): 1.0 for a in range(num_actions)}, min_mass, name)


def constraint_matrix(constraints, shape):
    """Stack gradients into ``(W, b)`` with ``W`` of shape ``(K, T*S*A)``."""
    K = len(constraints)
    W = np.zeros((K, int(np.prod(shape))))
    b = np.zeros(K)
    for i, con in enumerate(constraints):
        W[i] = con.gradient(shape).ravel()
        b[i] = con.bound
    return W, b


def slacks(constraints, y) -> np.ndarray:
    return np.array([c.slack(y) for c in constraints], dtype=float)
