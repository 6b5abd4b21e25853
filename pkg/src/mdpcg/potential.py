"""Affine congestion rewards, the game potential, Q-values and the Wardrop check."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleInput
from .mdp_core import GameSpec, _frozen, flow_residual


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Separable affine rewards ``r[t,s,a] = offset[t,s,a] - slope[t,s,a] * y[t,s,a]``.

    Slopes must be strictly positive so that every cell reward is strictly
    decreasing in its own congestion and the potential is strictly concave.
    """

    offset: np.ndarray
    slope: np.ndarray

    def __post_init__(self):
        c = _frozen(self.offset)
        m = _frozen(self.slope)
        if c.ndim != 3 or c.shape != m.shape:
            raise DimensionMismatch(f"offset {c.shape} and slope {m.shape} must be equal (T, S, A) shapes")
        if not np.all(m > 0):
            raise ValueError("congestion slopes must be strictly positive")
        object.__setattr__(self, "offset", c)
        object.__setattr__(self, "slope", m)

    @property
    def shape(self):
        return self.offset.shape

    def shifted(self, extra_offset) -> "RewardModel":
        return RewardModel(self.offset + np.asarray(extra_offset, dtype=float), self.slope)


def rewards_at(model: RewardModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != model.shape:
        raise DimensionMismatch(f"mass shape {y.shape} != reward shape {model.shape}")
    return model.offset - model.slope * y


def potential(model: RewardModel, y) -> float:
    """``F(y) = sum(c*y - m*y**2/2)``, the integral of the cell rewards from 0 to y."""
    y = np.asarray(y, dtype=float)
    return float(np.sum(model.offset * y - 0.5 * model.slope * y * y))


def q_backward(spec: GameSpec, r):
    """Backward induction on a frozen reward tensor.

    Returns ``(Q, V, pi)`` where ``V[t, s] = max_a Q[t, s, a]`` and ``pi`` is
    the greedy policy, ties broken towards the lowest action index.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != spec.shape:
        raise DimensionMismatch(f"reward shape {r.shape} != game shape {spec.shape}")
    T = spec.horizon
    Q = np.empty_like(r)
    V = np.empty(r.shape[:2])
    Q[T - 1] = r[T - 1]
    V[T - 1] = Q[T - 1].max(axis=1)
    for t in range(T - 2, -1, -1):
        Q[t] = r[t] + np.tensordot(V[t + 1], spec.kernel[t], axes=(0, 0))
        V[t] = Q[t].max(axis=1)
    pi = Q.argmax(axis=2)
    return Q, V, pi


@dataclass(frozen=True)
class WardropCertificate:
    gap: float
    regret: np.ndarray  # (T, S) worst regret among supported actions
    y_min: float

    def is_equilibrium(self, tol: float) -> bool:
        return self.gap <= tol


def wardrop_gap(spec: GameSpec, y, model: RewardModel = None, offsets=None,
                y_min: float = None, feas_tol: float = None) -> WardropCertificate:
    """Largest Q-value regret over actions carrying more than ``y_min`` mass.

    ``offsets`` are additive reward offsets (tolls) on top of ``model``.
    """
    model = model if model is not None else spec.rewards
    y = np.asarray(y, dtype=float)
    M = spec.total_mass
    if feas_tol is None:
        feas_tol = 1e-6 * max(M, 1.0)
    res = flow_residual(spec, y)
    if res > feas_tol:
        raise InfeasibleInput(f"flow residual {res:.3g} exceeds {feas_tol:.3g}")
    if y_min is None:
        y_min = 1e-8 * M
    r = rewards_at(model, y)
    if offsets is not None:
        r = r + offsets
    Q, V, _ = q_backward(spec, r)
    regret = np.where(y > y_min, V[:, :, None] - Q, 0.0).max(axis=2)
    regret = np.maximum(regret, 0.0)
    return WardropCertificate(float(regret.max()), regret, float(y_min))
