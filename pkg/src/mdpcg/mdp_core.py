"""State/action spaces, transition kernels and population mass propagation.

Array conventions used throughout the package (stages are 0-based):

* kernel ``P`` has shape ``(T-1, S, S, A)`` and ``P[t, s_next, s, a]`` is the
  probability of moving from ``s`` to ``s_next`` between stages ``t`` and
  ``t+1`` under action ``a``.
* a mass distribution ``y`` has shape ``(T, S, A)``.
* a policy ``pi`` is an integer array of shape ``(T, S)`` holding action
  indices.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import DimensionMismatch, ZeroRow

if TYPE_CHECKING:
    from .potential import RewardModel

ROW_SUM_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Finite-horizon MDP congestion game.

    Arrays are copied and made read-only on construction.
    """

    horizon: int
    kernel: np.ndarray
    initial_mass: np.ndarray
    rewards: Optional["RewardModel"] = None

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        object.__setattr__(self, "horizon", int(self.horizon))
        kernel = _frozen(self.kernel)
        p = _frozen(self.initial_mass)
        if kernel.ndim != 4 or kernel.shape[1] != kernel.shape[2]:
            raise DimensionMismatch(f"kernel must be (T-1, S, S, A), got {kernel.shape}")
        if kernel.shape[0] != self.horizon - 1:
            raise DimensionMismatch(
                f"kernel has {kernel.shape[0]} transition stages, horizon {self.horizon} needs {self.horizon - 1}"
            )
        if p.shape != (kernel.shape[1],):
            raise DimensionMismatch(f"initial_mass must have shape ({kernel.shape[1]},), got {p.shape}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "initial_mass", p)
        if self.rewards is not None and self.rewards.shape != self.shape:
            raise DimensionMismatch(f"reward model shape {self.rewards.shape} != game shape {self.shape}")

    @property
    def num_states(self) -> int:
        return self.kernel.shape[1]

    @property
    def num_actions(self) -> int:
        return self.kernel.shape[3]

    @property
    def shape(self) -> tuple:
        """Shape ``(T, S, A)`` of mass, reward and Q tensors."""
        return (self.horizon, self.num_states, self.num_actions)

    @property
    def total_mass(self) -> float:
        return float(self.initial_mass.sum())

    def with_rewards(self, rewards) -> "GameSpec":
        return replace(self, rewards=rewards)


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative", "row_sum", "initial_mass"
    index: tuple
    magnitude: float

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.magnitude:.3g}"


def validate_kernel(spec: GameSpec, tol: float = ROW_SUM_TOL) -> list:
    """Return every invariant violation of ``spec``; empty when valid.

    Row-sum magnitudes are the signed deviation ``sum - 1``; nonnegativity
    magnitudes are the offending entry.
    """
    out = []
    P = spec.kernel
    for idx in zip(*np.nonzero(P < 0)):
        out.append(Violation("negative", tuple(int(i) for i in idx), float(P[idx])))
    dev = P.sum(axis=1) - 1.0  # (T-1, S, A)
    for t, s, a in zip(*np.nonzero(np.abs(dev) > tol)):
        out.append(Violation("row_sum", (int(t), int(s), int(a)), float(dev[t, s, a])))
    p = spec.initial_mass
    for (s,) in zip(*np.nonzero(p < 0)):
        out.append(Violation("initial_mass", (int(s),), float(p[s])))
    if not p.sum() > 0:
        out.append(Violation("initial_mass", (), float(p.sum())))
    return out


def normalize_rows(kernel: np.ndarray) -> np.ndarray:
    """Rescale every ``(t, s, a)`` row of a kernel array to sum to one."""
    kernel = np.asarray(kernel, dtype=float)
    sums = kernel.sum(axis=1, keepdims=True)
    zero = np.argwhere(sums[:, 0] == 0)
    if len(zero):
        raise ZeroRow(*(int(i) for i in zero[0]))
    # rows within rounding of 1 are left untouched so the map is idempotent
    already = np.abs(sums - 1.0) <= 1e-12
    return np.where(already, kernel, kernel / sums)


def normalize_kernel(spec: GameSpec) -> GameSpec:
    return replace(spec, kernel=normalize_rows(spec.kernel))


def check_policy(spec: GameSpec, policy) -> np.ndarray:
    pi = np.asarray(policy)
    if pi.shape != spec.shape[:2]:
        raise DimensionMismatch(f"policy must have shape {spec.shape[:2]}, got {pi.shape}")
    if not np.issubdtype(pi.dtype, np.integer):
        raise TypeError("policy entries must be integer action indices")
    if pi.size and (pi.min() < 0 or pi.max() >= spec.num_actions):
        raise ValueError("policy entries must lie in [0, num_actions)")
    return pi


def propagate(kernel_t: np.ndarray, y_t: np.ndarray) -> np.ndarray:
    """State mass at the next stage: ``sum_{s,a} P[s', s, a] y[s, a]``."""
    return np.einsum("nsa,sa->n", kernel_t, y_t)


def retrieve_density(spec: GameSpec, policy) -> np.ndarray:
    """Mass trajectory ``d`` of the whole population following ``policy``."""
    pi = check_policy(spec, policy)
    T, S, A = spec.shape
    d = np.zeros((T, S, A))
    states = np.arange(S)
    mass = np.array(spec.initial_mass, dtype=float)
    for t in range(T):
        if t > 0:
            mass = propagate(spec.kernel[t - 1], d[t - 1])
        d[t, states, pi[t]] = mass
    return d


def flow_residual(spec: GameSpec, y) -> float:
    """Max-norm violation of the initial-mass and propagation equalities."""
    y = np.asarray(y, dtype=float)
    if y.shape != spec.shape:
        raise DimensionMismatch(f"mass tensor must have shape {spec.shape}, got {y.shape}")
    state_mass = y.sum(axis=2)
    res = np.max(np.abs(state_mass[0] - spec.initial_mass))
    if spec.horizon > 1:
        inflow = np.einsum("tnsa,tsa->tn", spec.kernel, y[:-1])
        res = max(res, np.max(np.abs(state_mass[1:] - inflow)))
    return float(res)


def stage_masses(y) -> np.ndarray:
    return np.asarray(y).sum(axis=(1, 2))


def flow_constraints(spec: GameSpec):
    """Sparse equality system ``A y.ravel() = b`` describing the flow polytope."""
    from scipy.sparse import coo_matrix

    T, S, A = spec.shape
    idx = np.arange(T * S * A).reshape(T, S, A)
    rows, cols, vals = [], [], []
    for t in range(T):
        for s in range(S):
            r = t * S + s
            rows.extend([r] * A)
            cols.extend(idx[t, s])
            vals.extend([1.0] * A)
            if t > 0:
                P = spec.kernel[t - 1, s]  # (S_from, A)
                nz = np.nonzero(P)
                rows.extend([r] * len(nz[0]))
                cols.extend(idx[t - 1][nz])
                vals.extend(-P[nz])
    b = np.zeros(T * S)
    b[:S] = spec.initial_mass
    mat = coo_matrix((vals, (rows, cols)), shape=(T * S, T * S * A)).tocsr()
    return mat, b
