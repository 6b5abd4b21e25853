"""Frank-Wolfe equilibrium solver with value-iteration vertex oracle.

Each iteration freezes the rewards at the current mass tensor, lets the
"switching" fraction of the population best-respond by value iteration, and
mixes their density trajectory into the population.  The step size is the
fraction of agents that switch: ``2/(k+1)`` for the harmonic rule, or the
exact maximizer of the (quadratic) potential along the segment for the
line-search rule.

``method="newton"`` swaps the Frank-Wolfe loop for the exact dual Newton
solver in :mod:`mdpcg.newton`; the result carries the same certificates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._oracle import greedy_density as _greedy_density
from .errors import DimensionMismatch, InfeasibleInput, NotConverged
from .mdp_core import GameSpec, flow_residual, retrieve_density
from .newton import dual_newton
from .potential import RewardModel, WardropCertificate, potential, q_backward, rewards_at, wardrop_gap

log = logging.getLogger(__name__)

STEP_RULES = ("harmonic", "line_search")
METHODS = ("frank_wolfe", "newton")


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 1000
    eps: float = 1e-10  # threshold on the squared change of the reward tensor
    step: str = "line_search"
    y_min: Optional[float] = None  # support threshold; default 1e-8 * total mass
    gap_tol: Optional[float] = None  # optional stop on the Frank-Wolfe dual gap
    record_trace: bool = True
    raise_not_converged: bool = True
    method: str = "frank_wolfe"
    dual_tol: float = 1e-11  # newton: flow residual target relative to the total mass

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.step not in STEP_RULES:
            raise ValueError(f"step must be one of {STEP_RULES}, got {self.step!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.dual_tol > 0:
            raise ValueError("dual_tol must be > 0")


@dataclass
class EquilibriumResult:
    y: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    policy: np.ndarray
    certificate: WardropCertificate
    fw_gap: float
    iterations: int
    stop_reason: str  # "reward_change", "fw_gap", "dual_residual" or "max_iters"
    offsets: np.ndarray
    trace: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.stop_reason != "max_iters"

    @property
    def wardrop_gap(self) -> float:
        return self.certificate.gap


def _as_offsets(spec, offsets):
    if offsets is None:
        return np.zeros(spec.shape)
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != spec.shape:
        raise DimensionMismatch(f"offset tensor shape {offsets.shape} != game shape {spec.shape}")
    return offsets


def best_response(spec: GameSpec, y, model: RewardModel = None, offsets=None) -> np.ndarray:
    """Density of the greedy policy against rewards frozen at ``y``."""
    model = model if model is not None else spec.rewards
    r = rewards_at(model, y) + _as_offsets(spec, offsets)
    return _greedy_density(spec.kernel, spec.initial_mass, r)


def line_search_alpha(model: RewardModel, y, d, offsets=None) -> float:
    """Exact maximizer over [0, 1] of the potential on the segment from y to d."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(d, dtype=float) - y
    curv = float(np.sum(model.slope * delta * delta))
    if curv <= 0.0:
        return 0.0
    grad = rewards_at(model, y)
    if offsets is not None:
        grad = grad + offsets
    slope0 = float(np.sum(grad * delta))
    return min(max(slope0 / curv, 0.0), 1.0)


def tolled_potential(model: RewardModel, y, offsets) -> float:
    return potential(model, y) + float(np.sum(offsets * y))


def solve_equilibrium(spec: GameSpec, model: RewardModel = None, offsets=None,
                      opts: SolverOptions = None, init=None,
                      callback: Callable = None) -> EquilibriumResult:
    """Wardrop equilibrium of the game with rewards ``model`` plus ``offsets``.

    Parameters
    ----------
    spec : GameSpec
    model : RewardModel, optional
        Defaults to ``spec.rewards``.
    offsets : ndarray, optional
        Additive reward offsets of shape ``(T, S, A)`` such as tolls.
    opts : SolverOptions, optional
    init : ndarray, optional
        Feasible warm-start mass tensor.  Without it the first iterate is the
        best response to the congestion-free rewards.  Ignored by the Newton
        method.
    callback : callable, optional
        Called as ``callback(k, y)`` after every iterate is formed.  Newton
        iterates are only feasible in the limit, so that method reports the
        final tensor alone.

    Raises
    ------
    NotConverged
        When ``opts.max_iters`` is reached without a stopping criterion and
        ``opts.raise_not_converged`` is set; ``err.result`` holds the last
        iterate.
    """
    model = model if model is not None else spec.rewards
    if model is None:
        raise ValueError("no reward model given")
    opts = opts or SolverOptions()
    f = _as_offsets(spec, offsets)
    kernel, p = spec.kernel, spec.initial_mass
    M = spec.total_mass
    if opts.method == "newton":
        y, k, ok, residuals = dual_newton(spec, model.offset + f, model.slope, opts.dual_tol, opts.max_iters)
        if callback is not None:
            callback(k, y)
        trace = {"flow_residual": residuals} if opts.record_trace else {}
        return _finish(spec, model, f, y, k, "dual_residual" if ok else "max_iters", trace, opts)

    if init is None:
        c_prev = model.offset + f
        y = _greedy_density(kernel, p, c_prev)
    else:
        y = np.array(init, dtype=float)
        if y.shape != spec.shape:
            raise DimensionMismatch(f"init shape {y.shape} != game shape {spec.shape}")
        res = flow_residual(spec, y)
        if res > 1e-8 * max(M, 1.0):
            raise InfeasibleInput(f"warm start violates flow conservation by {res:.3g}")
        c_prev = None
    if callback is not None:
        callback(0, y)

    trace = {"potential": [], "fw_gap": [], "reward_change": [], "alpha": []}
    stop = "max_iters"
    k = 0
    base, slope = model.offset + f, model.slope
    kernel, p = np.ascontiguousarray(kernel, dtype=float), np.ascontiguousarray(p, dtype=float)
    for k in range(1, opts.max_iters + 1):
        c = base - slope * y
        d = _greedy_density(kernel, p, c)
        delta = d - y
        # vdot skips the temporaries of np.sum, which dominate on small games
        gap = float(np.vdot(c, delta))
        if opts.step == "harmonic":
            alpha = 2.0 / (k + 1)
        else:
            curv = float(np.vdot(slope * delta, delta))
            alpha = 0.0 if curv <= 0.0 else min(max(gap / curv, 0.0), 1.0)
        y = y + alpha * delta
        if alpha == 1.0:
            y = d
        if c_prev is None:
            change = np.inf
        else:
            dc = c - c_prev
            change = float(np.vdot(dc, dc))
        c_prev = c
        if callback is not None:
            callback(k, y)
        if opts.record_trace:
            trace["potential"].append(tolled_potential(model, y, f))
            trace["fw_gap"].append(gap)
            trace["reward_change"].append(change)
            trace["alpha"].append(alpha)
        if change <= opts.eps:
            stop = "reward_change"
            break
        if opts.gap_tol is not None and gap <= opts.gap_tol:
            stop = "fw_gap"
            break

    return _finish(spec, model, f, y, k, stop, trace, opts)


def _finish(spec, model, f, y, k, stop, trace, opts) -> EquilibriumResult:
    c = model.offset + f - model.slope * y
    Q, V, pi = q_backward(spec, c)
    final_gap = float(np.sum(c * (_greedy_density(spec.kernel, spec.initial_mass, c) - y)))
    cert = wardrop_gap(spec, y, model=model, offsets=f, y_min=opts.y_min)
    result = EquilibriumResult(
        y=y, Q=Q, V=V, policy=pi, certificate=cert, fw_gap=max(final_gap, 0.0),
        iterations=k, stop_reason=stop, offsets=f,
        trace={key: np.asarray(v) for key, v in trace.items()},
    )
    log.debug("%s %s after %d iterations, wardrop gap %.3g, fw gap %.3g",
              opts.method, stop, k, cert.gap, result.fw_gap)
    if stop == "max_iters" and opts.raise_not_converged:
        raise NotConverged(f"no stopping criterion met within {opts.max_iters} iterations", result)
    return result
