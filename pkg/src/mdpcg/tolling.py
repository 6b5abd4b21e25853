"""Constraint-enforcing tolls for the social planner.

The planner wants the equilibrium to satisfy affine constraints
``g_i(y) = w_i . y - b_i >= 0``.  Solving the constrained potential
maximization by dual decomposition gives multipliers ``tau_i >= 0``; offering
the constant reward offsets ``sum_i tau_i * w_i`` makes the constrained
optimum the Wardrop equilibrium of the tolled, unconstrained game.

Positive toll entries are subsidies, negative ones are charges.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .constraints import AffineConstraint, constraint_matrix
from .errors import DimensionMismatch, InfeasibleConstraints, NotConverged
from .frank_wolfe import EquilibriumResult, SolverOptions, solve_equilibrium
from .mdp_core import GameSpec, flow_constraints
from .potential import RewardModel

log = logging.getLogger(__name__)

STEP_SCALINGS = ("curvature", "uniform")
DEFAULT_INNER = SolverOptions(max_iters=2000, eps=1e-14, record_trace=False, raise_not_converged=False)


@dataclass(frozen=True)
class PlannerOptions:
    max_outer: int = 500
    eta0: Optional[float] = None
    step_scaling: str = "curvature"  # or "uniform"
    diminishing: bool = False
    tol_g: float = 1e-3
    tol_cs: float = 1e-3
    tau_cap: float = 1e8
    inner: SolverOptions = DEFAULT_INNER
    warm_start: bool = True
    check_feasibility: bool = True

    def __post_init__(self):
        if self.step_scaling not in STEP_SCALINGS:
            raise ValueError(f"step_scaling must be one of {STEP_SCALINGS}, got {self.step_scaling!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ValueError("eta0 must be > 0")


@dataclass
class TollSchedule:
    tau_dual: np.ndarray  # one multiplier per constraint
    tensor: np.ndarray  # (T, S, A) additive reward offsets


@dataclass
class ConstrainedSolveResult:
    y: np.ndarray
    tolls: TollSchedule
    slacks: np.ndarray
    max_violation: float
    cs_residual: float
    converged: bool
    outer_iterations: int
    equilibrium: EquilibriumResult
    trace: dict = field(default_factory=dict)


def modified_rewards(shape, constraints: Sequence[AffineConstraint], taus) -> np.ndarray:
    """Toll tensor ``sum_i taus[i] * grad g_i``."""
    taus = np.asarray(taus, dtype=float)
    if taus.shape != (len(constraints),):
        raise DimensionMismatch(f"{len(constraints)} constraints but {taus.size} multipliers")
    if np.any(taus < 0):
        raise ValueError("multipliers must be nonnegative")
    f = np.zeros(shape)
    for tau, con in zip(taus, constraints):
        if tau:
            f += tau * con.gradient(shape)
    return f


def complementary_slackness(taus, g) -> float:
    """``max_i |tau_i g_i| / (1 + tau_i)``."""
    if len(g) == 0:
        return 0.0
    return float(np.max(np.abs(taus * g) / (1.0 + np.abs(taus))))


def check_feasible(spec: GameSpec, W, b) -> bool:
    """Whether some flow on the polytope satisfies ``W y >= b`` (one LP solve)."""
    A_eq, b_eq = flow_constraints(spec)
    n = A_eq.shape[1]
    scale = max(1.0, spec.total_mass)
    res = linprog(np.zeros(n), A_ub=-W if len(b) else None, b_ub=-b + 1e-9 * scale if len(b) else None,
                  A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def dual_steps(W, slope, opts: PlannerOptions) -> np.ndarray:
    """Base dual step per constraint.

    ``"uniform"`` uses ``eta0`` (default ``1 / (1 + max|w|)``) for every
    multiplier.  ``"curvature"`` divides by the diagonal of the dual Hessian
    bound ``G = W diag(1/m) W^T`` and by the largest eigenvalue of the
    diagonally scaled ``G``, which keeps a constant step stable even when
    constraints share cells.
    """
    if opts.step_scaling == "uniform":
        eta = opts.eta0 if opts.eta0 is not None else 1.0 / (1.0 + np.abs(W).max())
        return np.full(W.shape[0], float(eta))
    Wm = W / np.sqrt(np.asarray(slope, dtype=float).ravel())
    G = Wm @ Wm.T
    diag = np.diag(G).copy()
    scale = np.sqrt(diag)
    lam = float(np.linalg.eigvalsh(G / np.outer(scale, scale)).max())
    return (opts.eta0 if opts.eta0 is not None else 1.0) / (diag * max(lam, 1.0))


def solve_constrained(spec: GameSpec, constraints: Sequence[AffineConstraint],
                      opts: PlannerOptions = None, model: RewardModel = None) -> ConstrainedSolveResult:
    """Maximize the potential subject to ``constraints`` by projected dual ascent.

    Each outer step solves the tolled unconstrained game, then moves every
    multiplier against its constraint value and projects onto ``tau >= 0``.
    Steps come from :func:`dual_steps`, divided by ``sqrt(j)`` at outer
    iteration ``j`` when ``opts.diminishing`` is set.

    Raises
    ------
    InfeasibleConstraints
        If no flow satisfies the constraints, or the multipliers blow past
        ``opts.tau_cap``.
    """
    opts = opts or PlannerOptions()
    model = model if model is not None else spec.rewards
    constraints = list(constraints)
    K = len(constraints)
    W, b = constraint_matrix(constraints, spec.shape)
    if opts.check_feasibility and K and not check_feasible(spec, W, b):
        raise InfeasibleConstraints("no flow on the polytope satisfies the constraints")
    eta0 = dual_steps(W, model.slope, opts) if K else np.zeros(0)
    inner = opts.inner
    warm = opts.warm_start and inner.method == "frank_wolfe" and inner.step == "line_search"

    taus = np.zeros(K)
    trace = {"tau": [], "max_violation": [], "cs": [], "inner_iterations": []}
    eq = None
    converged = False
    j = 0
    for j in range(1, opts.max_outer + 1):
        f = (taus @ W).reshape(spec.shape)
        try:
            eq = solve_equilibrium(spec, model=model, offsets=f, opts=inner,
                                   init=eq.y if (warm and eq is not None) else None)
        except NotConverged as err:
            eq = err.result
        g = W @ eq.y.ravel() - b
        viol = float(max(0.0, -g.min())) if K else 0.0
        cs = complementary_slackness(taus, g)
        trace["tau"].append(taus.copy())
        trace["max_violation"].append(viol)
        trace["cs"].append(cs)
        trace["inner_iterations"].append(eq.iterations)
        if viol <= opts.tol_g and cs <= opts.tol_cs:
            converged = True
            break
        step = eta0 / np.sqrt(j) if opts.diminishing else eta0
        taus = np.maximum(0.0, taus - step * g)
        if taus.max(initial=0.0) > opts.tau_cap:
            raise InfeasibleConstraints(
                f"multipliers exceeded {opts.tau_cap:g} with violation {viol:.3g}; constraints look infeasible")
    else:
        log.warning("dual ascent stopped at %d iterations: violation %.3g, cs %.3g", j, viol, cs)

    y = eq.y
    g = W @ y.ravel() - b
    tolls = TollSchedule(taus.copy(), (taus @ W).reshape(spec.shape))
    return ConstrainedSolveResult(
        y=y, tolls=tolls, slacks=g,
        max_violation=float(max(0.0, -g.min())) if K else 0.0,
        cs_residual=complementary_slackness(taus, g),
        converged=converged, outer_iterations=j, equilibrium=eq,
        trace={k: np.asarray(v) for k, v in trace.items()},
    )


@dataclass
class TollCheckReport:
    max_abs_diff: float
    worst_slack: float
    passed: bool
    tolled: EquilibriumResult


def verify_tolled_equilibrium(spec: GameSpec, constraints: Sequence[AffineConstraint],
                              result: ConstrainedSolveResult, tol: float = 1e-3,
                              opts: SolverOptions = None, model: RewardModel = None) -> TollCheckReport:
    """Re-solve the unconstrained game with the returned tolls from scratch.

    Passes when the tolled equilibrium matches the constrained optimum within
    ``tol`` (max norm) and violates no constraint by more than ``tol``.
    """
    opts = opts or replace(DEFAULT_INNER, max_iters=20000)
    try:
        eq = solve_equilibrium(spec, model=model, offsets=result.tolls.tensor, opts=opts)
    except NotConverged as err:
        eq = err.result
    diff = float(np.max(np.abs(eq.y - result.y)))
    W, b = constraint_matrix(list(constraints), spec.shape)
    worst = float((W @ eq.y.ravel() - b).min()) if len(b) else 0.0
    return TollCheckReport(diff, worst, diff <= tol and worst >= -tol, eq)

