"""Social welfare, the welfare-optimal flow and constraint generation.

Total welfare ``J(y) = sum y * (c - m*y)`` has gradient ``c - 2*m*y``, so the
welfare optimum is the equilibrium of the same game with doubled congestion
slopes and is computed by the same Frank-Wolfe solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import AffineConstraint
from .errors import NotConverged
from .frank_wolfe import EquilibriumResult, SolverOptions, solve_equilibrium
from .mdp_core import GameSpec
from .potential import RewardModel
from .tolling import ConstrainedSolveResult, PlannerOptions, solve_constrained


def social_objective(model: RewardModel, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(y * (model.offset - model.slope * y)))


def welfare_model(model: RewardModel) -> RewardModel:
    """Reward model whose potential is the social objective."""
    return RewardModel(model.offset, 2.0 * model.slope)


def solve_social_optimum(spec: GameSpec, opts: SolverOptions = None, model: RewardModel = None) -> EquilibriumResult:
    model = model if model is not None else spec.rewards
    return solve_equilibrium(spec, model=welfare_model(model), opts=opts)


@dataclass
class GeneratedBounds:
    """Per-cell bounds ``(value, t, s, a)``: ``upper`` caps, ``lower`` floors."""

    upper: list
    lower: list
    eps: float

    def __len__(self):
        return len(self.upper) + len(self.lower)

    def constraints(self) -> list:
        out = [AffineConstraint.upper_bound((t, s, a), v, name=f"upper{(t, s, a)}") for v, t, s, a in self.upper]
        out += [AffineConstraint.lower_bound((t, s, a), v, name=f"lower{(t, s, a)}") for v, t, s, a in self.lower]
        return out


def generate_constraints(x_star, y_star, eps_gen: float) -> GeneratedBounds:
    """Bound every cell where the equilibrium departs from the welfare optimum by more than ``eps_gen``."""
    if not eps_gen > 0:
        raise ValueError("eps_gen must be > 0")
    x_star = np.asarray(x_star, dtype=float)
    dev = np.asarray(y_star, dtype=float) - x_star
    upper, lower = [], []
    for idx in np.ndindex(dev.shape):
        if dev[idx] > eps_gen:
            upper.append((float(x_star[idx]), *idx))
        elif dev[idx] < -eps_gen:
            lower.append((float(x_star[idx]), *idx))
    return GeneratedBounds(upper, lower, float(eps_gen))


def payouts(y, tolls):
    """``(h_driv, h_plan, h_net)``: charges paid by drivers, subsidies paid by the planner, and their difference."""
    y = np.asarray(y, dtype=float)
    h_driv = float(np.sum(y * np.abs(np.minimum(tolls, 0.0))))
    h_plan = float(np.sum(y * np.maximum(tolls, 0.0)))
    return h_driv, h_plan, h_plan - h_driv


@dataclass
class WelfareReport:
    J_equilibrium: float
    J_social: float
    J_constrained: float
    gap_ratio: float
    n_constraints: int
    h_driv: float
    h_plan: float
    h_net: float
    constrained: ConstrainedSolveResult = field(repr=False, default=None)
    tolled: EquilibriumResult = field(repr=False, default=None)


def _solve(spec, model, opts, offsets=None):
    try:
        return solve_equilibrium(spec, model=model, offsets=offsets, opts=opts)
    except NotConverged as err:
        return err.result


def _ratio(J_social, J):
    return (J_social - J) / abs(J_social) if J_social != 0 else J_social - J


def welfare_with_constraints(spec: GameSpec, bounds: GeneratedBounds, opts: PlannerOptions = None,
                             J_equilibrium: float = None, J_social: float = None,
                             solver_opts: SolverOptions = None) -> WelfareReport:
    """Impose ``bounds`` by tolls and compare the resulting welfare with the optimum.

    Dual ascent supplies the tolls; the game output is then the equilibrium of
    the tolled unconstrained game, solved from scratch with ``solver_opts``.
    Using the same solver settings as for ``J_equilibrium`` and ``J_social``
    keeps the rows of a welfare curve equally accurate.  ``J_equilibrium`` and
    ``J_social`` are recomputed when not supplied.
    """
    model = spec.rewards
    if J_equilibrium is None:
        J_equilibrium = social_objective(model, _solve(spec, model, solver_opts).y)
    if J_social is None:
        J_social = social_objective(model, _solve(spec, welfare_model(model), solver_opts).y)
    res = solve_constrained(spec, bounds.constraints(), opts)
    tolled = _solve(spec, model, solver_opts, offsets=res.tolls.tensor)
    J = social_objective(model, tolled.y)
    h_driv, h_plan, h_net = payouts(tolled.y, res.tolls.tensor)
    return WelfareReport(J_equilibrium, J_social, J, _ratio(J_social, J), len(bounds), h_driv, h_plan, h_net,
                         res, tolled)


@dataclass
class WelfareCurve:
    equilibrium: EquilibriumResult
    social: EquilibriumResult
    J_equilibrium: float
    J_social: float
    rows: list  # WelfareReport per threshold, in grid order


def welfare_curve(spec: GameSpec, eps_grid, opts: PlannerOptions = None,
                  solver_opts: SolverOptions = None) -> WelfareCurve:
    """Welfare of the tolled equilibrium for each constraint-generation threshold.

    The equilibrium and the welfare optimum are solved once with
    ``solver_opts``.  A threshold that generates no constraint leaves the game
    untolled, so its row reuses the equilibrium: ``J_constrained ==
    J_equilibrium`` and zero payouts.
    """
    model = spec.rewards
    eq = _solve(spec, model, solver_opts)
    soc = _solve(spec, welfare_model(model), solver_opts)
    J_eq, J_soc = social_objective(model, eq.y), social_objective(model, soc.y)
    rows = []
    for eps in eps_grid:
        bounds = generate_constraints(soc.y, eq.y, eps)
        if len(bounds):
            rows.append(welfare_with_constraints(spec, bounds, opts, J_equilibrium=J_eq, J_social=J_soc,
                                                 solver_opts=solver_opts))
        else:
            rows.append(WelfareReport(J_eq, J_soc, J_eq, _ratio(J_soc, J_eq), 0, 0.0, 0.0, 0.0, tolled=eq))
    return WelfareCurve(eq, soc, J_eq, J_soc, rows)
