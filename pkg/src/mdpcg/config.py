"""Run configuration files.

A config is one YAML document with these top-level keys (only ``game`` or
``scenario`` is required, and exactly one of them must be present):

``name``
    Free-form label copied into the outputs.
``game``
    Explicit tabular game.  ``horizon``, ``initial_mass`` (length S),
    ``kernel`` (nested list of shape (T-1, S, S, A), ``P[t][s_next][s][a]``),
    ``offset`` and ``slope`` (shape (T, S, A)) and an optional ``normalize``
    flag that rescales kernel rows to sum to one.
``scenario``
    Ride-share scenario; any field of :class:`~mdpcg.rideshare.ScenarioConfig`,
    omitted fields take their defaults.
``solver``
    ``max_iters``, ``eps``, ``step`` (``line_search`` or ``harmonic``),
    ``gap_tol``, ``method`` (``frank_wolfe`` or ``newton``) and ``dual_tol``
    for the equilibrium solver.
``planner``
    Dual ascent settings: ``max_outer``, ``eta0``, ``step_scaling``,
    ``diminishing``, ``tol_g``, ``tol_cs``, ``tau_cap`` and ``inner_max_iters``,
    ``inner_eps`` and ``inner_method`` for the tolled solves.
``constraints``
    List of constraint entries, each a mapping with a ``kind``:

    * ``belltown``: scenario coverage floor, keys ``state`` (1-based id or
      name, default Belltown), ``min_mass`` (default 10), ``t_from`` and
      ``t_to`` (inclusive stages, default 3 and T-1).
    * ``state_mass``: ``t``, ``s``, ``min_mass`` with 0-based indices.
    * ``lower_bound`` / ``upper_bound``: ``cell`` ``[t, s, a]`` and ``value``.
    * ``affine``: ``weights`` as ``[[t, s, a, w], ...]``, ``bound`` and an
      optional ``name``; means ``sum w * y[t, s, a] >= bound``.
``welfare``
    ``eps_grid``: constraint-generation thresholds for the welfare command.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .constraints import AffineConstraint
from .errors import ConfigError, MDPCGError
from .frank_wolfe import SolverOptions
from .mdp_core import GameSpec, normalize_rows
from .potential import RewardModel
from .rideshare import ScenarioConfig, belltown_constraints, build_scenario
from .tolling import DEFAULT_INNER, PlannerOptions

TOP_KEYS = ("name", "game", "scenario", "solver", "planner", "constraints", "welfare")
SOLVER_KEYS = ("max_iters", "eps", "step", "gap_tol", "method", "dual_tol")
PLANNER_KEYS = ("max_outer", "eta0", "step_scaling", "diminishing", "tol_g", "tol_cs", "tau_cap")
CONSTRAINT_KEYS = {
    "belltown": ({"kind"}, {"state", "min_mass", "t_from", "t_to"}),
    "state_mass": ({"kind", "t", "s", "min_mass"}, set()),
    "lower_bound": ({"kind", "cell", "value"}, set()),
    "upper_bound": ({"kind", "cell", "value"}, set()),
    "affine": ({"kind", "weights", "bound"}, {"name"}),
}


@dataclass
class TabularGame:
    horizon: int
    initial_mass: list
    kernel: list
    offset: list
    slope: list
    normalize: bool = False

    def to_spec(self) -> GameSpec:
        T = self.horizon
        offset = np.asarray(self.offset, dtype=float)
        if offset.ndim != 3:
            raise ConfigError(f"offset must be a (T, S, A) nested list, got {offset.ndim} dimensions")
        S, A = offset.shape[1:]
        kernel = np.asarray(self.kernel, dtype=float)
        if T == 1 and kernel.size == 0:
            kernel = np.zeros((0, S, S, A))
        if self.normalize and kernel.size:
            kernel = normalize_rows(kernel)
        spec = GameSpec(T, kernel, self.initial_mass)
        return spec.with_rewards(RewardModel(offset, np.asarray(self.slope, dtype=float)))


@dataclass
class RunConfig:
    name: str = ""
    game: Optional[TabularGame] = None
    scenario: Optional[ScenarioConfig] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    planner: PlannerOptions = field(default_factory=PlannerOptions)
    constraints: list = field(default_factory=list)
    eps_grid: list = field(default_factory=list)

    def build_spec(self) -> GameSpec:
        try:
            if self.game is not None:
                return self.game.to_spec()
            return build_scenario(self.scenario)
        except ConfigError:
            raise
        except (MDPCGError, ValueError, TypeError) as err:
            raise ConfigError(f"cannot build game: {err}") from err

    def build_constraints(self, spec: GameSpec) -> list:
        try:
            return [c for entry in self.constraints for c in _constraint(self, spec, entry)]
        except ConfigError:
            raise
        except (MDPCGError, ValueError, TypeError, IndexError, KeyError) as err:
            raise ConfigError(f"bad constraint: {err}") from err


def _floats(x):
    return np.asarray(x, dtype=float).tolist()


def _mapping(raw, where):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    return raw


def _check_keys(raw, allowed, where):
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _parse_game(raw) -> TabularGame:
    raw = _mapping(raw, "game")
    names = [f.name for f in fields(TabularGame)]
    _check_keys(raw, names, "game")
    missing = {"horizon", "initial_mass", "offset", "slope"} - set(raw)
    if missing:
        raise ConfigError(f"game is missing {sorted(missing)}")
    try:
        return TabularGame(
            horizon=int(raw["horizon"]),
            initial_mass=_floats(raw["initial_mass"]),
            kernel=_floats(raw.get("kernel", [])),
            offset=_floats(raw["offset"]),
            slope=_floats(raw["slope"]),
            normalize=bool(raw.get("normalize", False)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad game tensors: {err}") from err


def _parse_scenario(raw) -> ScenarioConfig:
    raw = _mapping(raw, "scenario")
    _check_keys(raw, [f.name for f in fields(ScenarioConfig)], "scenario")
    cfg = ScenarioConfig(**raw)
    try:
        cfg.horizon = int(cfg.horizon)
        cfg.states = [str(s) for s in cfg.states]
        cfg.edges = [[int(i), int(j)] for i, j in cfg.edges]
        cfg.residential = [int(r) for r in cfg.residential]
        cfg.distances = [[int(i), int(j), float(d)] for i, j, d in cfg.distances]
        cfg.move_congestion_overrides = [[int(i), int(j), float(v)] for i, j, v in cfg.move_congestion_overrides]
        if isinstance(cfg.demand_rate, (list, tuple)):
            cfg.demand_rate = _floats(cfg.demand_rate)
        else:
            cfg.demand_rate = float(cfg.demand_rate)
        for name in ("time_step_hours", "rate_per_mile", "velocity_mph", "fuel_price_per_gal", "fuel_eff_mpg",
                     "value_of_time", "d_ave_miles", "move_congestion", "population"):
            setattr(cfg, name, float(getattr(cfg, name)))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad scenario field: {err}") from err
    cfg.validate()
    return cfg


def _parse_solver(raw) -> SolverOptions:
    raw = _mapping(raw, "solver")
    _check_keys(raw, SOLVER_KEYS, "solver")
    try:
        return SolverOptions(**raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad solver options: {err}") from err


def _parse_planner(raw) -> PlannerOptions:
    raw = dict(_mapping(raw, "planner"))
    _check_keys(raw, PLANNER_KEYS + ("inner_max_iters", "inner_eps", "inner_method"), "planner")
    try:
        inner = replace(DEFAULT_INNER, max_iters=int(raw.pop("inner_max_iters", DEFAULT_INNER.max_iters)),
                        eps=float(raw.pop("inner_eps", DEFAULT_INNER.eps)),
                        method=str(raw.pop("inner_method", DEFAULT_INNER.method)))
        return PlannerOptions(inner=inner, **raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad planner options: {err}") from err


def _parse_constraints(raw) -> list:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ConfigError("constraints must be a list")
    out = []
    for entry in raw:
        entry = _mapping(entry, "constraint entry")
        kind = entry.get("kind")
        if kind not in CONSTRAINT_KEYS:
            raise ConfigError(f"constraint kind must be one of {sorted(CONSTRAINT_KEYS)}, got {kind!r}")
        required, optional = CONSTRAINT_KEYS[kind]
        _check_keys(entry, required | optional, f"{kind} constraint")
        if required - set(entry):
            raise ConfigError(f"{kind} constraint is missing {sorted(required - set(entry))}")
        out.append(dict(entry))
    return out


def parse_config(source) -> RunConfig:
    """Build a :class:`RunConfig` from YAML text or an already loaded mapping."""
    if isinstance(source, str):
        try:
            source = yaml.safe_load(source)
        except yaml.YAMLError as err:
            raise ConfigError(f"invalid YAML: {err}") from err
    raw = _mapping(source, "config")
    _check_keys(raw, TOP_KEYS, "top-level")
    if ("game" in raw) == ("scenario" in raw):
        raise ConfigError("config needs exactly one of 'game' or 'scenario'")
    welfare = _mapping(raw.get("welfare"), "welfare")
    _check_keys(welfare, ("eps_grid",), "welfare")
    try:
        eps_grid = _floats(welfare.get("eps_grid", []))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad eps_grid: {err}") from err
    return RunConfig(
        name=str(raw.get("name", "")),
        game=_parse_game(raw["game"]) if "game" in raw else None,
        scenario=_parse_scenario(raw["scenario"]) if "scenario" in raw else None,
        solver=_parse_solver(raw.get("solver")),
        planner=_parse_planner(raw.get("planner")),
        constraints=_parse_constraints(raw.get("constraints")),
        eps_grid=eps_grid,
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {"name": cfg.name}
    if cfg.game is not None:
        out["game"] = asdict(cfg.game)
    else:
        out["scenario"] = asdict(cfg.scenario)
    out["solver"] = {k: getattr(cfg.solver, k) for k in SOLVER_KEYS}
    planner = {k: getattr(cfg.planner, k) for k in PLANNER_KEYS}
    planner["inner_max_iters"] = cfg.planner.inner.max_iters
    planner["inner_eps"] = cfg.planner.inner.eps
    planner["inner_method"] = cfg.planner.inner.method
    out["planner"] = planner
    out["constraints"] = [dict(c) for c in cfg.constraints]
    out["welfare"] = {"eps_grid": list(cfg.eps_grid)}
    return out


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def _cell(v):
    t, s, a = (int(i) for i in v)
    return (t, s, a)


def _constraint(cfg: RunConfig, spec: GameSpec, entry: dict) -> list:
    kind = entry["kind"]
    if kind == "belltown":
        if cfg.scenario is None:
            raise ConfigError("belltown constraints need a scenario config")
        t_from = int(entry.get("t_from", 3))
        t_to = int(entry.get("t_to", spec.horizon - 1))
        return belltown_constraints(cfg.scenario, state=entry.get("state", 7),
                                    min_mass=float(entry.get("min_mass", 10.0)),
                                    t_range=range(t_from, t_to + 1))
    T, S, A = spec.shape
    if kind == "state_mass":
        t, s = int(entry["t"]), int(entry["s"])
        if not (0 <= t < T and 0 <= s < S):
            raise ConfigError(f"state_mass index ({t}, {s}) outside the game")
        return [AffineConstraint.state_mass(t, s, A, float(entry["min_mass"]), name=f"state_mass[{t},{s}]")]
    if kind in ("lower_bound", "upper_bound"):
        cell = _cell(entry["cell"])
        if not all(0 <= i < n for i, n in zip(cell, spec.shape)):
            raise ConfigError(f"cell {cell} outside the game")
        make = AffineConstraint.lower_bound if kind == "lower_bound" else AffineConstraint.upper_bound
        return [make(cell, float(entry["value"]), name=f"{kind}[{cell[0]},{cell[1]},{cell[2]}]")]
    weights = {}
    for row in entry["weights"]:
        t, s, a, w = row
        cell = _cell((t, s, a))
        if not all(0 <= i < n for i, n in zip(cell, spec.shape)):
            raise ConfigError(f"cell {cell} outside the game")
        weights[cell] = weights.get(cell, 0.0) + float(w)
    return [AffineConstraint(weights, float(entry["bound"]), name=str(entry.get("name", "")))]
