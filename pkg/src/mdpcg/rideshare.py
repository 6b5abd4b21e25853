"""Ride-share driver game on a neighbourhood graph.

Every state ``s`` exposes action 0 ("ride": wait for a rider in ``s``) and one
"goto" action per neighbour, ordered by neighbour id.  States with fewer
neighbours than the maximum degree get padded goto actions that self-loop and
carry a prohibitive reward offset, so all tensors stay rectangular.

State ids in configs and in this module's public functions are 1-based, as on
the neighbourhood map; arrays are indexed 0-based (``id - 1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .constraints import AffineConstraint
from .errors import ConfigError, DisconnectedGraph
from .mdp_core import GameSpec, normalize_rows
from .potential import RewardModel

RIDE = 0
PAD_OFFSET = -1e6

DEFAULT_STATES = (
    "University District",  # 1
    "Capitol Hill",  # 2
    "Ballard",  # 3
    "Fremont",  # 4
    "Queen Anne",  # 5
    "South Lake Union",  # 6
    "Belltown",  # 7
    "Sand Point",  # 8
    "Magnolia",  # 9
    "Wallingford",  # 10
    "Green Lake",  # 11
    "Ravenna",  # 12
)

DEFAULT_EDGES = (
    (1, 2), (1, 10), (1, 11), (1, 12), (1, 8),
    (2, 6), (2, 7),
    (3, 4), (3, 9),
    (4, 5), (4, 10),
    (5, 6), (5, 7), (5, 9),
    (6, 7), (6, 10),
    (8, 12),
    (10, 11),
    (11, 12),
)

DEFAULT_RESIDENTIAL = (3, 4, 8, 9, 11, 12)
BELLTOWN = 7


@dataclass
class ScenarioConfig:
    states: list = field(default_factory=lambda: list(DEFAULT_STATES))
    edges: list = field(default_factory=lambda: [list(e) for e in DEFAULT_EDGES])
    residential: list = field(default_factory=lambda: list(DEFAULT_RESIDENTIAL))
    horizon: int = 20
    time_step_hours: float = 0.25
    rate_per_mile: float = 6.0
    velocity_mph: float = 8.0
    fuel_price_per_gal: float = 2.5
    fuel_eff_mpg: float = 20.0
    value_of_time: float = 27.0
    d_ave_miles: float = 1.25
    # [i, j, miles] overrides of the default edge length d_ave_miles
    distances: list = field(default_factory=list)
    # rides/hour, a scalar or one value per state
    demand_rate: Union[float, list] = 10.0
    # $/driver congestion slope on goto actions, a scalar or [i, j, value] overrides
    move_congestion: float = 0.06
    move_congestion_overrides: list = field(default_factory=list)
    population: float = 3500.0

    @property
    def num_states(self) -> int:
        return len(self.states)

    def state_id(self, state: Union[int, str]) -> int:
        """1-based id of a state given by id or name."""
        if isinstance(state, str):
            try:
                return self.states.index(state) + 1
            except ValueError:
                raise IndexError(f"unknown state {state!r}") from None
        state = int(state)
        if not 1 <= state <= self.num_states:
            raise IndexError(f"state id {state} outside 1..{self.num_states}")
        return state

    def neighbours(self) -> list:
        """0-based sorted neighbour lists."""
        nbrs = [set() for _ in range(self.num_states)]
        for i, j in self.edges:
            nbrs[i - 1].add(j - 1)
            nbrs[j - 1].add(i - 1)
        return [sorted(n) for n in nbrs]

    def demand(self) -> np.ndarray:
        rate = np.broadcast_to(np.asarray(self.demand_rate, dtype=float), (self.num_states,))
        return rate.copy()

    def distance_matrix(self) -> np.ndarray:
        S = self.num_states
        dist = np.zeros((S, S))
        for i, j in self.edges:
            dist[i - 1, j - 1] = dist[j - 1, i - 1] = self.d_ave_miles
        for i, j, miles in self.distances:
            dist[i - 1, j - 1] = dist[j - 1, i - 1] = miles
        return dist

    def validate(self):
        S = self.num_states
        if S < 1 or len(set(self.states)) != S:
            raise ConfigError("states must be a non-empty list of unique names")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        for e in self.edges:
            if len(e) != 2 or not all(1 <= int(v) <= S for v in e) or e[0] == e[1]:
                raise ConfigError(f"bad edge {e}")
        for r in self.residential:
            if not 1 <= int(r) <= S:
                raise ConfigError(f"residential state {r} outside 1..{S}")
        if not self.residential:
            raise ConfigError("at least one residential state is required")
        positive = ("time_step_hours", "rate_per_mile", "velocity_mph", "fuel_price_per_gal",
                    "fuel_eff_mpg", "value_of_time", "d_ave_miles", "move_congestion", "population")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if np.asarray(self.demand_rate).ndim not in (0, 1) or np.asarray(self.demand_rate).size not in (1, S):
            raise ConfigError("demand_rate must be a scalar or one value per state")
        if not np.all(self.demand() > 0):
            raise ConfigError("demand rates must be > 0")
        for e in list(self.distances) + list(self.move_congestion_overrides):
            if len(e) != 3 or not e[2] > 0:
                raise ConfigError(f"bad override {e}")
        return self


def action_layout(cfg: ScenarioConfig):
    """``targets[s][a]``: 0-based goto target of action ``a``, None for ride or padding."""
    nbrs = cfg.neighbours()
    A = 1 + max(len(n) for n in nbrs)
    targets = []
    for n in nbrs:
        row = [None] * A
        for k, j in enumerate(n):
            row[1 + k] = j
        targets.append(row)
    return targets, A


def _check_connected(cfg):
    S = cfg.num_states
    if S == 1:
        return
    nbrs = cfg.neighbours()
    if any(len(n) == 0 for n in nbrs):
        raise DisconnectedGraph("graph has an isolated state")
    rows = [i for i, n in enumerate(nbrs) for _ in n]
    cols = [j for n in nbrs for j in n]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(S, S))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise DisconnectedGraph(f"neighbourhood graph has {n_comp} components")


def raw_kernel(cfg: ScenarioConfig) -> np.ndarray:
    """Single-stage ``(S, S, A)`` kernel with the literal movement probabilities.

    Goto rows sum to ``0.9 + 0.1 (|N|-1)/|N|`` and are not yet normalized.
    """
    _check_connected(cfg)
    nbrs = cfg.neighbours()
    targets, A = action_layout(cfg)
    S = cfg.num_states
    P = np.zeros((S, S, A))
    for i in range(S):
        n = nbrs[i]
        share = 1.0 / (len(n) + 1)
        P[i, i, RIDE] = share
        for j in n:
            P[j, i, RIDE] = share
        for a in range(1, A):
            target = targets[i][a]
            if target is None:
                P[i, i, a] = 1.0
                continue
            for j in n:
                P[j, i, a] = 0.9 if j == target else 0.1 / len(n)
    return P


def build_kernel(cfg: ScenarioConfig) -> np.ndarray:
    """Normalized kernel replicated over the ``T-1`` transitions."""
    P = normalize_rows(raw_kernel(cfg)[None])[0]
    return np.repeat(P[None], cfg.horizon - 1, axis=0)


def trip_economics(cfg: ScenarioConfig):
    """Fare revenue and travel cost matrices ``(fare, cost)`` indexed ``[s_next, s]``."""
    dist = cfg.distance_matrix()
    fare = cfg.rate_per_mile * dist
    cost = cfg.value_of_time * dist / cfg.velocity_mph + cfg.fuel_price_per_gal / cfg.fuel_eff_mpg * dist
    return fare, cost


def build_rewards(cfg: ScenarioConfig) -> RewardModel:
    P = normalize_rows(raw_kernel(cfg)[None])[0]
    targets, A = action_layout(cfg)
    S, T = cfg.num_states, cfg.horizon
    fare, cost = trip_economics(cfg)
    # expected (fare - cost) over the next state
    stage_offset = np.einsum("nsa,ns->sa", P, fare - cost)
    slope = np.empty((S, A))
    slope[:, RIDE] = cfg.value_of_time / cfg.demand()
    slope[:, 1:] = cfg.move_congestion
    overrides = {(i - 1, j - 1): v for i, j, v in cfg.move_congestion_overrides}
    for i in range(S):
        for a in range(1, A):
            target = targets[i][a]
            if target is None:
                stage_offset[i, a] = PAD_OFFSET
            elif (i, target) in overrides:
                slope[i, a] = overrides[(i, target)]
    offset = np.broadcast_to(stage_offset, (T, S, A)).copy()
    return RewardModel(offset, np.broadcast_to(slope, (T, S, A)).copy())


def initial_mass(cfg: ScenarioConfig) -> np.ndarray:
    p = np.zeros(cfg.num_states)
    res = sorted(set(int(r) for r in cfg.residential))
    p[[r - 1 for r in res]] = cfg.population / len(res)
    return p


def build_scenario(cfg: ScenarioConfig) -> GameSpec:
    cfg.validate()
    kernel = build_kernel(cfg)
    return GameSpec(cfg.horizon, kernel, initial_mass(cfg), build_rewards(cfg))


def valid_actions(cfg: ScenarioConfig) -> np.ndarray:
    """Boolean ``(S, A)`` mask, False on padded goto actions."""
    targets, A = action_layout(cfg)
    mask = np.ones((cfg.num_states, A), dtype=bool)
    for i, row in enumerate(targets):
        for a in range(1, A):
            mask[i, a] = row[a] is not None
    return mask


def belltown_constraints(cfg: ScenarioConfig, state: Union[int, str] = BELLTOWN, min_mass: float = 10.0,
                         t_range: Optional[Sequence[int]] = None) -> list:
    """Minimum driver coverage ``sum_a y[t, s, a] >= min_mass`` for each ``t`` in ``t_range``.

    ``t_range`` defaults to stages ``3..T-1``.
    """
    s = cfg.state_id(state) - 1
    if t_range is None:
        t_range = range(3, cfg.horizon)
    t_range = list(t_range)
    for t in t_range:
        if not 0 <= t < cfg.horizon:
            raise IndexError(f"stage {t} outside 0..{cfg.horizon - 1}")
    _, A = action_layout(cfg)
    return [AffineConstraint.state_mass(t, s, A, min_mass, name=f"coverage[{cfg.states[s]}, t={t}]")
            for t in t_range]
