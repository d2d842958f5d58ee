"""Battery-like categories: ideal battery, rate-constrained (RIC), interruptible (IS)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..popmodel import Category, ClusterSpec, PopulationState


@dataclass(frozen=True)
class IdealBatteryParams:
    E: int

    def __post_init__(self):
        if self.E < 0:
            raise ValueError("E must be >= 0")


@dataclass(frozen=True)
class RicClusterParams:
    """Capacity E, deadline chi, required fraction rho, max rate G (states per step)."""

    E: int
    chi: float
    rho: float
    G: int
    allow_discharge: bool = False

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.G < 1:
            raise ValueError("G must be >= 1")
        if self.E < 0:
            raise ValueError("E must be >= 0")

    @classmethod
    def ideal(cls, E: int) -> "RicClusterParams":
        return cls(E=E, chi=math.inf, rho=1.0, G=E + 1, allow_discharge=True)

    def to_cluster(self, cluster_id: int, category: Category = Category.RIC) -> ClusterSpec:
        return ClusterSpec.battery(cluster_id, category, E=self.E, chi=self.chi, rho=self.rho, G=self.G)


# IS shares the RIC parameter tuple; only the neighbor set differs
IsClusterParams = RicClusterParams


def neighbor_set(category: Category, params, x: int) -> frozenset[int]:
    """States reachable from x in one step under the category's rate limit."""
    category = Category(category)
    E = params.E
    if not 0 <= x <= E:
        raise ValueError(f"state {x} outside 0..{E}")
    if category == Category.IDEAL_BATTERY:
        return frozenset(range(E + 1))
    if category == Category.RIC:
        return frozenset(range(max(0, x - params.G), min(E, x + params.G) + 1))
    if category == Category.IS:
        return frozenset({x, min(x + params.G, E)})
    raise ValueError(f"no neighbor set for category {category}")


def allowed_moves(category: Category, params, x: int) -> frozenset[int]:
    """Neighbor set minus discharging moves unless the cluster enables them."""
    moves = neighbor_set(category, params, x)
    if getattr(params, "allow_discharge", True) or Category(category) == Category.IDEAL_BATTERY:
        return moves
    return frozenset(m for m in moves if m >= x)


@dataclass(frozen=True)
class DeadlineViolation:
    q: int
    x: int
    n: int


def deadline_feasible(
    state: PopulationState, params: dict[int, RicClusterParams], t: int
) -> tuple[bool, list[DeadlineViolation]]:
    """Check n_x^q(chi^q) = 0 for every x < rho^q E^q of clusters whose deadline is t."""
    violations = []
    for q, p in params.items():
        if not math.isfinite(p.chi) or int(p.chi) != t:
            continue
        need = p.rho * p.E
        occ = state.occupancy[q]
        for x in range(len(occ)):
            if x < need - 1e-12 and occ[x] > 0:
                violations.append(DeadlineViolation(q, x, int(occ[x])))
    return (not violations), violations
