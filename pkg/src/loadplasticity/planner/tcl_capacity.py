"""Regulation capacity of a heater population: duty-cycle envelopes and step-hold simulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..categories.tcl import TclClusterParams, UnreachableBoundaryError, duty_cycle
from ..dispatch.tcl import TclFleet, run_tracking

log = logging.getLogger(__name__)


def _duty_matrix(catalog: Sequence[TclClusterParams], ambient, band) -> np.ndarray:
    """(Q, H) duty cycles; ``band(c)`` gives the (lo, hi) band used for cluster c."""
    ambient = np.atleast_1d(np.asarray(ambient, float))
    out = np.zeros((len(catalog), ambient.size))
    for q, c in enumerate(catalog):
        lo, hi = band(c)
        for h, amb in enumerate(ambient):
            try:
                out[q, h] = duty_cycle(c.G, c.k, lo, hi, amb)
            except UnreachableBoundaryError as exc:
                raise UnreachableBoundaryError(f"cluster {q}, hour {h}: {exc}") from None
    return out


def _powers(catalog) -> np.ndarray:
    return np.array([c.power for c in catalog], float)


def tcl_baseline_load(catalog: Sequence[TclClusterParams], n: np.ndarray, ambient) -> np.ndarray:
    """Expected autonomous load per hour: sum_q n^q(h) P^q duty^q(h).

    ``n`` is (Q, H) or (Q,) for a constant population.
    """
    duty = _duty_matrix(catalog, ambient, lambda c: (c.lower, c.upper))
    return (_occupancy(n, duty.shape) * _powers(catalog)[:, None] * duty).sum(axis=0)


def _occupancy(n, shape) -> np.ndarray:
    n = np.asarray(n, float)
    return np.broadcast_to(n[:, None] if n.ndim == 1 else n, shape)


def tcl_stationary_envelopes(
    catalog: Sequence[TclClusterParams], n: np.ndarray, ambient, theta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Hourly (max, min) stationary loads from the top and bottom sub-bands of width ``theta``."""
    bad = [q for q, c in enumerate(catalog) if theta > c.B + 1e-12]
    if bad:
        raise ValueError(f"theta={theta} wider than the band of clusters {bad}")
    if theta <= 0:
        raise ValueError("theta must be positive")
    hi = _duty_matrix(catalog, ambient, lambda c: (c.upper - theta, c.upper))
    lo = _duty_matrix(catalog, ambient, lambda c: (c.lower, c.lower + theta))
    w = _occupancy(n, hi.shape) * _powers(catalog)[:, None]
    return (w * hi).sum(axis=0), (w * lo).sum(axis=0)


def conservative_capacity(envelopes: tuple[np.ndarray, np.ndarray], baseline: np.ndarray) -> float:
    L_max, L_min = (np.asarray(e, float) for e in envelopes)
    base = np.asarray(baseline, float)
    return float(max(0.0, np.minimum(base - L_min, L_max - base).min()))


# --- step-hold simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class StepRule:
    """A step of height m held for ``hold`` minutes is acceptable when the load stays
    within ``tol`` * m of target for at least ``share`` of the minutes, in both directions."""

    hold: int = 19
    tol: float = 0.05
    share: float = 0.95

    def accepts(self, load, target, m: float) -> bool:
        err = np.abs(np.asarray(load) - np.asarray(target))
        return bool(np.mean(err < self.tol * m) >= self.share)


@dataclass
class CapacityResult:
    baseline: np.ndarray  # (H,) W
    L_max: np.ndarray
    L_min: np.ndarray
    M: float
    M_prime: float
    per_unit: np.ndarray  # (Q, H) M^q(h), W per unit
    n: np.ndarray  # (Q, H)
    hold: int
    theta: float
    meta: dict = field(default_factory=dict)

    @property
    def ordered(self) -> bool:
        return self.M <= self.M_prime + 1e-9


def _homogeneous_fleet(c: TclClusterParams, n_sim: int, ambient: float, duty: float, rng) -> TclFleet:
    temp = rng.uniform(c.lower, c.upper, n_sim)
    b = (rng.random(n_sim) < duty).astype(np.int8)
    full = lambda v: np.full(n_sim, float(v))
    return TclFleet(
        power=full(c.power), G=full(c.G), k=full(c.k), lower=full(c.lower), upper=full(c.upper),
        temp=temp, b=b, ambient=lambda t: ambient, noise_sigma=c.noise_sigma,
    )


def step_response(
    c: TclClusterParams, ambient: float, m: float, sign: int, seed, n_sim: int = 1000, rule: StepRule = StepRule()
) -> tuple[np.ndarray, np.ndarray]:
    """(load, target) of ``n_sim`` units asked to hold baseline + sign * m * n_sim.

    The baseline is the autonomous run with the same initial states and noise.
    """
    duty = duty_cycle(c.G, c.k, c.lower, c.upper, ambient)
    init = np.random.SeedSequence(seed).spawn(1)[0]
    base = run_tracking(_homogeneous_fleet(c, n_sim, ambient, duty, np.random.default_rng(init)), [None] * rule.hold, seed)
    target = base["load"] + sign * m * n_sim
    fleet = _homogeneous_fleet(c, n_sim, ambient, duty, np.random.default_rng(init))
    run = run_tracking(fleet, target, seed)
    return run["load"], target


def cluster_step_capacity(
    c: TclClusterParams,
    ambient: float,
    seed,
    n_sim: int = 1000,
    rule: StepRule = StepRule(),
    rel_tol: float = 0.01,
    max_iter: int = 12,
) -> float:
    """Largest per-unit step (W) the cluster holds in both directions, by bisection.

    The bracket is [0, P * min(duty, 1 - duty)], the most a homogeneous group
    can move at all in its tighter direction.
    """
    duty = duty_cycle(c.G, c.k, c.lower, c.upper, ambient)
    hi = c.power * min(duty, 1 - duty)
    if hi <= 0:
        return 0.0

    def ok(m: float) -> bool:
        return all(rule.accepts(*step_response(c, ambient, m, s, seed, n_sim, rule), m * n_sim) for s in (1, -1))

    if ok(hi):
        return hi
    lo, top = 0.0, hi
    for _ in range(max_iter):
        if top - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + top)
        if ok(mid):
            lo = mid
        else:
            top = mid
    return lo


def simulated_capacity(
    catalog: Sequence[TclClusterParams],
    n: np.ndarray,
    ambient,
    rule: StepRule = StepRule(),
    n_sim: int = 1000,
    seed=0,
    active: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """M' = sum_q min_h n^q(h) M^q(h) and the (Q, H) per-unit table M^q(h).

    Every (q, h) bisection draws from its own stream keyed by (seed, q, h),
    so results do not depend on evaluation order. Clusters with no units
    (``active`` False) are skipped and contribute zero.
    """
    ambient = np.atleast_1d(np.asarray(ambient, float))
    Q, H = len(catalog), ambient.size
    n = _occupancy(n, (Q, H))
    active = n.sum(axis=1) > 0 if active is None else np.asarray(active, bool)
    per_unit = np.zeros((Q, H))
    for q in range(Q):
        if not active[q]:
            continue
        for h in range(H):
            per_unit[q, h] = cluster_step_capacity(catalog[q], ambient[h], (seed, q, h), n_sim, rule)
        log.debug("cluster %d: M^q(h) = %s", q, np.round(per_unit[q], 1))
    return float((n * per_unit).min(axis=1).sum()), per_unit


def estimate_capacity(
    catalog: Sequence[TclClusterParams],
    n: np.ndarray,
    ambient,
    theta: float = 1.0,
    rule: StepRule = StepRule(),
    n_sim: int = 1000,
    seed=0,
) -> CapacityResult:
    ambient = np.atleast_1d(np.asarray(ambient, float))
    nn = np.array(_occupancy(n, (len(catalog), ambient.size)))
    base = tcl_baseline_load(catalog, nn, ambient)
    env = tcl_stationary_envelopes(catalog, nn, ambient, theta)
    M = conservative_capacity(env, base)
    M_prime, per_unit = simulated_capacity(catalog, nn, ambient, rule, n_sim, seed)
    res = CapacityResult(base, env[0], env[1], M, M_prime, per_unit, nn, rule.hold, theta)
    if not res.ordered:
        log.warning("conservative capacity %.1f W exceeds simulated capacity %.1f W", M, M_prime)
    return res


def fleet_step_shares(make_fleet, m: float, starts: Sequence[int], rule: StepRule = StepRule(), seed=0) -> np.ndarray:
    """Share of hold minutes within tolerance for steps of +-m (W) at each start minute.

    ``make_fleet`` returns a fresh fleet at minute 0. Each step is compared
    with the paired autonomous run. Returns (len(starts), 2) for (+m, -m).
    """
    out = np.zeros((len(starts), 2))
    for i, s in enumerate(starts):
        horizon = s + rule.hold
        base = run_tracking(make_fleet(), [None] * horizon, seed)["load"]
        for j, sign in enumerate((1, -1)):
            targets = [None] * s + list(base[s:] + sign * m)
            load = run_tracking(make_fleet(), targets, seed)["load"]
            err = np.abs(load[s:] - base[s:] - sign * m)
            out[i, j] = np.mean(err < rule.tol * m)
    return out


def fleet_accepts(make_fleet, m: float, starts: Sequence[int], rule: StepRule = StepRule(), seed=0) -> bool:
    return bool((fleet_step_shares(make_fleet, m, starts, rule, seed) >= rule.share).all())
