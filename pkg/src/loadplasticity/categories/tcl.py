"""Thermostatically controlled loads.

Temperatures are in degrees F and time in minutes. Each unit follows

    x(t+1) = (1 - k) x(t) + alpha(t) + b(t) G,    E[alpha] = k * x_amb

with ``G`` the temperature rise per minute while the heater is on. Electrical
draw while on is ``power`` (W), kept apart from ``G`` so the physical mapping
stays explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from ..popmodel import SwitchMatrix


class UnreachableBoundaryError(ValueError):
    """The comfort boundary a unit heads for lies beyond its steady state."""


class DegenerateGridError(ValueError):
    """State grid too narrow to hold the noise support."""


@dataclass(frozen=True)
class ThermalMapping:
    """Convert nameplate data to per-minute model coefficients.

    k = UA / C per second, G = P / C degC per second; both rescaled to minutes
    and G to degrees F. ``capacitance`` is in J/degC.
    """

    capacitance: float = 4.0e5

    def k(self, ua_w_per_c: float | np.ndarray) -> float | np.ndarray:
        return 60.0 * np.asarray(ua_w_per_c) / self.capacitance

    def gain(self, power_w: float | np.ndarray) -> float | np.ndarray:
        return 60.0 * 1.8 * np.asarray(power_w) / self.capacitance


@dataclass(frozen=True)
class TclClusterParams:
    G: float  # degF per minute while on
    k: float  # per minute
    x_star: float
    B: float
    power: float = 0.0  # W drawn while on
    window: tuple[float, float] = (0.0, 24.0)  # comfort window, clock hours
    noise_sigma: float = 0.05
    eta: float = 0.95

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("band width B must be positive")
        if not self.k > 0:
            raise ValueError("loss rate k must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def lower(self) -> float:
        return self.x_star - self.B / 2

    @property
    def upper(self) -> float:
        return self.x_star + self.B / 2

    def in_window(self, hour: float) -> bool:
        s, e = self.window
        h = hour % 24.0
        return s <= h < e if s <= e else (h >= s or h < e)


def _ambient_at(ambient, t) -> float:
    return float(ambient(t)) if callable(ambient) else float(ambient)


def tcl_transition_pmf(
    params: TclClusterParams,
    x: float,
    b: int,
    t: int,
    states: Sequence[float],
    ambient: float | Callable[[int], float],
) -> np.ndarray:
    """P(x' | x; t; b) over the state grid.

    The noise law is a Gaussian with mean k * x_amb(t) discretized onto the grid
    cells; mass outside the grid is folded into the two boundary states.
    """
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    grid = np.asarray(states, dtype=float)
    if grid.size < 2:
        raise DegenerateGridError("state grid needs at least two levels")
    step = float(grid[1] - grid[0])
    if not np.allclose(np.diff(grid), step) or step <= 0:
        raise ValueError("state grid must be uniform and increasing")
    sigma = params.noise_sigma
    if grid[-1] - grid[0] < 6 * sigma:
        raise DegenerateGridError(f"grid span {grid[-1] - grid[0]:g} below 6 sigma = {6 * sigma:g}")
    mean = (1 - params.k) * x + params.k * _ambient_at(ambient, t) + b * params.G
    pmf = np.zeros(grid.size)
    if sigma == 0:
        pmf[int(np.clip(np.rint((mean - grid[0]) / step), 0, grid.size - 1))] = 1.0
        return pmf
    edges = np.concatenate([[-np.inf], (grid[:-1] + grid[1:]) / 2, [np.inf]])
    cdf = norm.cdf((edges - mean) / sigma)
    pmf = np.diff(cdf)
    return pmf / pmf.sum()


def transition_matrices(params, t, states, ambient) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic (S, S) matrices for b = 0 and b = 1."""
    off = np.array([tcl_transition_pmf(params, x, 0, t, states, ambient) for x in states])
    on = np.array([tcl_transition_pmf(params, x, 1, t, states, ambient) for x in states])
    return off, on


@dataclass(frozen=True)
class TclSwitchState:
    """Per-cluster OFF/ON split of occupancy: {q: (n_off, n_on)}."""

    split: Mapping[int, tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for q, (n0, n1) in self.split.items():
            if np.shape(n0) != np.shape(n1):
                raise ValueError(f"cluster {q}: OFF/ON shapes differ")
            if (np.asarray(n0) < 0).any() or (np.asarray(n1) < 0).any():
                raise ValueError(f"cluster {q}: negative count")

    def occupancy(self, q: int) -> np.ndarray:
        n0, n1 = self.split[q]
        return np.asarray(n0) + np.asarray(n1)


@dataclass(frozen=True)
class TclDraw:
    """One realization of D_{x,x'}: full transition counts including stays."""

    full: Mapping[int, np.ndarray]

    @property
    def switches(self) -> SwitchMatrix:
        out = {}
        for q, m in self.full.items():
            m = m.copy()
            np.fill_diagonal(m, 0)
            out[q] = m
        return SwitchMatrix(out)

    def next_occupancy(self, q: int) -> np.ndarray:
        return self.full[q].sum(axis=0)


def tcl_sample_switches(
    split: TclSwitchState,
    pmfs: Mapping[int, tuple[np.ndarray, np.ndarray]],
    rng_seed,
) -> TclDraw:
    """Multinomial draw of where the OFF and ON units of each bin move."""
    rng = np.random.default_rng(rng_seed)
    full = {}
    for q in sorted(split.split):
        n0, n1 = split.split[q]
        P0, P1 = pmfs[q]
        S = len(n0)
        m = np.zeros((S, S), dtype=np.int64)
        for counts, P in ((n0, P0), (n1, P1)):
            for x in range(S):
                if counts[x]:
                    m[x] += rng.multinomial(int(counts[x]), P[x])
        full[q] = m
    return TclDraw(full)


def expected_switches(split: TclSwitchState, pmfs) -> dict[int, np.ndarray]:
    """E[D_{x,x'} | n] = sum_b n_{x,b} P(x'|x;b)."""
    return {
        q: np.asarray(n0)[:, None] * pmfs[q][0] + np.asarray(n1)[:, None] * pmfs[q][1]
        for q, (n0, n1) in split.split.items()
    }


def tcl_switch_deadline(x: float, b: int, params: TclClusterParams, alpha: float) -> float:
    """Minutes until the unit hits the boundary it is heading for.

    Units at or past that boundary get 0 (forced switch now). A boundary that
    lies beyond the unit's steady state raises UnreachableBoundaryError.
    """
    k = params.k
    target = params.upper if b == 1 else params.lower
    if (b == 1 and x >= target) or (b == 0 and x <= target):
        return 0.0
    steady = b * params.G / k + alpha / k
    num = x - steady
    den = target - steady
    if den == 0 or num / den < 1:
        raise UnreachableBoundaryError(
            f"steady state {steady:.3f} never reaches boundary {target:.3f} (b={b})"
        )
    return math.log(num / den) / k


def switch_deadlines(x, b, G, k, lower, upper, alpha) -> np.ndarray:
    """Vectorized deadlines; unreachable boundaries map to +inf."""
    x, b = np.asarray(x, float), np.asarray(b)
    target = np.where(b == 1, upper, lower)
    steady = (b * G + alpha) / k
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (x - steady) / (target - steady)
        tau = np.where(ratio >= 1, np.log(ratio) / k, np.inf)
    past = np.where(b == 1, x >= target, x <= target)
    return np.where(past, 0.0, np.maximum(tau, 0.0))


# --- duty-cycle closed forms ------------------------------------------------------------


def on_time(G: float, k: float, lo: float, hi: float, ambient: float) -> float:
    """Minutes to heat from lo to hi with the heater on and mean noise."""
    num = lo - G / k - ambient
    den = hi - G / k - ambient
    if den >= 0 or num >= 0:
        raise UnreachableBoundaryError(f"heater steady state {ambient + G / k:.3f} below {hi:.3f}")
    return math.log(num / den) / k


def off_time(k: float, lo: float, hi: float, ambient: float) -> float:
    """Minutes to cool from hi to lo with the heater off."""
    num = hi - ambient
    den = lo - ambient
    if den <= 0:
        raise UnreachableBoundaryError(f"ambient {ambient:.3f} above lower boundary {lo:.3f}")
    return math.log(num / den) / k


def duty_cycle(G: float, k: float, lo: float, hi: float, ambient: float) -> float:
    t_on = on_time(G, k, lo, hi, ambient)
    t_off = off_time(k, lo, hi, ambient)
    return t_on / (t_on + t_off)


# --- real-time coarse clustering --------------------------------------------------------


@dataclass(frozen=True)
class CoarseGrid:
    dtau: float = 1.0  # minutes
    n_bins: int = 30

    def quantize(self, tau) -> np.ndarray:
        """Floor to the grid (report the earlier deadline), clamped to the last bin."""
        idx = np.floor(np.asarray(tau, dtype=float) / self.dtau + 1e-9)
        return np.clip(idx, 0, self.n_bins - 1).astype(np.int64)


@dataclass(frozen=True)
class CoarseTclState:
    counts: np.ndarray  # (n_bins, 2): [:, 0] OFF, [:, 1] ON
    G_bar: float
    grid: CoarseGrid = field(default_factory=CoarseGrid)

    def __post_init__(self):
        if self.counts.shape != (self.grid.n_bins, 2):
            raise ValueError("counts shape does not match the deadline grid")
        if (self.counts < 0).any():
            raise ValueError("negative bin count")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def coarse_cluster(
    tau, b, present, reporting, power, t: int = 0, grid: CoarseGrid | None = None
) -> CoarseTclState:
    """Histogram of present, reporting units over (quantized deadline, status).

    Units still inside their courtesy period (``reporting`` False) are left out.
    ``G_bar`` is the mean draw over all present units.
    """
    grid = grid or CoarseGrid()
    tau = np.asarray(tau, dtype=float)
    b = np.asarray(b, dtype=np.int64)
    present = np.asarray(present, dtype=bool)
    mask = present & np.asarray(reporting, dtype=bool)
    counts = np.zeros((grid.n_bins, 2), dtype=np.int64)
    np.add.at(counts, (grid.quantize(tau[mask]), b[mask]), 1)
    power = np.asarray(power, dtype=float)
    G_bar = float(power[present].mean()) if present.any() else 0.0
    return CoarseTclState(counts, G_bar, grid)
