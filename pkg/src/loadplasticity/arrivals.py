"""Stochastic arrival generation and scenario sets for sample-average planning."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .categories.nid import NidClusterParams

FULL_CHARGE_STATES = 5


@dataclass(frozen=True)
class PhevCluster:
    q: int
    soc: int  # hours of charge already stored
    slack: int  # hours the start may be delayed

    @property
    def pulse(self) -> tuple[float, ...]:
        return (1.0,) * (FULL_CHARGE_STATES - self.soc)

    @property
    def nid(self) -> NidClusterParams:
        return NidClusterParams(self.pulse, self.slack)


@dataclass(frozen=True)
class ArrivalRateProfile:
    """Expected arrivals per hour, lambda[q, x, h]."""

    rates: np.ndarray
    step_minutes: float = 60.0
    clusters: tuple = ()

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 3:
            raise ValueError("rates must have shape (Q, S, H)")
        if (r < 0).any() or not np.isfinite(r).all():
            raise ValueError("rates must be finite and nonnegative")
        if self.step_minutes <= 0 or 60.0 % self.step_minutes and self.step_minutes % 60.0:
            raise ValueError("step must divide an hour or be a whole number of hours")
        object.__setattr__(self, "rates", r)

    @property
    def hours(self) -> int:
        return self.rates.shape[2]

    @property
    def n_steps(self) -> int:
        return int(round(self.hours * 60.0 / self.step_minutes))

    def step_rates(self) -> np.ndarray:
        """Expected arrivals per step, shape (Q, S, T)."""
        hour_of_step = (np.arange(self.n_steps) * self.step_minutes // 60).astype(int)
        return self.rates[:, :, hour_of_step] * (self.step_minutes / 60.0)

    def scaled(self, factor: float) -> "ArrivalRateProfile":
        return ArrivalRateProfile(self.rates * factor, self.step_minutes, self.clusters)

    @property
    def total(self) -> float:
        return float(self.rates.sum())


@dataclass(frozen=True)
class ScenarioTrace:
    """Cumulative arrivals a[q, x, t] (arrivals at or before step t)."""

    arrivals: np.ndarray
    seed: object = None
    departures: np.ndarray | None = None

    def __post_init__(self):
        if (np.diff(self.arrivals, axis=-1) < 0).any():
            raise ValueError("cumulative arrivals must be nondecreasing")

    @property
    def increments(self) -> np.ndarray:
        a = self.arrivals
        return np.concatenate([a[..., :1], np.diff(a, axis=-1)], axis=-1)

    def per_cluster(self) -> np.ndarray:
        """Cumulative arrivals summed over states, shape (Q, T)."""
        return self.arrivals.sum(axis=1)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.arrivals).tobytes()).hexdigest()


@dataclass(frozen=True)
class ScenarioSet:
    traces: tuple[ScenarioTrace, ...]
    profile: ArrivalRateProfile | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.traces) < 1:
            raise ValueError("a scenario set needs K >= 1 traces")

    @property
    def K(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __len__(self):
        return len(self.traces)


def sample_scenario(profile: ArrivalRateProfile, seed) -> ScenarioTrace:
    """Non-homogeneous Poisson counts per step, cumulated."""
    rng = np.random.default_rng(seed)
    counts = rng.poisson(profile.step_rates())
    return ScenarioTrace(np.cumsum(counts, axis=-1), seed)


def sample_population_scenario(profile: ArrivalRateProfile, seed, size: int | None = None) -> ScenarioTrace:
    """Arrivals of a fixed-size population.

    The same rate shape as ``sample_scenario`` but conditioned on the total
    count (``size``, default the rounded expected total), so every (q, x, t)
    count is a multinomial share.
    """
    rng = np.random.default_rng(seed)
    lam = profile.step_rates()
    total = lam.sum()
    n = int(round(total)) if size is None else int(size)
    if total == 0:
        if n:
            raise ValueError("cannot place arrivals on an all-zero profile")
        return ScenarioTrace(np.zeros(lam.shape, dtype=np.int64), seed)
    counts = rng.multinomial(n, (lam / total).ravel()).reshape(lam.shape)
    return ScenarioTrace(np.cumsum(counts, axis=-1), seed)


def build_scenario_set(
    profile: ArrivalRateProfile, K: int, base_seed: int, fixed_population: bool = False
) -> ScenarioSet:
    """K independent traces with seeds (base_seed, k)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    sampler = sample_population_scenario if fixed_population else sample_scenario
    return ScenarioSet(tuple(sampler(profile, (base_seed, k)) for k in range(K)), profile)


def expected_trace(profile: ArrivalRateProfile) -> np.ndarray:
    """Cumulative expected arrivals (real-valued), shape (Q, S, T)."""
    return np.cumsum(profile.step_rates(), axis=-1)


# --- bundled case profile ---------------------------------------------------------------


def evening_template(hours: int = 24, peak: float = 18.0, width: float = 3.0) -> np.ndarray:
    """Synthetic hourly arrival shape: Gaussian bump in clock time, sums to 1.

    Distances wrap around midnight so late arrivals taper smoothly.
    """
    h = np.arange(hours) + 0.5
    d = np.abs(h - peak)
    d = np.minimum(d, 24.0 - d)
    w = np.exp(-0.5 * (d / width) ** 2)
    return w / w.sum()


def phev_clusters() -> tuple[PhevCluster, ...]:
    return tuple(
        PhevCluster(q=i * 3 + j, soc=soc, slack=slack)
        for i, soc in enumerate(range(5))
        for j, slack in enumerate((1, 2, 3))
    )


def pjm_case_profile(
    scale: float = 1.0,
    population: int = 40_000,
    horizon: int = 32,
    arrival_hours: int = 24,
    peak: float = 18.0,
    width: float = 3.0,
    weights: Sequence[float] | None = None,
) -> ArrivalRateProfile:
    """15 PHEV clusters (SoC 0..4 x slack 1..3) over a 32-hour horizon.

    Arrivals happen during the first ``arrival_hours`` hours only; the extra
    hours let charging spill into the next morning. Expected total arrivals
    equal ``scale * population``, also when the horizon cuts the day short.
    """
    clusters = phev_clusters()
    w = np.full(len(clusters), 1.0 / len(clusters)) if weights is None else np.asarray(weights, float)
    if w.shape != (len(clusters),) or (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be 15 nonnegative numbers")
    w = w / w.sum()
    shape = np.zeros(horizon)
    n = min(arrival_hours, horizon)
    daily = evening_template(arrival_hours, peak, width)[:n]
    shape[:n] = daily / daily.sum()  # a short horizon still sees the whole population
    rates = (scale * population) * w[:, None, None] * shape[None, None, :]
    return ArrivalRateProfile(rates, 60.0, clusters)


# --- rate file IO: columns q x h lambda -------------------------------------------------


def read_rate_profile(fh: TextIO, step_minutes: float = 60.0) -> ArrivalRateProfile:
    rows = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected columns q x h lambda")
        rows.append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
    if not rows:
        raise ValueError("empty rate file")
    Q = max(r[0] for r in rows) + 1
    S = max(r[1] for r in rows) + 1
    H = max(r[2] for r in rows) + 1
    rates = np.zeros((Q, S, H))
    for q, x, h, lam in rows:
        rates[q, x, h] = lam
    return ArrivalRateProfile(rates, step_minutes)


def write_rate_profile(profile: ArrivalRateProfile, fh: TextIO) -> None:
    fh.write("# q x h lambda\n")
    Q, S, H = profile.rates.shape
    for q in range(Q):
        for x in range(S):
            for h in range(H):
                fh.write(f"{q} {x} {h} {profile.rates[q, x, h]:.10g}\n")


def trace_snapshot_lines(trace: ScenarioTrace):
    """Cumulative arrivals in the popmodel "t q x n" line format."""
    Q, S, T = trace.arrivals.shape
    for t in range(T):
        for q in range(Q):
            for x in range(S):
                yield f"{t} {q} {x} {int(trace.arrivals[q, x, t])}"
