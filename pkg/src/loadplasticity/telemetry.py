"""Anonymous uplink: request packets, neighborhood collectors, MAC load and M&V.

Packets carry (slot, category, cluster, state) and nothing else. Collectors
reduce them to counts; the aggregator only ever sees counts.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
from scipy.stats import chi2

from .popmodel import Category

WIRE = struct.Struct(">IBHH")  # slot, category, cluster, state
CATEGORY_CODES = {c: i for i, c in enumerate(Category)}
CODE_CATEGORIES = {i: c for c, i in CATEGORY_CODES.items()}


class MalformedPacket(ValueError):
    pass


@dataclass(frozen=True)
class RequestPacket:
    slot: int
    category: Category
    q: int
    x: int

    def __post_init__(self):
        if not 0 <= self.slot < 2**32:
            raise MalformedPacket(f"slot {self.slot} out of range")
        if not (0 <= self.q < 2**16 and 0 <= self.x < 2**16):
            raise MalformedPacket(f"cluster/state ({self.q}, {self.x}) out of range")
        Category(self.category)

    def encode(self) -> bytes:
        return WIRE.pack(self.slot, CATEGORY_CODES[Category(self.category)], self.q, self.x)

    @classmethod
    def decode(cls, raw: bytes) -> "RequestPacket":
        if len(raw) != WIRE.size:
            raise MalformedPacket(f"expected {WIRE.size} bytes, got {len(raw)}")
        slot, v, q, x = WIRE.unpack(raw)
        if v not in CODE_CATEGORIES:
            raise MalformedPacket(f"unknown category code {v}")
        return cls(slot, CODE_CATEGORIES[v], q, x)


TallyKey = tuple[Category, int, int]  # (v, q, x)


@dataclass
class Tally:
    """Counts per (slot, v, q, x) plus packets that could not be decoded."""

    counts: Counter = field(default_factory=Counter)
    rejected: int = 0

    def add(self, packet: RequestPacket) -> None:
        self.counts[(packet.slot, Category(packet.category), packet.q, packet.x)] += 1

    def merge(self, other: "Tally") -> "Tally":
        out = Tally(self.counts + other.counts, self.rejected + other.rejected)
        return out

    def slot(self, slot: int) -> dict[TallyKey, int]:
        return {k[1:]: c for k, c in self.counts.items() if k[0] == slot}

    def total(self) -> int:
        return sum(self.counts.values())

    def write(self, fh: TextIO) -> None:
        fh.write("slot v q x count\n")
        for (s, v, q, x), c in sorted(self.counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2], kv[0][3])):
            fh.write(f"{s} {v.value} {q} {x} {c}\n")


def collector_tally(packets: Iterable[bytes | RequestPacket]) -> Tally:
    """Histogram of payloads; undecodable packets go to the reject count."""
    tally = Tally()
    for p in packets:
        if isinstance(p, (bytes, bytearray)):
            try:
                p = RequestPacket.decode(bytes(p))
            except (MalformedPacket, ValueError, struct.error):
                tally.rejected += 1
                continue
        tally.add(p)
    return tally


def merge_tallies(tallies: Iterable[Tally]) -> Tally:
    out = Tally()
    for t in tallies:
        out = out.merge(t)
    return out


# --- MAC channel --------------------------------------------------------------------------


@dataclass(frozen=True)
class Neighborhood:
    """Households on one collector.

    ``p`` maps a category to the per-slot transmission probability of one
    appliance (scalar, or one value per slot), ``per_house`` to the number of
    such appliances in each household.
    """

    households: int
    per_house: Mapping[str, int]
    p: Mapping[str, np.ndarray | float]
    slot_seconds: float = 60.0
    latency_seconds: float = 0.007

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("latency must be shorter than the slot")
        for k, v in self.p.items():
            v = np.asarray(v, float)
            if ((v < 0) | (v > 1)).any():
                raise ValueError(f"transmission probability for {k} outside [0, 1]")

    @property
    def alpha(self) -> float:
        return self.latency_seconds / self.slot_seconds

    def probabilities(self, t: int | None = None) -> np.ndarray:
        """Per-appliance probabilities at slot t (or scalar rates)."""
        parts = []
        for k, count in self.per_house.items():
            v = np.asarray(self.p[k], float)
            val = float(v) if v.ndim == 0 else float(v[t])
            parts.append(np.full(self.households * count, val))
        return np.concatenate(parts) if parts else np.zeros(0)

    def scaled(self, factor: float) -> "Neighborhood":
        return Neighborhood(int(round(self.households * factor)), self.per_house, self.p, self.slot_seconds, self.latency_seconds)


def mac_throughput_probs(p: np.ndarray, slot_seconds: float, alpha: float) -> float:
    """Packets per second sum_i p_i prod_{j != i} (1 - alpha p_j) / slot."""
    p = np.asarray(p, float)
    if p.size == 0:
        return 0.0
    factors = 1.0 - alpha * p
    if (factors <= 0).any():
        raise ValueError("alpha * p must stay below 1")
    log_all = np.log(factors).sum()
    others = np.exp(log_all - np.log(factors))
    return float((p * others).sum() / slot_seconds)


def mac_throughput(hood: Neighborhood, t: int | None = None) -> float:
    return mac_throughput_probs(hood.probabilities(t), hood.slot_seconds, hood.alpha)


@dataclass(frozen=True)
class CoverageReport:
    capacity_pps: float
    density_pps_per_m2: float
    demand_pps: float | None = None

    @property
    def headroom(self) -> float | None:
        return None if not self.demand_pps else self.capacity_pps / self.demand_pps


def coverage_limits(latency_seconds: float = 0.007, range_m: float = 100.0, demand_pps: float | None = None) -> CoverageReport:
    """Collector capacity 1/latency and the rate density it supports.

    Density is capacity / range^2, the figure quoted for a collector; use
    capacity / (pi range^2) for the disc area itself.
    """
    if latency_seconds <= 0 or range_m <= 0:
        raise ValueError("latency and range must be positive")
    cap = math.floor(1.0 / latency_seconds)
    return CoverageReport(cap, cap / range_m**2, demand_pps)


def forward_bytes_per_slot(n_values: int, bits_per_value: int | None = None, max_count: int = 1) -> float:
    """Collector-to-aggregator payload per slot, in bytes, for ``n_values`` counters."""
    if bits_per_value is None:
        bits_per_value = max(1, math.ceil(math.log2(max_count + 1)))
    return n_values * bits_per_value / 8.0


# --- measurement and verification ---------------------------------------------------------


@dataclass(frozen=True)
class MvProfile:
    mu: np.ndarray
    W: np.ndarray
    eta: float
    dispatched: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, float)
        n = np.asarray(self.mu).size
        if W.shape != (n, n) or np.asarray(self.dispatched).size != n:
            raise ValueError("dimensions of mu, W and the dispatched profile differ")
        if not np.allclose(W, W.T):
            raise ValueError("covariance must be symmetric")

    @classmethod
    def with_false_reject(cls, mu, W, dispatched, rate: float = 0.01) -> "MvProfile":
        """Threshold from the chi-square law so a compliant household fails with ``rate``."""
        return cls(np.asarray(mu, float), np.asarray(W, float), float(chi2.ppf(1 - rate, np.asarray(mu).size)), np.asarray(dispatched, float))


@dataclass(frozen=True)
class MvResult:
    accept: bool
    statistic: float


def mv_verify(observed: np.ndarray, profile: MvProfile) -> MvResult:
    """Squared Mahalanobis distance of observed - dispatched from the inflexible mean."""
    r = np.asarray(observed, float) - profile.dispatched - profile.mu
    if r.shape != np.asarray(profile.mu).shape:
        raise ValueError("observed profile has the wrong length")
    try:
        L = np.linalg.cholesky(np.asarray(profile.W, float))
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("covariance is not positive definite") from None
    z = np.linalg.solve(L, r)
    stat = float(z @ z)
    return MvResult(stat <= profile.eta, stat)


def null_acceptance(profile: MvProfile, trials: int, seed=0) -> float:
    """Acceptance rate when households comply and the inflexible load is Gaussian."""
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(profile.mu, profile.W, size=trials)
    L = np.linalg.cholesky(profile.W)
    z = np.linalg.solve(L, (draws - profile.mu).T)
    return float(np.mean((z**2).sum(axis=0) <= profile.eta))


def chi2_acceptance(profile: MvProfile) -> float:
    return float(chi2.cdf(profile.eta, np.asarray(profile.mu).size))


# --- per-appliance packet streams ---------------------------------------------------------


def packets_from_counts(slot: int, counts: Mapping[TallyKey, int]) -> list[bytes]:
    """Encode one packet per event; the inverse of the collector's tally."""
    out = []
    for (v, q, x), c in counts.items():
        raw = RequestPacket(slot, Category(v), q, x).encode()
        out.extend([raw] * int(c))
    return out


def rates_per_slot(events_per_slot: Sequence[float], n_appliances: int) -> np.ndarray:
    """Per-appliance transmission probability from event counts in each slot."""
    if n_appliances <= 0:
        return np.zeros(len(events_per_slot))
    return np.clip(np.asarray(events_per_slot, float) / n_appliances, 0.0, 1.0)
