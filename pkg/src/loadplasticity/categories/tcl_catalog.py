"""Heater populations drawn from uniform parameter laws and their grid catalog."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..popmodel import Category, ClusterSpec
from .tcl import ThermalMapping, TclClusterParams

COMPONENTS = ("power", "ua", "x_star", "B")


@dataclass(frozen=True)
class TclLaws:
    """Uniform ranges per component and the number of quantization levels."""

    power: tuple[float, float] = (2000.0, 4000.0)  # W
    ua: tuple[float, float] = (50.0, 200.0)  # W/degC
    x_star: tuple[float, float] = (69.0, 75.0)  # degF
    B: tuple[float, float] = (2.0, 4.0)  # degF
    levels: tuple[int, int, int, int] = (3, 4, 4, 2)
    on_prob: float = 0.15

    def range_of(self, name: str) -> tuple[float, float]:
        return getattr(self, name)

    def centres(self, name: str) -> np.ndarray:
        lo, hi = self.range_of(name)
        n = self.levels[COMPONENTS.index(name)]
        return lo + (np.arange(n) + 0.5) * (hi - lo) / n

    @property
    def n_clusters(self) -> int:
        return int(np.prod(self.levels))


@dataclass
class TclUnits:
    power: np.ndarray
    ua: np.ndarray
    x_star: np.ndarray
    B: np.ndarray
    G: np.ndarray
    k: np.ndarray
    resampled: int = 0

    @property
    def n(self) -> int:
        return self.power.size

    @property
    def lower(self) -> np.ndarray:
        return self.x_star - self.B / 2

    @property
    def upper(self) -> np.ndarray:
        return self.x_star + self.B / 2


def reachable(G, k, upper, ambient_min: float, margin: float = 0.5):
    """Heater steady state clears the upper comfort limit by ``margin`` at the coldest hour."""
    return ambient_min + np.asarray(G) / np.asarray(k) >= np.asarray(upper) + margin


def sample_units(
    n: int,
    rng: np.random.Generator,
    laws: TclLaws = TclLaws(),
    mapping: ThermalMapping = ThermalMapping(),
    ambient_min: float | None = None,
    margin: float = 0.5,
    max_rounds: int = 100,
) -> TclUnits:
    """Draw ``n`` heaters; with ``ambient_min`` set, redraw units that cannot reach their band."""
    draws = {c: rng.uniform(*laws.range_of(c), size=n) for c in COMPONENTS}
    resampled = 0
    if ambient_min is not None:
        for _ in range(max_rounds):
            bad = ~reachable(
                mapping.gain(draws["power"]), mapping.k(draws["ua"]), draws["x_star"] + draws["B"] / 2, ambient_min, margin
            )
            m = int(bad.sum())
            if m == 0:
                break
            resampled += m
            for c in COMPONENTS:
                draws[c][bad] = rng.uniform(*laws.range_of(c), size=m)
        else:
            raise ValueError("could not draw heaters able to reach their bands; ambient too cold")
    return TclUnits(
        G=np.asarray(mapping.gain(draws["power"]), float),
        k=np.asarray(mapping.k(draws["ua"]), float),
        resampled=resampled,
        **draws,
    )


def level_index(values, lo: float, hi: float, n_levels: int) -> np.ndarray:
    """Equal-width bins over [lo, hi]; equivalent to snapping to the nearest bin centre."""
    idx = np.floor((np.asarray(values, float) - lo) / (hi - lo) * n_levels)
    return np.clip(idx, 0, n_levels - 1).astype(np.int64)


def assign_units(units: TclUnits, laws: TclLaws = TclLaws()) -> np.ndarray:
    """Cluster id per unit, row-major over (power, ua, x_star, B) levels."""
    idx = [level_index(getattr(units, c), *laws.range_of(c), laws.levels[i]) for i, c in enumerate(COMPONENTS)]
    return np.ravel_multi_index(idx, laws.levels)


def build_catalog(
    laws: TclLaws = TclLaws(), mapping: ThermalMapping = ThermalMapping(), noise_sigma: float = 0.05
) -> list[TclClusterParams]:
    """One cluster per grid cell, parameterized at the cell centre."""
    out = []
    for p, ua, xs, B in product(*(laws.centres(c) for c in COMPONENTS)):
        out.append(
            TclClusterParams(
                G=float(mapping.gain(p)), k=float(mapping.k(ua)), x_star=float(xs), B=float(B), power=float(p),
                noise_sigma=noise_sigma,
            )
        )
    return out


def catalog_specs(laws: TclLaws = TclLaws(), n_temp_bins: int = 20) -> list[ClusterSpec]:
    """The same grid as generic cluster specs, for the population model's assignment."""
    return [
        ClusterSpec(i, Category.TCL, dict(zip(COMPONENTS, map(float, vals))), tuple(range(n_temp_bins)))
        for i, vals in enumerate(product(*(laws.centres(c) for c in COMPONENTS)))
    ]


def cluster_counts(cluster: np.ndarray, n_clusters: int) -> np.ndarray:
    return np.bincount(cluster, minlength=n_clusters)
