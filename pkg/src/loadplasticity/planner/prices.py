"""Two-settlement price curves and the real-time deviation cost."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np


@dataclass(frozen=True)
class PriceCurve:
    """Forward prices per hour plus real-time up/down prices per sub-step.

    ``T`` sub-steps make up each hour; real-time arrays have length H * T.
    """

    forward: np.ndarray
    up: np.ndarray
    dn: np.ndarray
    T: int = 1

    def __post_init__(self):
        f = np.asarray(self.forward, dtype=float)
        up = np.asarray(self.up, dtype=float)
        dn = np.asarray(self.dn, dtype=float)
        if up.shape != (f.size * self.T,) or dn.shape != up.shape:
            raise ValueError("real-time prices must have H*T entries")
        if not (np.isfinite(f).all() and np.isfinite(up).all() and np.isfinite(dn).all()):
            raise ValueError("prices must be finite")
        object.__setattr__(self, "forward", f)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "dn", dn)

    @classmethod
    def from_forward(cls, forward, T: int = 1, up_ratio: float = 1.2, dn_ratio: float = 0.8) -> "PriceCurve":
        f = np.asarray(forward, dtype=float)
        per_step = np.repeat(f, T)
        return cls(f, up_ratio * per_step, dn_ratio * per_step, T)

    @property
    def H(self) -> int:
        return self.forward.size

    @property
    def n_steps(self) -> int:
        return self.forward.size * self.T

    def hour_of_step(self) -> np.ndarray:
        return np.arange(self.n_steps) // self.T


def forward_cost(B, prices: PriceCurve) -> float:
    """Energy bought ahead: each sub-step of hour h draws B(h)."""
    return float(prices.T * np.dot(prices.forward, np.asarray(B, dtype=float)))


def realtime_cost(L, B, prices: PriceCurve) -> float:
    """sum pi_up (L - B)^+ + pi_dn (L - B)^-, with (.)^- = min(., 0) a rebate."""
    L = np.asarray(L, dtype=float)
    dev = L - np.repeat(np.asarray(B, dtype=float), prices.T)
    return float(np.dot(prices.up, np.maximum(dev, 0.0)) + np.dot(prices.dn, np.minimum(dev, 0.0)))


def total_cost(L, B, prices: PriceCurve) -> float:
    return forward_cost(B, prices) + realtime_cost(L, B, prices)


def read_forward_prices(fh: TextIO) -> np.ndarray:
    """Columns: h price."""
    rows = []
    for line in fh:
        line = line.strip()
        if line and not line.startswith("#"):
            h, p = line.replace(",", " ").split()[:2]
            rows.append((int(h), float(p)))
    rows.sort()
    if [h for h, _ in rows] != list(range(len(rows))):
        raise ValueError("forward price file must list hours 0..H-1 once each")
    return np.array([p for _, p in rows])


def read_realtime_prices(fh: TextIO, forward, T: int = 1) -> PriceCurve:
    """Columns: t up dn."""
    rows = []
    for line in fh:
        line = line.strip()
        if line and not line.startswith("#"):
            t, up, dn = line.replace(",", " ").split()[:3]
            rows.append((int(t), float(up), float(dn)))
    rows.sort()
    up = np.array([r[1] for r in rows])
    dn = np.array([r[2] for r in rows])
    return PriceCurve(np.asarray(forward, float), up, dn, T)
