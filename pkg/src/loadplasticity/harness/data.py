"""Bundled synthetic case-study inputs.

None of these are measured data. They are smooth stand-ins with the shapes
the case studies need and can be replaced by user files.
"""

from __future__ import annotations

from typing import TextIO

import numpy as np

# $/MWh, autumn weekday shape: overnight trough, morning shoulder, evening peak.
# Peak/trough stays below 1.2/0.8 so real-time deviations can never be traded
# profitably across hours.
FORWARD_PRICE_24H = np.array(
    [33, 31, 30.5, 30, 30.5, 32, 36, 41, 40, 38.5, 37.5, 37, 36.5, 36, 35.5, 36, 38, 41, 44, 43, 41, 38.5, 36, 34.5],
    dtype=float,
)

# per-unit daily load, peak 1.0 in the early evening
BASE_LOAD_24H = np.array(
    [0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.76, 0.80, 0.82, 0.83, 0.84,
     0.84, 0.84, 0.85, 0.87, 0.91, 0.96, 1.00, 0.99, 0.95, 0.88, 0.78, 0.69],
    dtype=float,
)

# degF for the six night hours of the TCL study. Mild, so every heater in the
# parameter ranges can cycle; together with the default capacitance it sets
# both the cycling rate and the storage a band offers.
AMBIENT_6H = np.array([63.0, 62.5, 62.0, 61.5, 61.0, 60.5])


def extend_daily(profile_24h: np.ndarray, hours: int) -> np.ndarray:
    """Repeat a daily profile to cover ``hours`` (the next morning repeats this one)."""
    reps = int(np.ceil(hours / 24))
    return np.tile(profile_24h, reps)[:hours]


def forward_prices(hours: int = 32) -> np.ndarray:
    return extend_daily(FORWARD_PRICE_24H, hours)


def base_load(hours: int, uncontrolled_flexible: np.ndarray, flexible_share: float = 0.10) -> np.ndarray:
    """Daily base load scaled so flexible demand is ``flexible_share`` of the peak.

    The flexible reference is the expected charge-on-arrival load; the base
    shape is scaled until peak(flexible) = share * peak(base + flexible).
    """
    shape = extend_daily(BASE_LOAD_24H, hours)
    flex = np.asarray(uncontrolled_flexible, float)[:hours]
    peak_flex = flex.max()
    if peak_flex <= 0:
        return np.zeros(hours)
    target_peak = peak_flex / flexible_share
    # peak(s * shape + flex) is increasing in s; bisect
    lo, hi = 0.0, target_peak / shape.max()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if (mid * shape + flex).max() < target_peak:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * shape


def regulation_signal(minutes: int, seed=0, corr_minutes: float = 4.3) -> np.ndarray:
    """Synthetic normalized regulation signal in [-1, 1] at 1-minute resolution.

    A first-order autoregressive process passed through tanh. The default
    correlation time puts the 97% quantile of zero-crossing intervals near
    19 minutes.
    """
    rng = np.random.default_rng(seed)
    phi = np.exp(-1.0 / corr_minutes)
    z = np.zeros(minutes)
    eps = rng.normal(size=minutes) * np.sqrt(1 - phi**2)
    for t in range(1, minutes):
        z[t] = phi * z[t - 1] + eps[t]
    s = np.tanh(z)
    return s / max(1.0, np.abs(s).max())


def zero_crossing_quantile(signal: np.ndarray, q: float = 0.97) -> float:
    """Quantile of the time between sign changes, in samples."""
    sgn = np.sign(signal)
    sgn[sgn == 0] = 1
    idx = np.nonzero(np.diff(sgn) != 0)[0]
    if idx.size < 2:
        return float(signal.size)
    return float(np.quantile(np.diff(idx), q))


def read_signal(fh: TextIO) -> np.ndarray:
    """Columns: minute value (normalized to [-1, 1])."""
    rows = []
    for line in fh:
        line = line.strip()
        if line and not line.startswith("#"):
            m, v = line.replace(",", " ").split()[:2]
            rows.append((int(m), float(v)))
    rows.sort()
    vals = np.array([v for _, v in rows])
    if (np.abs(vals) > 1 + 1e-9).any():
        raise ValueError("regulation signal must be normalized to [-1, 1]")
    return vals
