"""Non-interruptible deferrable loads: a fixed pulse whose start can slide."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CausalityError(ValueError):
    """Activations exceed arrivals, or a start deadline is missed."""


@dataclass(frozen=True)
class NidClusterParams:
    pulse: tuple[float, ...]
    chi: int

    def __post_init__(self):
        if len(self.pulse) == 0:
            raise ValueError("pulse must have finite nonempty support")
        if any(p < 0 for p in self.pulse):
            raise ValueError("pulse values must be nonnegative")
        if self.chi < 0:
            raise ValueError("chi must be >= 0")

    @property
    def energy(self) -> float:
        return float(sum(self.pulse))

    @property
    def length(self) -> int:
        return len(self.pulse)


def nid_load(activations, pulses, arrivals=None, chi=None, horizon: int | None = None) -> np.ndarray:
    """Population load as the convolution of activation counts with each pulse.

    ``activations`` has shape (Q, T): number of appliances starting at each
    step. If cumulative ``arrivals`` (Q, T) are given the start counts are
    checked against d(t) <= a(t) and, with ``chi``, d(t) >= a(t - chi).
    """
    act = np.atleast_2d(np.asarray(activations, dtype=float))
    Q, T = act.shape
    if len(pulses) != Q:
        raise ValueError("one pulse per cluster required")
    if (act < -1e-9).any():
        raise CausalityError("negative activation count")
    if arrivals is not None:
        check_nid_trajectory(np.cumsum(act, axis=1), np.atleast_2d(arrivals), chi)
    T_out = T if horizon is None else horizon
    load = np.zeros(T_out)
    for q in range(Q):
        full = np.convolve(act[q], np.asarray(pulses[q], dtype=float))
        n = min(T_out, len(full))
        load[:n] += full[:n]
    return load


def check_nid_trajectory(d, a, chi=None, tol: float = 1e-9) -> None:
    """Raise CausalityError unless a(t-chi) <= d(t) <= a(t) and d nondecreasing."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if d.shape != a.shape:
        raise ValueError("activation and arrival histories differ in shape")
    if (np.diff(d, axis=1) < -tol).any():
        raise CausalityError("cumulative activations decrease")
    over = d - a > tol
    if over.any():
        q, t = map(int, np.argwhere(over)[0])
        raise CausalityError(f"cluster {q}: {d[q, t]:g} activations by t={t} but only {a[q, t]:g} arrivals")
    if chi is not None:
        for q, c in enumerate(chi):
            c = int(c)
            lag = np.concatenate([np.zeros(c), a[q, : max(0, a.shape[1] - c)]])[: a.shape[1]]
            late = lag - d[q] > tol
            if late.any():
                t = int(np.argmax(late))
                raise CausalityError(f"cluster {q}: start deadline missed at t={t}")


def resample_pulse(pulse, src_minutes: float, dst_minutes: float) -> tuple[float, ...]:
    """Re-bin a power pulse onto a new step length, preserving energy.

    Power is treated as piecewise constant over each source step; each
    destination step receives the average power over its span.
    """
    p = np.asarray(pulse, dtype=float)
    edges_src = np.arange(len(p) + 1) * src_minutes
    energy_cum = np.concatenate([[0.0], np.cumsum(p * src_minutes)])
    total = edges_src[-1]
    n_dst = int(np.ceil(total / dst_minutes - 1e-9))
    edges_dst = np.minimum(np.arange(n_dst + 1) * dst_minutes, total)
    e = np.interp(edges_dst, edges_src, energy_cum)
    return tuple(np.diff(e) / dst_minutes)
