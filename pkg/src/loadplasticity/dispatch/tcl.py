"""Real-time TCL scheduling on coarse (deadline, status) bins, and a unit-level fleet."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..categories.tcl import CoarseGrid, CoarseTclState, coarse_cluster, switch_deadlines


@dataclass(frozen=True)
class TrackDecision:
    on: np.ndarray  # (n_bins,) OFF units to switch ON, per deadline bin
    off: np.ndarray  # (n_bins,) ON units to switch OFF
    residual: float  # unmet power change (W), signed

    @property
    def net(self) -> int:
        return int(self.on.sum() - self.off.sum())


def tcl_track_classes(states: Sequence[CoarseTclState], load: float, target: float) -> list[TrackDecision]:
    """Greedy tracking over coarse states that differ only in their mean draw.

    Forced switches (tau = 0) in every state go first. The remaining gap in
    W is then closed bin by bin, most imminent first, taking the larger-draw
    states first within a bin. Each state's decision carries the common
    leftover gap as its residual.
    """
    picks = []
    gap = target - load
    for st in states:
        on = np.zeros(st.grid.n_bins, dtype=np.int64)
        off = np.zeros(st.grid.n_bins, dtype=np.int64)
        on[0], off[0] = st.counts[0, 0], st.counts[0, 1]
        gap -= st.G_bar * (on[0] - off[0])
        picks.append((on, off))
    sign, status = (1, 0) if gap > 0 else (-1, 1)
    order = sorted(range(len(states)), key=lambda c: -states[c].G_bar)
    n_bins = max((st.grid.n_bins for st in states), default=0)
    for tau in range(1, n_bins):
        for c in order:
            G = states[c].G_bar
            if G <= 0 or tau >= states[c].grid.n_bins:
                continue
            want = int(np.floor(sign * gap / G + 0.5))
            take = max(0, min(want, int(states[c].counts[tau, status])))
            picks[c][status][tau] += take
            gap -= sign * take * G
    return [TrackDecision(on, off, float(gap)) for on, off in picks]


def tcl_track_step(
    coarse: CoarseTclState, baseline: float, signal: float, G_bar: float | None = None, load: float | None = None
) -> TrackDecision:
    """Switch counts per bin that move the load toward baseline + signal.

    Units in the tau = 0 bins switch regardless. The remaining gap, in units
    of the mean draw, is closed from the most imminent bins of the opposite
    status first. Without ``load`` the current load is taken as G_bar times
    the ON count.
    """
    if G_bar is not None and G_bar != coarse.G_bar:
        coarse = CoarseTclState(coarse.counts, G_bar, coarse.grid)
    if load is None:
        load = coarse.G_bar * coarse.counts[:, 1].sum()
    return tcl_track_classes([coarse], load, baseline + signal)[0]


@dataclass
class TclFleet:
    """Unit-level TCL simulator (heating mode, 1-minute steps).

    Arrays are per unit: power (W), G (degF/min), k (1/min), band limits,
    temperature and switch status. ``power_class`` is the power level a unit
    reports with its deadline; the scheduler keeps one coarse state per class.
    """

    power: np.ndarray
    G: np.ndarray
    k: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    temp: np.ndarray
    b: np.ndarray
    ambient: Callable[[int], float]
    noise_sigma: float = 0.05
    courtesy: int = 1
    grid: CoarseGrid = field(default_factory=CoarseGrid)
    power_class: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        n = self.power.size
        self.temp = np.asarray(self.temp, float).copy()
        self.b = np.asarray(self.b).astype(np.int8)
        if self.power_class is None:
            self.power_class = np.zeros(n, dtype=np.int64)
        self.classes = np.unique(self.power_class)
        self.last_switch = np.full(n, -(10**6), dtype=np.int64)
        self.switches = 0
        self.autonomous_switches = 0
        # minutes outside the band while the heater still pushes outward
        self._push_run = np.zeros(n, dtype=np.int64)
        self.max_push_run = 0
        self._out_run = np.zeros(n, dtype=np.int64)
        self.max_out_run = 0
        self.max_excursion = 0.0

    @property
    def n(self) -> int:
        return self.power.size

    @property
    def load(self) -> float:
        return float(self.power @ self.b)

    def inside(self) -> np.ndarray:
        return (self.temp >= self.lower) & (self.temp <= self.upper)

    def pushing_out(self) -> np.ndarray:
        return ((self.b == 1) & (self.temp > self.upper)) | ((self.b == 0) & (self.temp < self.lower))

    def deadlines(self) -> np.ndarray:
        alpha = self.k * self.ambient(self.t)
        return switch_deadlines(self.temp, self.b, self.G, self.k, self.lower, self.upper, alpha)

    def reporting(self) -> np.ndarray:
        """Past the courtesy period and inside the band (outside it the thermostat rules)."""
        return (self.t - self.last_switch >= self.courtesy) & self.inside()

    def _switch(self, idx, value: int):
        self.b[idx] = value
        self.last_switch[idx] = self.t
        self.switches += len(idx)

    def advance(self, rng: np.random.Generator) -> None:
        """Thermal step, then thermostat override for units that left the band."""
        amb = self.ambient(self.t)
        noise = rng.normal(0.0, self.noise_sigma, self.n) if self.noise_sigma > 0 else 0.0
        self.temp = (1 - self.k) * self.temp + self.k * amb + noise + self.b * self.G
        self.t += 1
        push = self.pushing_out()
        self._push_run = np.where(push, self._push_run + 1, 0)
        self.max_push_run = max(self.max_push_run, int(self._push_run.max(initial=0)))
        self._out_run = np.where(self.inside(), 0, self._out_run + 1)
        self.max_out_run = max(self.max_out_run, int(self._out_run.max(initial=0)))
        gap = np.maximum(self.temp - self.upper, self.lower - self.temp)
        self.max_excursion = max(self.max_excursion, float(gap.max(initial=0.0)))
        hot = np.nonzero(push & (self.b == 1))[0]
        cold = np.nonzero(push & (self.b == 0))[0]
        self.autonomous_switches += hot.size + cold.size
        self._switch(hot, 0)
        self._switch(cold, 1)

    def coarse(self) -> list[CoarseTclState]:
        tau, rep = self.deadlines(), self.reporting()
        return [coarse_cluster(tau, self.b, self.power_class == c, rep, self.power, self.t, self.grid) for c in self.classes]

    def control(self, target: float, rng: np.random.Generator) -> TrackDecision:
        """One scheduling round toward ``target`` (W).

        Units report (class, tau bin, status) and draw a fresh nonce. The
        broadcast per bin is a nonce threshold chosen so that exactly the
        commanded number of units in that bin switch.
        """
        tau = self.deadlines()
        rep = self.reporting()
        masks = [self.power_class == c for c in self.classes]
        states = [coarse_cluster(tau, self.b, m, rep, self.power, self.t, self.grid) for m in masks]
        decisions = tcl_track_classes(states, self.load, target)
        bins = self.grid.quantize(tau)
        nonce = rng.random(self.n)
        status = self.b.copy()  # commands address the reported status, not the updated one
        for mask, dec in zip(masks, decisions):
            for old, picks in ((0, dec.on), (1, dec.off)):
                for j in np.nonzero(picks)[0]:
                    members = np.nonzero(mask & rep & (status == old) & (bins == j))[0]
                    chosen = members[np.argsort(nonce[members], kind="stable")[: picks[j]]]
                    self._switch(chosen, 1 - old)
        on = np.sum([d.on for d in decisions], axis=0)
        off = np.sum([d.off for d in decisions], axis=0)
        return TrackDecision(on, off, decisions[0].residual)


def run_tracking(fleet: TclFleet, targets, seed=0, record_temps: np.ndarray | None = None) -> dict:
    """Step the fleet for len(targets) minutes; None targets mean autonomous only.

    Thermal noise and control nonces use separate streams, so a controlled
    run and an autonomous run with the same seed see identical weather.
    Returns per-minute loads after control, the decisions' residuals, switch
    events per minute and, for units listed in ``record_temps``, temperatures.
    """
    phys_ss, ctrl_ss = np.random.SeedSequence(seed).spawn(2)
    rng, ctrl = np.random.default_rng(phys_ss), np.random.default_rng(ctrl_ss)
    T = len(targets)
    loads = np.zeros(T)
    residual = np.zeros(T)
    events = np.zeros(T, dtype=np.int64)
    temps = None if record_temps is None else np.zeros((T, len(record_temps)))
    for t in range(T):
        before = fleet.switches
        fleet.advance(rng)
        if targets[t] is not None and np.isfinite(targets[t]):
            residual[t] = fleet.control(float(targets[t]), ctrl).residual
        loads[t] = fleet.load
        events[t] = fleet.switches - before
        if temps is not None:
            temps[t] = fleet.temp[record_temps]
    return {
        "load": loads,
        "residual": residual,
        "events": events,
        "temps": temps,
        "max_push_run": fleet.max_push_run,
        "max_out_run": fleet.max_out_run,
        "max_excursion": fleet.max_excursion,
    }
