"""Anonymous downlink: broadcast ratios and FIFO thresholds, and their execution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, TextIO

import numpy as np

from ..popmodel import PopulationState, SwitchMatrix


class CommandError(ValueError):
    """A decision asks more of a bin than it holds."""


@dataclass(frozen=True)
class DispatchCommand:
    t: int
    battery: Mapping[int, np.ndarray] = field(default_factory=dict)  # q -> (S, S) kappa, NaN rows for empty bins
    tcl_on: Mapping[int, np.ndarray] = field(default_factory=dict)  # q -> (S,) ON ratio
    nid: Mapping[int, tuple[int, float]] = field(default_factory=dict)  # q -> (tau, kappa)

    def __post_init__(self):
        for q, k in self.battery.items():
            k = np.asarray(k, float)
            finite = k[np.isfinite(k)]
            if ((finite < -1e-12) | (finite > 1 + 1e-12)).any():
                raise CommandError(f"cluster {q}: ratio outside [0, 1]")
            if (np.nansum(k, axis=1) > 1 + 1e-9).any():
                raise CommandError(f"cluster {q}: ratios from one state sum above 1")
        for q, k in self.tcl_on.items():
            finite = np.asarray(k, float)[np.isfinite(k)]
            if ((finite < -1e-12) | (finite > 1 + 1e-12)).any():
                raise CommandError(f"cluster {q}: ON ratio outside [0, 1]")
        for q, (_, kap) in self.nid.items():
            if not -1e-12 <= kap <= 1 + 1e-12:
                raise CommandError(f"cluster {q}: boundary ratio outside [0, 1]")

    def to_json(self) -> str:
        enc = lambda m: {str(q): np.where(np.isfinite(v), v, None).tolist() for q, v in m.items()}
        return json.dumps(
            {
                "t": self.t,
                "battery": enc(self.battery),
                "tcl_on": enc(self.tcl_on),
                "nid": {str(q): [int(tau), float(k)] for q, (tau, k) in self.nid.items()},
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "DispatchCommand":
        raw = json.loads(line)
        dec = lambda m: {int(q): _nan_array(rows) for q, rows in m.items()}
        return cls(
            raw["t"],
            dec(raw["battery"]),
            dec(raw["tcl_on"]),
            {int(q): (int(v[0]), float(v[1])) for q, v in raw["nid"].items()},
        )


def _nan_array(rows) -> np.ndarray:
    return np.array(json.loads(json.dumps(rows).replace("null", "NaN")), dtype=float)


def nid_threshold(arrivals, d: float) -> tuple[int, float]:
    """FIFO threshold tau = min{t' : a(t') >= d} and the boundary ratio.

    ``arrivals`` is the cumulative arrival history a(0..t). The boundary
    ratio kappa = (a(tau) - d) / da(tau) is the share of the cohort arriving
    at tau that is held back; everyone arriving earlier has started.
    """
    a = np.asarray(arrivals, dtype=float)
    if d > a[-1] + 1e-9:
        raise CommandError(f"{d:g} activations exceed {a[-1]:g} arrivals")
    if d <= 0:
        return 0, 1.0
    tau = int(np.argmax(a >= d - 1e-9))
    cohort = a[tau] - (a[tau - 1] if tau > 0 else 0.0)
    kappa = (a[tau] - d) / cohort if cohort > 0 else 0.0
    return tau, float(kappa)


def make_downlink(
    t: int,
    *,
    switches: SwitchMatrix | None = None,
    state: PopulationState | None = None,
    tcl_on: Mapping[int, np.ndarray] | None = None,
    tcl_occupancy: Mapping[int, np.ndarray] | None = None,
    nid_arrivals: Mapping[int, np.ndarray] | None = None,
    nid_activations: Mapping[int, float] | None = None,
) -> DispatchCommand:
    """Turn scheduler decisions into broadcast ratios.

    Battery bins: kappa_{x,x'} = dd_{x,x'} / n_x. TCL bins: kappa_x = n_{x,1} / n_x.
    NID clusters: FIFO threshold and boundary ratio from cumulative arrivals and
    the cumulative activation target d(t). Empty bins emit NaN (no ratio).
    """
    battery = {}
    if switches is not None:
        if state is None:
            raise ValueError("battery ratios need the current occupancy")
        for q, inc in switches.increments.items():
            inc = np.asarray(inc, float)
            n = state.occupancy[q].astype(float)
            if (inc.sum(axis=1) > n + 1e-9).any():
                raise CommandError(f"cluster {q}: switches exceed occupancy")
            with np.errstate(divide="ignore", invalid="ignore"):
                battery[q] = np.where(n[:, None] > 0, inc / n[:, None], np.nan)
    tcl = {}
    if tcl_on is not None:
        for q, on in tcl_on.items():
            on = np.asarray(on, float)
            n = np.asarray(tcl_occupancy[q], float)
            if (on > n + 1e-9).any() or (on < 0).any():
                raise CommandError(f"cluster {q}: ON count exceeds occupancy")
            with np.errstate(divide="ignore", invalid="ignore"):
                tcl[q] = np.where(n > 0, on / n, np.nan)
    nid = {}
    if nid_activations is not None:
        for q, d in nid_activations.items():
            nid[q] = nid_threshold(nid_arrivals[q], d)
    return DispatchCommand(t, battery, tcl, nid)


# --- simulated appliance side -----------------------------------------------------------


@dataclass
class BatteryPopulation:
    q: np.ndarray
    x: np.ndarray


@dataclass
class NidPopulation:
    """Per-appliance NID view: cluster, arrival step, start step (-1 waiting), nonce."""

    q: np.ndarray
    arrival: np.ndarray
    deadline: np.ndarray
    start: np.ndarray
    nonce: np.ndarray

    @classmethod
    def from_counts(cls, increments: np.ndarray, chi, rng) -> "NidPopulation":
        Q, T = increments.shape
        q, s = [], []
        for qq in range(Q):
            for tt in range(T):
                c = int(increments[qq, tt])
                q += [qq] * c
                s += [tt] * c
        q = np.asarray(q, dtype=np.int64)
        s = np.asarray(s, dtype=np.int64)
        dl = s + np.asarray(chi, dtype=np.int64)[q] if q.size else s
        return cls(q, s, dl, np.full(q.size, -1, dtype=np.int64), rng.random(q.size))


@dataclass
class TclBinPopulation:
    q: np.ndarray
    x: np.ndarray
    b: np.ndarray


@dataclass
class DownlinkOutcome:
    switches: SwitchMatrix | None = None
    load: float = 0.0
    nid_starts: dict = field(default_factory=dict)
    tcl_on: dict = field(default_factory=dict)


def apply_downlink(
    command: DispatchCommand,
    battery: BatteryPopulation | None = None,
    nid: NidPopulation | None = None,
    tcl: TclBinPopulation | None = None,
    rng_seed=None,
    n_states: Mapping[int, int] | None = None,
) -> DownlinkOutcome:
    """Each appliance acts on the broadcast alone.

    Battery units move x -> x' with probability kappa_{x,x'}. NID units that
    arrived before the threshold start; the boundary cohort starts when its
    per-appliance nonce exceeds kappa, so successive broadcasts stay FIFO.
    Units at their own start deadline start regardless. TCL units turn ON
    with probability kappa_x. Populations are updated in place.
    """
    rng = np.random.default_rng(rng_seed)
    out = DownlinkOutcome()
    if battery is not None and command.battery:
        inc = {}
        for q, kap in command.battery.items():
            S = kap.shape[0] if n_states is None else n_states[q]
            m = np.zeros((S, S), dtype=np.int64)
            members = np.nonzero(battery.q == q)[0]
            for x in range(S):
                idx = members[battery.x[members] == x]
                if idx.size == 0 or not np.isfinite(kap[x]).any():
                    continue
                p = np.nan_to_num(kap[x]).copy()
                p[x] = 0.0
                p[x] = max(0.0, 1.0 - p.sum())
                dest = rng.choice(S, size=idx.size, p=p / p.sum())
                np.add.at(m, (x, dest), 1)
                battery.x[idx] = dest
            np.fill_diagonal(m, 0)
            inc[q] = m
            out.load += float(((np.arange(S)[None, :] - np.arange(S)[:, None]) * m).sum())
        out.switches = SwitchMatrix(inc)
    if nid is not None:
        waiting = nid.start < 0
        for q, (tau, kap) in command.nid.items():
            mine = waiting & (nid.q == q)
            go = mine & ((nid.arrival < tau) | ((nid.arrival == tau) & (nid.nonce >= kap)))
            go |= mine & (nid.deadline <= command.t)
            nid.start[go] = command.t
            out.nid_starts[q] = int(go.sum())
    if tcl is not None:
        for q, kap in command.tcl_on.items():
            mine = tcl.q == q
            k = np.nan_to_num(np.asarray(kap, float))[tcl.x[mine]]
            tcl.b[mine] = (rng.random(int(mine.sum())) < k).astype(tcl.b.dtype)
            out.tcl_on[q] = int(tcl.b[mine].sum())
    return out


def write_command_log(commands, fh: TextIO) -> None:
    for c in commands:
        fh.write(c.to_json() + "\n")


def read_command_log(fh: TextIO) -> list[DispatchCommand]:
    return [DispatchCommand.from_json(line) for line in fh if line.strip()]
