"""Quantized state-bin population machinery.

Appliances are bundled into clusters that share a quantized constraint tuple.
Inside a cluster only occupancy counts per discrete state are tracked, so the
population model never needs appliance identities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np


class Category(str, enum.Enum):
    IDEAL_BATTERY = "ideal_battery"
    RIC = "ric"
    IS = "is"
    NID = "nid"
    TCL = "tcl"


BATTERY_LIKE = (Category.IDEAL_BATTERY, Category.RIC, Category.IS)

# components quantized downwards (never promise more delay than allowed)
ROUND_DOWN_COMPONENTS = frozenset({"chi", "slack", "deadline"})


class OutOfRangeError(ValueError):
    """Record parameters fall outside the cluster quantization grid."""


class InfeasibleSwitchError(ValueError):
    """A switch matrix moves more appliances than a state holds."""


@dataclass(frozen=True)
class QuantizationConfig:
    delta_t: float = 60.0  # minutes
    delta_x: float = 1.0

    def __post_init__(self):
        if not self.delta_t > 0 or not self.delta_x > 0:
            raise ValueError("quantization steps must be positive")


@dataclass(frozen=True)
class ApplianceRecord:
    """One appliance as seen by the simulator (never by planner or dispatch)."""

    id: int
    category: Category
    arrival_time: int
    kappa: Mapping[str, float] = field(default_factory=dict)
    theta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.arrival_time < 0:
            raise ValueError("arrival_time must be >= 0")


@dataclass(frozen=True)
class ClusterSpec:
    cluster_id: int
    category: Category
    theta: Mapping[str, object]
    states: tuple

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError(f"cluster {self.cluster_id}: empty state space")

    @classmethod
    def battery(cls, cluster_id: int, category: Category, **theta) -> "ClusterSpec":
        E = int(theta["E"])
        return cls(cluster_id, Category(category), dict(theta), tuple(range(E + 1)))

    @property
    def n_states(self) -> int:
        return len(self.states)


def _component_grid(clusters: Sequence[ClusterSpec], name: str):
    values = sorted({c.theta[name] for c in clusters})
    return values


def _quantize_component(name: str, value, grid: list, step: float | None):
    if not isinstance(value, (int, float, np.integer, np.floating)):
        if value in grid:
            return value
        raise OutOfRangeError(f"{name}={value!r} matches no cluster")
    levels = np.asarray(grid, dtype=float)
    if step is None:
        step = float(np.min(np.diff(levels))) if len(levels) > 1 else 0.0
    tol = 1e-9 * max(1.0, abs(float(value)))
    if name in ROUND_DOWN_COMPONENTS:
        if value < levels[0] - tol or (step > 0 and value >= levels[-1] + step):
            raise OutOfRangeError(f"{name}={value} outside grid [{levels[0]}, {levels[-1]}]")
        if step == 0 and abs(value - levels[0]) > tol:
            raise OutOfRangeError(f"{name}={value} not on single-level grid {levels[0]}")
        idx = int(np.searchsorted(levels, value + tol, side="right") - 1)
        return grid[idx]
    half = step / 2.0
    if value < levels[0] - half - tol or value > levels[-1] + half + tol:
        raise OutOfRangeError(f"{name}={value} outside grid [{levels[0]}, {levels[-1]}]")
    idx = int(np.argmin(np.abs(levels - value)))
    return grid[idx]


def assign_cluster(
    record: ApplianceRecord,
    clusters: Sequence[ClusterSpec],
    steps: Mapping[str, float] | None = None,
) -> int:
    """Map an appliance to the cluster holding the quantization of its theta.

    Numeric components snap to the nearest grid level except deadlines and
    slacks, which snap down. The grid of each component is read off the
    cluster list; pass ``steps`` for components with a single level.
    """
    candidates = [c for c in clusters if c.category == record.category]
    if not candidates:
        raise OutOfRangeError(f"no clusters for category {record.category}")
    steps = steps or {}
    names = sorted(candidates[0].theta)
    quantized = {}
    for name in names:
        if name not in record.theta:
            raise OutOfRangeError(f"record {record.id} lacks component {name!r}")
        grid = _component_grid(candidates, name)
        quantized[name] = _quantize_component(name, record.theta[name], grid, steps.get(name))
    for c in candidates:
        if all(c.theta[n] == quantized[n] for n in names):
            return c.cluster_id
    raise OutOfRangeError(f"quantized theta {quantized} is not a catalog cluster")


def _int_array(values, n: int) -> np.ndarray:
    arr = np.zeros(n, dtype=np.int64) if values is None else np.asarray(values, dtype=np.int64).copy()
    if arr.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class PopulationState:
    """Occupancy n_x^q(t) plus cumulative arrival and departure counters."""

    t: int
    occupancy: Mapping[int, np.ndarray]
    arrivals: Mapping[int, np.ndarray]
    departures: Mapping[int, np.ndarray]

    @classmethod
    def empty(cls, clusters: Iterable[ClusterSpec], t: int = 0) -> "PopulationState":
        occ, arr, dep = {}, {}, {}
        for c in clusters:
            occ[c.cluster_id] = np.zeros(c.n_states, dtype=np.int64)
            arr[c.cluster_id] = np.zeros(c.n_states, dtype=np.int64)
            dep[c.cluster_id] = np.zeros(c.n_states, dtype=np.int64)
        return cls(t, occ, arr, dep)

    def total(self, q: int) -> int:
        return int(self.occupancy[q].sum())

    def check_conservation(self) -> bool:
        return all(
            self.occupancy[q].sum() == self.arrivals[q].sum() - self.departures[q].sum()
            and (self.occupancy[q] >= 0).all()
            for q in self.occupancy
        )


@dataclass(frozen=True)
class SwitchMatrix:
    """Per-cluster increments of the switch processes, shape (S, S), zero diagonal."""

    increments: Mapping[int, np.ndarray]

    @classmethod
    def zeros(cls, state: PopulationState) -> "SwitchMatrix":
        return cls({q: np.zeros((len(n), len(n)), dtype=np.int64) for q, n in state.occupancy.items()})

    def validate(self, state: PopulationState, neighbors: Mapping[int, Sequence[set]] | None = None) -> None:
        for q, inc in self.increments.items():
            inc = np.asarray(inc)
            n = state.occupancy[q]
            if inc.shape != (len(n), len(n)):
                raise ValueError(f"cluster {q}: switch matrix shape {inc.shape}")
            if (inc < 0).any():
                raise InfeasibleSwitchError(f"cluster {q}: negative switch count")
            if np.diag(inc).any():
                raise InfeasibleSwitchError(f"cluster {q}: d_xx must be zero")
            out = inc.sum(axis=1)
            bad = np.nonzero(out > n)[0]
            if bad.size:
                x = int(bad[0])
                raise InfeasibleSwitchError(
                    f"cluster {q}: {int(out[x])} appliances leave state {x} holding {int(n[x])}"
                )
            if neighbors is not None:
                for x, x2 in zip(*np.nonzero(inc)):
                    if x2 not in neighbors[q][x]:
                        raise InfeasibleSwitchError(f"cluster {q}: move {x}->{x2} outside neighbor set")


def update_occupancy(
    state: PopulationState,
    new_arrivals: Mapping[int, Sequence[int]] | None,
    switches: SwitchMatrix | None,
    departures: Mapping[int, Sequence[int]] | None = None,
) -> PopulationState:
    """Advance occupancy one step.

    n(t+1) = n(t) + da + sum_x' [dd_{x',x} - dd_{x,x'}] - dr
    """
    if switches is not None:
        switches.validate(state)
    occ, arr, dep = {}, {}, {}
    for q, n in state.occupancy.items():
        S = len(n)
        da = _int_array(None if new_arrivals is None else new_arrivals.get(q), S)
        dr = _int_array(None if departures is None else departures.get(q), S)
        if (da < 0).any() or (dr < 0).any():
            raise ValueError(f"cluster {q}: negative arrival/departure increment")
        nxt = n + da - dr
        if switches is not None and q in switches.increments:
            inc = np.asarray(switches.increments[q], dtype=np.int64)
            nxt = nxt + inc.sum(axis=0) - inc.sum(axis=1)
        if (nxt < 0).any():
            x = int(np.nonzero(nxt < 0)[0][0])
            raise InfeasibleSwitchError(f"cluster {q}: occupancy of state {x} would be {int(nxt[x])}")
        occ[q] = nxt
        arr[q] = state.arrivals[q] + da
        dep[q] = state.departures[q] + dr
    return PopulationState(state.t + 1, occ, arr, dep)


def load_from_switches(switches: SwitchMatrix, states: Mapping[int, Sequence[int]] | None = None) -> int:
    """L(t) = sum_q sum_{x,x'} (x' - x) dd^q_{x,x'}(t)."""
    total = 0
    for q, inc in switches.increments.items():
        inc = np.asarray(inc, dtype=np.int64)
        x = np.arange(inc.shape[0]) if states is None else np.asarray(states[q])
        total += int(((x[None, :] - x[:, None]) * inc).sum())
    return total


def lemma1_load(occupancy_history, arrival_history) -> np.ndarray:
    """Load recovered from occupancy and cumulative arrivals alone.

    Both histories have shape (n_times, E+1) (or are dicts of such arrays, one
    per cluster, which are summed). Returns the load for t = 0 .. n_times-2:

        L(t) = sum_x [ sum_{x'>=x} dn_{x'}(t) - (x+1) da_x(t) ]
    """
    if isinstance(occupancy_history, Mapping):
        if set(occupancy_history) != set(arrival_history):
            raise ValueError("occupancy and arrival histories cover different clusters")
        parts = [lemma1_load(occupancy_history[q], arrival_history[q]) for q in occupancy_history]
        return np.sum(parts, axis=0) if parts else np.zeros(0, dtype=np.int64)
    n = np.asarray(occupancy_history, dtype=np.int64)
    a = np.asarray(arrival_history, dtype=np.int64)
    if n.shape != a.shape:
        raise ValueError(f"history shapes differ: {n.shape} vs {a.shape}")
    if n.ndim != 2 or n.shape[0] < 2:
        raise ValueError("histories must cover at least two time steps")
    dn = np.diff(n, axis=0)
    da = np.diff(a, axis=0)
    # sum_x sum_{x'>=x} dn_{x'} == sum_{x'} (x'+1) dn_{x'}
    weights = np.arange(1, n.shape[1] + 1)
    return (dn * weights).sum(axis=1) - (da * weights).sum(axis=1)


# --- snapshot text format: "t q x n" per line, exact integers -------------------------


def iter_snapshot_lines(state: PopulationState) -> Iterator[str]:
    for q in sorted(state.occupancy):
        for x, n in enumerate(state.occupancy[q]):
            yield f"{state.t} {q} {x} {int(n)}"


def write_snapshots(states: Iterable[PopulationState], fh: TextIO) -> None:
    fh.write("# t q x n\n")
    for s in states:
        for line in iter_snapshot_lines(s):
            fh.write(line + "\n")


def read_snapshots(fh: TextIO) -> dict[int, dict[int, np.ndarray]]:
    """Parse snapshot lines into {t: {q: occupancy}}."""
    raw: dict[int, dict[int, dict[int, int]]] = {}
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 integer fields")
        t, q, x, n = (int(p) for p in parts)
        if n < 0:
            raise ValueError(f"line {lineno}: negative count")
        raw.setdefault(t, {}).setdefault(q, {})[x] = n
    out: dict[int, dict[int, np.ndarray]] = {}
    for t, per_q in raw.items():
        out[t] = {}
        for q, xs in per_q.items():
            arr = np.zeros(max(xs) + 1, dtype=np.int64)
            for x, n in xs.items():
                arr[x] = n
            out[t][q] = arr
    return out
