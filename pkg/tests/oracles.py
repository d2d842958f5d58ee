"""Reference implementations the tests compare against.

Each oracle works per appliance or by brute force and shares no code with
the package beyond plain data containers (the NID instance generator builds
package parameter objects so tests can hand them straight to the planner).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from loadplasticity.categories.nid import NidClusterParams


# --- battery populations, one appliance at a time -----------------------------------------


@dataclass
class BatteryTrajectory:
    E: int
    arrival: np.ndarray  # (N,)
    x: np.ndarray  # (N, T + 1) state per step, -1 before arrival

    @property
    def T(self) -> int:
        return self.x.shape[1] - 1

    def occupancy(self) -> np.ndarray:
        """(T + 1, E + 1) counts of present appliances per state."""
        out = np.zeros((self.T + 1, self.E + 1), dtype=np.int64)
        for t in range(self.T + 1):
            for xi in self.x[:, t]:
                if xi >= 0:
                    out[t, xi] += 1
        return out

    def arrivals(self) -> np.ndarray:
        """(T + 1, E + 1) cumulative arrivals per initial state."""
        out = np.zeros((self.T + 1, self.E + 1), dtype=np.int64)
        for i, ti in enumerate(self.arrival):
            out[ti:, self.x[i, ti]] += 1
        return out

    def switch_counts(self, t: int) -> np.ndarray:
        """(E + 1, E + 1) moves of present appliances from t to t + 1."""
        m = np.zeros((self.E + 1, self.E + 1), dtype=np.int64)
        for i in range(len(self.arrival)):
            a, b = self.x[i, t], self.x[i, t + 1]
            if a >= 0 and a != b:
                m[a, b] += 1
        return m

    def load(self, t: int) -> int:
        """sum_i dx_i(t) a_i(t) over appliances present at t."""
        return int(sum(self.x[i, t + 1] - self.x[i, t] for i in range(len(self.arrival)) if self.x[i, t] >= 0))


def random_battery_trajectory(rng, n: int, T: int, E: int, moves) -> BatteryTrajectory:
    """Appliances arrive at random steps and then hop among ``moves(x)`` states."""
    arrival = rng.integers(0, T + 1, size=n)
    x = np.full((n, T + 1), -1, dtype=np.int64)
    for i in range(n):
        x[i, arrival[i]] = rng.integers(0, E + 1)
        for t in range(arrival[i], T):
            options = sorted(moves(int(x[i, t])))
            x[i, t + 1] = options[rng.integers(len(options))]
    return BatteryTrajectory(E, arrival, x)


# --- NID ----------------------------------------------------------------------------------


def shifted_pulses(starts, pulse, T: int) -> np.ndarray:
    """Load from individual start times: sum_i pulse(t - s_i)."""
    out = np.zeros(T)
    for s in starts:
        for j, p in enumerate(pulse):
            if s + j < T:
                out[s + j] += p
    return out


def best_nid_schedule(arrival, chi, pulse, price) -> tuple[float, tuple]:
    """Cheapest start times when every step's energy is bought at ``price``.

    Each appliance starts within [arrival, arrival + chi] (clipped to the
    horizon). Returns (cost, starts).
    """
    T = len(price)
    windows = [range(a, min(a + c, T - 1) + 1) for a, c in zip(arrival, chi)]
    best = (np.inf, ())
    for starts in itertools.product(*windows):
        load = np.zeros(T)
        for s, p in zip(starts, pulse):
            load += shifted_pulses([s], p, T)
        cost = float(np.dot(price, load))
        if cost < best[0]:
            best = (cost, starts)
    return best


def random_nid_instance(rng, max_n=6, max_T=8, finish_inside=False):
    """Small NID instance with two price levels: (T, clusters, price, cluster_of, arrival)."""
    T = int(rng.integers(3, max_T + 1))
    Q = int(rng.integers(1, 3))
    clusters = [
        NidClusterParams(tuple(float(v) for v in rng.integers(1, 3, size=rng.integers(1, 3))), int(rng.integers(0, 3)))
        for _ in range(Q)
    ]
    levels = np.sort(rng.choice(np.arange(1, 6), 2, replace=False)).astype(float)
    price = levels[rng.integers(0, 2, T)]
    n = int(rng.integers(1, max_n + 1))
    cluster_of = rng.integers(0, Q, n)
    # every start window ends inside the horizon
    arrival = np.array([rng.integers(0, T - clusters[q].chi) for q in cluster_of])
    if finish_inside:
        # pulses end before the horizon, so truncation cannot hide energy
        last = np.array([T - clusters[q].chi - clusters[q].length for q in cluster_of])
        arrival = np.minimum(arrival, np.maximum(last, 0))
        T = max(T, int(max(a + clusters[q].chi + clusters[q].length for a, q in zip(arrival, cluster_of))))
        price = np.resize(price, T)
    return T, clusters, price, cluster_of, arrival


def best_tank_cost(arrival, chi, pulse, price) -> float:
    """Ideal-battery relaxation: each appliance buys its energy at the cheapest step before it must finish."""
    T = len(price)
    total = 0.0
    for a, c, p in zip(arrival, chi, pulse):
        done = min(a + c + len(p) - 1, T - 1)
        total += sum(p) * min(price[a : done + 1])
    return total


def best_realtime_schedule(arrival, chi, pulse, B, up, dn, base=None) -> float:
    """Minimum real-time cost over all start-time combinations."""
    T = len(B)
    base = np.zeros(T) if base is None else np.asarray(base, float)
    windows = [range(a, min(a + c, T - 1) + 1) for a, c in zip(arrival, chi)]
    best = np.inf
    for starts in itertools.product(*windows):
        load = base.copy()
        for s, p in zip(starts, pulse):
            load += shifted_pulses([s], p, T)
        dev = load - B
        best = min(best, float(np.dot(up, np.maximum(dev, 0)) + np.dot(dn, np.minimum(dev, 0))))
    return best


def edf_reference(waiting, deadlines, first_power, load, target):
    """Start appliances by (deadline, cluster, arrival); overdue ones always, others while it helps.

    ``waiting`` lists (cluster, arrival) per appliance.
    """
    order = sorted(range(len(waiting)), key=lambda i: (deadlines[i], waiting[i][0], waiting[i][1]))
    started = []
    for i in order:
        q = waiting[i][0]
        if deadlines[i] <= 0:
            started.append(i)
            load += first_power[q]
        elif abs(load + first_power[q] - target) < abs(load - target):
            started.append(i)
            load += first_power[q]
        else:
            break
    return started


# --- thermostat ---------------------------------------------------------------------------


def thermostat_times(G, k, lo, hi, ambient, h: float = 0.01) -> tuple[float, float]:
    """Heating and cooling times of dx/dt = -k (x - ambient) + b G by explicit Euler."""
    x, t = lo, 0.0
    while x < hi:
        x += h * (-k * (x - ambient) + G)
        t += h
        if t > 1e5:
            raise RuntimeError("heater never reaches the upper limit")
    t_on = t
    x, t = hi, 0.0
    while x > lo:
        x += h * (-k * (x - ambient))
        t += h
        if t > 1e5:
            raise RuntimeError("unit never cools to the lower limit")
    return t_on, t


def time_to_boundary(x, b, G, k, target, ambient, h: float = 0.01) -> float:
    t = 0.0
    up = b == 1
    while (x < target) if up else (x > target):
        x += h * (-k * (x - ambient) + b * G)
        t += h
        if t > 1e5:
            raise RuntimeError("boundary not reached")
    return t


# --- packets ------------------------------------------------------------------------------


def reference_histogram(packets) -> dict:
    out: dict = {}
    for p in packets:
        key = (p.slot, p.category, p.q, p.x)
        out[key] = out.get(key, 0) + 1
    return out


def throughput_loop(p, slot_seconds, alpha) -> float:
    total = 0.0
    for i in range(len(p)):
        prod = 1.0
        for j in range(len(p)):
            if j != i:
                prod *= 1.0 - alpha * p[j]
        total += p[i] * prod
    return total / slot_seconds
