"""Forward purchase planning for non-interruptible deferrable loads.

Two population models share one LP skeleton:

* clustered: cumulative activations d^q(t) per cluster with causality,
  start deadlines and the exact pulse shape of each cluster;
* tank: every appliance treated as an ideal battery with only an energy
  requirement and a completion deadline.

Both are solved as sample-average LPs over arrival scenarios. Integrality
is relaxed; clustered schedules are rounded afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..arrivals import ScenarioSet
from ..categories.nid import NidClusterParams, check_nid_trajectory, nid_load
from ..lp import LinearProgram, solve
from .prices import PriceCurve, forward_cost, realtime_cost

log = logging.getLogger(__name__)

PENALTY_FACTOR = 10.0


@dataclass
class PlanResult:
    B: np.ndarray
    model: str
    lp_cost: float  # LP objective (relaxed), forward + mean real-time (+ penalties)
    forward_cost: float
    expected_cost: float  # forward + mean real-time cost of rounded schedules
    scenario_costs: np.ndarray  # real-time cost per scenario after rounding
    schedules: np.ndarray  # clustered: cumulative d (K, Q, T); tank: energy per class (K, C, T)
    loads: np.ndarray  # (K, T) planned load per scenario after rounding
    deadline_slack: float = 0.0
    backend: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def relaxation_gap(self) -> float:
        return self.expected_cost - self.lp_cost

    @property
    def total_variation(self) -> float:
        return float(np.abs(np.diff(self.B)).sum())


class _Cols:
    """Column allocator for block-structured LPs."""

    def __init__(self):
        self.n = 0
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.c: list[np.ndarray] = []

    def add(self, shape, lo, hi, cost) -> np.ndarray:
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        self.lo.append(np.broadcast_to(np.asarray(lo, float), shape).ravel())
        self.hi.append(np.broadcast_to(np.asarray(hi, float), shape).ravel())
        self.c.append(np.broadcast_to(np.asarray(cost, float), shape).ravel())
        return idx

    def arrays(self):
        return np.concatenate(self.c), np.concatenate(self.lo), np.concatenate(self.hi)


class _Rows:
    def __init__(self):
        self.r: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.n = 0

    def add_many(self, rows, cols, vals, rhs):
        self.r.append(np.asarray(rows) + self.n)
        self.c.append(np.asarray(cols))
        self.v.append(np.asarray(vals, float))
        self.rhs.extend(np.asarray(rhs, float).ravel())
        self.n += len(np.asarray(rhs).ravel())

    def matrix(self, n_cols):
        if self.n == 0:
            return None, None
        A = sp.csr_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=(self.n, n_cols)
        )
        return A, np.array(self.rhs)


def _lag(a: np.ndarray, lag: int) -> np.ndarray:
    """a(t - lag) along the last axis, zero before time 0."""
    out = np.zeros_like(a, dtype=float)
    if lag < a.shape[-1]:
        out[..., lag:] = a[..., : a.shape[-1] - lag]
    return out


def pulse_load(increments: np.ndarray, pulses: Sequence[Sequence[float]], T: int) -> np.ndarray:
    """Load over T steps from activation increments (Q, t_len)."""
    load = np.zeros(T)
    for q, p in enumerate(pulses):
        full = np.convolve(increments[q], np.asarray(p, float))
        n = min(T, full.size)
        load[:n] += full[:n]
    return load


@dataclass
class NidLp:
    lp: LinearProgram
    d_idx: np.ndarray  # (K, Q, n)
    u_idx: np.ndarray  # (K, n)
    w_idx: np.ndarray
    s_idx: np.ndarray | None
    B_idx: np.ndarray | None
    t0: int
    t_end: int


def build_nid_lp(
    arrivals: Sequence[np.ndarray],
    clusters: Sequence[NidClusterParams],
    prices: PriceCurve,
    base: Sequence[np.ndarray] | np.ndarray | None = None,
    *,
    B: np.ndarray | None = None,
    t0: int = 0,
    t_end: int | None = None,
    d_prefix: Sequence[np.ndarray] | None = None,
    penalty: float | None = None,
) -> NidLp:
    """Assemble the sample-average scheduling LP over steps [t0, t_end).

    ``arrivals`` holds one cumulative (Q, T) array per scenario. With ``B``
    given the forward purchase is fixed (real-time use); otherwise it is a
    decision variable. ``d_prefix`` are committed cumulative activations for
    steps before t0, one (Q, t0) array per scenario. ``penalty`` None means
    hard start deadlines; a number makes them soft at that price per unit.
    """
    K = len(arrivals)
    Q = len(clusters)
    T = prices.n_steps
    t_end = T if t_end is None else min(t_end, T)
    n = t_end - t0
    if n <= 0:
        raise ValueError("empty scheduling window")
    steps = np.arange(t0, t_end)
    hour = prices.hour_of_step()
    if base is None:
        base = np.zeros(T)
    base = np.asarray(base, float)
    bases = np.broadcast_to(base, (K, T)) if base.ndim == 1 else base
    pulses = [np.asarray(c.pulse, float) for c in clusters]
    chi = [int(c.chi) for c in clusters]

    cols = _Cols()
    rows_ub, rows_eq = _Rows(), _Rows()
    d_idx = np.zeros((K, Q, n), dtype=np.int64)
    u_idx = np.zeros((K, n), dtype=np.int64)
    w_idx = np.zeros((K, n), dtype=np.int64)
    s_idx = np.zeros((K, Q, n), dtype=np.int64) if penalty is not None else None
    balance_rhs = np.zeros((K, n))
    for k in range(K):
        a = np.asarray(arrivals[k], float)
        if a.shape != (Q, T):
            raise ValueError(f"scenario {k}: arrivals shape {a.shape}, expected {(Q, T)}")
        prefix = np.zeros((Q, t0)) if d_prefix is None else np.asarray(d_prefix[k], float)
        dprev = prefix[:, -1] if t0 > 0 else np.zeros(Q)
        due = np.stack([_lag(a[q], chi[q]) for q in range(Q)])[:, t0:t_end]
        hi = a[:, t0:t_end]
        lo = np.broadcast_to(dprev[:, None], (Q, n)).copy()
        if penalty is None:
            lo = np.maximum(lo, due)
        if (lo > hi + 1e-9).any():
            q, j = map(int, np.argwhere(lo > hi + 1e-9)[0])
            raise ValueError(f"scenario {k}: cluster {q} cannot meet bounds at step {t0 + j}")
        d_idx[k] = cols.add((Q, n), lo, hi, 0.0)
        u_idx[k] = cols.add((n,), 0.0, np.inf, prices.up[steps] / K)
        w_idx[k] = cols.add((n,), 0.0, np.inf, -prices.dn[steps] / K)
        if penalty is not None:
            s_idx[k] = cols.add((Q, n), 0.0, np.inf, penalty / K)
            # d(t) + s(t) >= a(t - chi)
            need = due > lo + 1e-12
            r = np.arange(int(need.sum()))
            rows_ub.add_many(
                np.concatenate([r, r]),
                np.concatenate([d_idx[k][need], s_idx[k][need]]),
                np.full(2 * r.size, -1.0),
                -due[need],
            )
        # monotone: d(t-1) - d(t) <= 0
        if n > 1:
            prev, nxt = d_idx[k][:, :-1].ravel(), d_idx[k][:, 1:].ravel()
            r = np.arange(prev.size)
            rows_ub.add_many(
                np.concatenate([r, r]),
                np.concatenate([prev, nxt]),
                np.concatenate([np.ones(r.size), -np.ones(r.size)]),
                np.zeros(r.size),
            )
        # carried-in load of starts committed before t0
        fixed = np.zeros(T)
        if t0 > 0:
            inc = np.diff(np.concatenate([np.zeros((Q, 1)), prefix], axis=1), axis=1)
            fixed = pulse_load(inc, pulses, T)
        rhs = -bases[k][steps] - fixed[steps]
        for q in range(Q):
            p = pulses[q]
            tail = np.zeros(n)
            m = min(n, p.size)
            tail[:m] = p[:m]
            rhs += tail * dprev[q]
        balance_rhs[k] = rhs

    B_idx = None
    if B is None:
        B_idx = cols.add((prices.H,), 0.0, np.inf, prices.T * prices.forward)

    # balance rows: sum_s c(t-s) d(s) - u + w - B(h(t)) = rhs
    for k in range(K):
        r_list, c_list, v_list = [], [], []
        for q in range(Q):
            p = pulses[q]
            coef = np.concatenate([p, [0.0]]) - np.concatenate([[0.0], p])  # c(j) for j=0..len
            for j, cj in enumerate(coef):
                if cj == 0.0 or j >= n:
                    continue
                ts = np.arange(j, n)  # row index t - t0, column s = t - j
                r_list.append(ts)
                c_list.append(d_idx[k, q, ts - j])
                v_list.append(np.full(ts.size, cj))
        ts = np.arange(n)
        r_list += [ts, ts]
        c_list += [u_idx[k], w_idx[k]]
        v_list += [-np.ones(n), np.ones(n)]
        rhs = balance_rhs[k].copy()
        if B_idx is not None:
            r_list.append(ts)
            c_list.append(B_idx[hour[steps]])
            v_list.append(-np.ones(n))
        else:
            rhs = rhs + np.asarray(B, float)[hour[steps]]
        rows_eq.add_many(np.concatenate(r_list), np.concatenate(c_list), np.concatenate(v_list), rhs)

    c, lo, hi = cols.arrays()
    A_ub, b_ub = rows_ub.matrix(cols.n)
    A_eq, b_eq = rows_eq.matrix(cols.n)
    lp = LinearProgram(c, A_ub, b_ub, A_eq, b_eq, lo, hi)
    return NidLp(lp, d_idx, u_idx, w_idx, s_idx, B_idx, t0, t_end)


def round_cumulative(d: np.ndarray, a: np.ndarray, chi: Sequence[int], dprev=None) -> np.ndarray:
    """Round cumulative activations to integers, clamped into [a(t-chi), a(t)].

    Rounding the running total (instead of each increment) hands the
    fractional remainders out one unit at a time, in order, so the counts
    stay nondecreasing and never drift from the relaxed schedule by more
    than half a unit.
    """
    d = np.asarray(d, float)
    a = np.asarray(a, float)
    out = np.floor(d + 0.5)
    for q in range(d.shape[0]):
        lo = _lag(a[q], int(chi[q]))
        out[q] = np.clip(out[q], lo, a[q])
        floor = 0.0 if dprev is None else float(dprev[q])
        out[q] = np.maximum.accumulate(np.maximum(out[q], floor))
        out[q] = np.minimum(out[q], a[q])
    return out


def _check_prices(prices: PriceCurve):
    if (prices.up < np.repeat(prices.forward, prices.T)).any() or (
        prices.dn > np.repeat(prices.forward, prices.T)
    ).any():
        log.warning("real-time prices do not bracket forward prices; the LP may trade the spread")


def plan_forward_clustered(
    scenarios: ScenarioSet,
    prices: PriceCurve,
    clusters: Sequence[NidClusterParams],
    base: np.ndarray | None = None,
    *,
    soft_deadlines: bool = True,
    backend: str = "auto",
) -> PlanResult:
    """Sample-average forward purchase under the clustered NID model."""
    _check_prices(prices)
    T = prices.n_steps
    arrivals = [tr.per_cluster().astype(float) for tr in scenarios]
    penalty = PENALTY_FACTOR * float(prices.up.max()) if soft_deadlines else None
    model = build_nid_lp(arrivals, clusters, prices, base, penalty=penalty)
    res = solve(model.lp, backend)
    x = res.x
    B = np.maximum(x[model.B_idx], 0.0)
    slack = float(x[model.s_idx].sum()) / len(arrivals) if model.s_idx is not None else 0.0
    if slack > 1e-6:
        log.warning("clustered plan relies on %.3g units of deadline slack per scenario", slack)
    base_arr = np.zeros(T) if base is None else np.asarray(base, float)
    chi = [c.chi for c in clusters]
    pulses = [c.pulse for c in clusters]
    K, Q = len(arrivals), len(clusters)
    schedules = np.zeros((K, Q, T))
    loads = np.zeros((K, T))
    costs = np.zeros(K)
    for k, a in enumerate(arrivals):
        d = round_cumulative(x[model.d_idx[k]], a, chi)
        check_nid_trajectory(d, a, chi)
        schedules[k] = d
        inc = np.diff(np.concatenate([np.zeros((Q, 1)), d], axis=1), axis=1)
        loads[k] = base_arr + nid_load(inc, pulses)
        costs[k] = realtime_cost(loads[k], B, prices)
    fc = forward_cost(B, prices)
    return PlanResult(
        B=B,
        model="clustered",
        lp_cost=res.objective,
        forward_cost=fc,
        expected_cost=fc + float(costs.mean()),
        scenario_costs=costs,
        schedules=schedules,
        loads=loads,
        deadline_slack=slack,
        backend=res.backend,
    )


def tank_requirements(arrival_increments: np.ndarray, clusters: Sequence[NidClusterParams], T: int):
    """Energy requirement per completion-deadline class.

    An appliance of cluster q arriving at s must be done by the end of step
    c = s + chi + len - 1 (clipped to the horizon). Returns R[c, t], the
    cumulative requirement of class c that has arrived by t.
    """
    inc = np.zeros((T, T))
    for q, cl in enumerate(clusters):
        lag = int(cl.chi) + cl.length - 1
        for s in np.nonzero(arrival_increments[q])[0]:
            c = min(s + lag, T - 1)
            inc[c, s] += cl.energy * arrival_increments[q, s]
    return np.cumsum(inc, axis=1)


def build_tank_lp(requirements: Sequence[np.ndarray], prices: PriceCurve, base=None):
    """Ideal-battery-with-deadline LP; requirements are R[c, t] per scenario."""
    K = len(requirements)
    T = prices.n_steps
    hour = prices.hour_of_step()
    base = np.zeros(T) if base is None else np.asarray(base, float)
    cols = _Cols()
    rows_ub, rows_eq = _Rows(), _Rows()
    e_idx, u_idx, w_idx = [], [], []
    for k, R in enumerate(requirements):
        classes = [c for c in range(T) if R[c, -1] > 0]
        idx = {}
        for c in classes:
            first = int(np.argmax(R[c] > 0))
            idx[c] = (first, cols.add((c - first + 1,), 0.0, np.inf, 0.0))
        e_idx.append(idx)
        u_idx.append(cols.add((T,), 0.0, np.inf, prices.up / K))
        w_idx.append(cols.add((T,), 0.0, np.inf, -prices.dn / K))
    B_idx = cols.add((prices.H,), 0.0, np.inf, prices.T * prices.forward)
    for k, R in enumerate(requirements):
        bal_r, bal_c, bal_v = [], [], []
        for c, (first, ids) in e_idx[k].items():
            m = ids.size
            # cumulative energy of class c by step first+j <= R[c, first+j], for j < m-1
            if m > 1:
                tri_r, tri_c = np.tril_indices(m - 1)
                rows_ub.add_many(tri_r, ids[tri_c], np.ones(tri_r.size), R[c, first : first + m - 1])
            rows_eq.add_many(np.zeros(m, dtype=int), ids, np.ones(m), [R[c, c]])
            bal_r.append(np.arange(first, c + 1))
            bal_c.append(ids)
            bal_v.append(np.ones(m))
        ts = np.arange(T)
        bal_r += [ts, ts, ts]
        bal_c += [u_idx[k], w_idx[k], B_idx[hour]]
        bal_v += [-np.ones(T), np.ones(T), -np.ones(T)]
        rows_eq.add_many(np.concatenate(bal_r), np.concatenate(bal_c), np.concatenate(bal_v), -base)
    c, lo, hi = cols.arrays()
    A_ub, b_ub = rows_ub.matrix(cols.n)
    A_eq, b_eq = rows_eq.matrix(cols.n)
    return LinearProgram(c, A_ub, b_ub, A_eq, b_eq, lo, hi), e_idx, B_idx


def plan_forward_tank(
    scenarios: ScenarioSet,
    prices: PriceCurve,
    clusters: Sequence[NidClusterParams],
    base: np.ndarray | None = None,
    *,
    backend: str = "auto",
) -> PlanResult:
    """Sample-average forward purchase treating every appliance as an ideal battery."""
    _check_prices(prices)
    T = prices.n_steps
    reqs = [tank_requirements(tr.increments.sum(axis=1), clusters, T) for tr in scenarios]
    lp, e_idx, B_idx = build_tank_lp(reqs, prices, base)
    res = solve(lp, backend)
    B = np.maximum(res.x[B_idx], 0.0)
    base_arr = np.zeros(T) if base is None else np.asarray(base, float)
    K = len(reqs)
    energy = np.zeros((K, T, T))
    loads = np.zeros((K, T))
    costs = np.zeros(K)
    for k in range(K):
        for c, (first, ids) in e_idx[k].items():
            energy[k, c, first : c + 1] = res.x[ids]
        loads[k] = base_arr + energy[k].sum(axis=0)
        costs[k] = realtime_cost(loads[k], B, prices)
    fc = forward_cost(B, prices)
    return PlanResult(
        B=B,
        model="tank",
        lp_cost=res.objective,
        forward_cost=fc,
        expected_cost=fc + float(costs.mean()),
        scenario_costs=costs,
        schedules=energy,
        loads=loads,
        backend=res.backend,
    )
