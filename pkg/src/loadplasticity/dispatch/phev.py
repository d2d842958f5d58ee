"""Real-time scheduling of non-interruptible deferrable loads (PHEV charging)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..categories.nid import NidClusterParams, check_nid_trajectory
from ..lp import solve
from ..planner.nid import _lag, build_nid_lp, pulse_load
from ..planner.prices import PriceCurve, realtime_cost
from .commands import DispatchCommand, NidPopulation, apply_downlink, make_downlink

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcConfig:
    """Lookahead in steps (None = to the end of the horizon) and expected arrivals per step (Q, T).

    With ``population`` set, arrivals come from a fixed-size population and
    the expected future arrivals are the remaining population spread over the
    remaining rate shape, i.e. the conditional expectation given the
    arrivals seen so far. ``integral`` keeps start counts integer inside the
    lookahead (a small MILP, with expected arrivals floored), which matters
    only for small populations.
    """

    expected_arrivals: np.ndarray
    lookahead: int | None = None
    resolve_every: int = 1
    backend: str = "auto"
    population: int | None = None
    integral: bool = False

    def future_arrivals(self, t: int, arrived: float) -> np.ndarray:
        lam = np.asarray(self.expected_arrivals, float)[:, t + 1 :]
        if self.population is None:
            return lam
        total = lam.sum()
        if total <= 0:
            return lam
        return lam * max(0.0, self.population - arrived) / total

    def __post_init__(self):
        if self.lookahead is not None and self.lookahead < 1:
            raise ValueError("lookahead must be >= 1")
        if self.resolve_every < 1:
            raise ValueError("resolve_every must be >= 1")


@dataclass
class NidQueue:
    """Causally observed arrivals and committed starts, per cluster and step."""

    clusters: Sequence[NidClusterParams]
    T: int
    arrivals: np.ndarray = None  # increments (Q, T), filled as time advances
    starts: np.ndarray = None

    def __post_init__(self):
        Q = len(self.clusters)
        if self.arrivals is None:
            self.arrivals = np.zeros((Q, self.T), dtype=np.int64)
        if self.starts is None:
            self.starts = np.zeros((Q, self.T), dtype=np.int64)

    @property
    def chi(self) -> list[int]:
        return [int(c.chi) for c in self.clusters]

    def cum_arrivals(self, t: int) -> np.ndarray:
        return np.cumsum(self.arrivals[:, : t + 1], axis=1)

    def cum_starts(self, t: int) -> np.ndarray:
        return np.cumsum(self.starts[:, : t + 1], axis=1)

    def waiting(self, t: int) -> list[tuple[int, int, int]]:
        """Cohorts (q, arrival step, count) not yet started before step t, FIFO per cluster."""
        out = []
        for q in range(len(self.clusters)):
            started = int(self.starts[q, :t].sum())
            for s in range(t + 1):
                c = int(self.arrivals[q, s])
                take = min(c, started)
                started -= take
                if c - take > 0:
                    out.append((q, s, c - take))
        return out

    def load(self) -> np.ndarray:
        return pulse_load(self.starts, [c.pulse for c in self.clusters], self.T)

    def load_at(self, t: int) -> float:
        """Load at t from starts strictly before t."""
        total = 0.0
        for q, c in enumerate(self.clusters):
            p = c.pulse
            for j in range(1, min(len(p), t + 1)):
                total += p[j] * self.starts[q, t - j]
        return total


def mpc_plan(
    queue: NidQueue, B: np.ndarray, prices: PriceCurve, config: MpcConfig, t: int, base: np.ndarray | None = None
) -> np.ndarray:
    """Solve the lookahead LP from step t; returns planned cumulative starts (Q, window)."""
    Q, T = len(queue.clusters), queue.T
    chi = queue.chi
    observed = queue.cum_arrivals(t).astype(float)
    future = np.cumsum(config.future_arrivals(t, observed[:, -1].sum()), axis=1)
    a_hat = np.concatenate([observed, observed[:, -1:] + future], axis=1)
    if config.integral:
        a_hat = np.floor(a_hat + 1e-9)  # integer bounds keep the MILP feasible
    prefix = queue.cum_starts(t - 1).astype(float) if t > 0 else np.zeros((Q, 0))
    dprev = prefix[:, -1] if t > 0 else np.zeros(Q)
    missed = np.array([_lag(observed[q], chi[q] + 1)[-1] for q in range(Q)]) - dprev
    if (missed > 0).any():
        log.warning("step %d: %d appliances past their start deadline; forcing them", t, int(missed.sum()))
    t_end = T if config.lookahead is None else min(T, t + config.lookahead)
    model = build_nid_lp([a_hat], queue.clusters, prices, base, B=B, t0=t, t_end=t_end, d_prefix=[prefix])
    if config.integral:
        model.lp.integrality = np.zeros(model.lp.n_vars, dtype=np.int8)
        model.lp.integrality[model.d_idx[0].ravel()] = 1
    res = solve(model.lp, "highs" if config.integral else config.backend)
    return res.x[model.d_idx[0]]


def commit_starts(queue: NidQueue, planned_d: np.ndarray, t: int) -> np.ndarray:
    """Round a planned cumulative target at t into feasible integer starts."""
    Q = len(queue.clusters)
    observed = queue.cum_arrivals(t)
    dprev = queue.cum_starts(t - 1)[:, -1] if t > 0 else np.zeros(Q)
    due = np.array([_lag(observed[q], queue.chi[q])[-1] for q in range(Q)])
    d_int = np.clip(np.floor(np.asarray(planned_d, float) + 0.5), np.maximum(dprev, due), observed[:, -1])
    return (d_int - dprev).astype(np.int64)


def mpc_schedule_step(
    queue: NidQueue, B: np.ndarray, prices: PriceCurve, config: MpcConfig, t: int, base: np.ndarray | None = None
) -> np.ndarray:
    """Certainty-equivalent lookahead LP; returns integer starts at step t per cluster.

    Arrivals up to t are observed; later ones are replaced by their
    expectation. Only step t is committed. Appliances past their deadline
    are forced on by the rounding bounds.
    """
    return commit_starts(queue, mpc_plan(queue, B, prices, config, t, base)[:, 0], t)


def edf_schedule_step(
    queue: NidQueue, B: np.ndarray, t: int, base: np.ndarray | None = None, steps_per_hour: int = 1
) -> np.ndarray:
    """Earliest-deadline-first starts at step t.

    Overdue cohorts start unconditionally. Then waiting appliances are taken
    in order of (latest start, cluster id, arrival) while each extra start
    moves the step-t load strictly closer to B; ties keep the undershoot.
    """
    Q = len(queue.clusters)
    starts = np.zeros(Q, dtype=np.int64)
    load = (0.0 if base is None else float(base[t])) + queue.load_at(t)
    target = float(B[t // steps_per_hour])
    cohorts = sorted(queue.waiting(t), key=lambda c: (c[1] + queue.clusters[c[0]].chi, c[0], c[1]))
    for q, s, count in cohorts:
        p0 = queue.clusters[q].pulse[0]
        if s + queue.clusters[q].chi <= t:
            starts[q] += count
            load += count * p0
            continue
        for _ in range(count):
            if abs(load + p0 - target) < abs(load - target):
                starts[q] += 1
                load += p0
            else:
                return starts
    return starts


@dataclass
class RealtimeResult:
    scheduler: str
    starts: np.ndarray  # (Q, T) increments
    load: np.ndarray  # (T,) including base
    B: np.ndarray
    commands: list[DispatchCommand] = field(default_factory=list)

    def hourly(self, steps_per_hour: int = 1) -> np.ndarray:
        return self.load.reshape(-1, steps_per_hour).mean(axis=1)

    def deviation(self, steps_per_hour: int = 1) -> np.ndarray:
        return self.hourly(steps_per_hour) - self.B

    def abs_deviation(self, steps_per_hour: int = 1) -> float:
        return float(np.abs(self.deviation(steps_per_hour)).sum())

    def cost(self, prices: PriceCurve) -> float:
        return realtime_cost(self.load, self.B, prices)


def simulate_nid_realtime(
    arrivals: np.ndarray,
    clusters: Sequence[NidClusterParams],
    B: np.ndarray,
    prices: PriceCurve,
    scheduler: str = "mpc",
    *,
    base: np.ndarray | None = None,
    mpc: MpcConfig | None = None,
    execution: str = "deterministic",
    seed=None,
) -> RealtimeResult:
    """Drive a scheduler over the horizon against one arrival realization.

    ``arrivals`` is cumulative (Q, T). With ``execution="randomized"`` every
    step's decision goes out as a broadcast command and simulated appliances
    act on it individually; otherwise the commanded starts are executed exactly.
    """
    arrivals = np.asarray(arrivals)
    Q, T = arrivals.shape
    inc = np.diff(np.concatenate([np.zeros((Q, 1), dtype=arrivals.dtype), arrivals], axis=1), axis=1)
    queue = NidQueue(clusters, T)
    base_arr = np.zeros(T) if base is None else np.asarray(base, float)
    rng = np.random.default_rng(seed)
    pop = NidPopulation.from_counts(inc, queue.chi, rng) if execution == "randomized" else None
    commands = []
    plan, plan_t0 = None, 0
    for t in range(T):
        queue.arrivals[:, t] = inc[:, t]
        if scheduler == "mpc":
            if mpc is None:
                raise ValueError("MPC needs an MpcConfig")
            if plan is None or t % mpc.resolve_every == 0 or t - plan_t0 >= plan.shape[1]:
                plan, plan_t0 = mpc_plan(queue, B, prices, mpc, t, base_arr), t
            step = commit_starts(queue, plan[:, t - plan_t0], t)
        elif scheduler == "edf":
            step = edf_schedule_step(queue, B, t, base_arr, prices.T)
        else:
            raise ValueError(f"unknown scheduler {scheduler!r}")
        target = queue.cum_starts(t - 1)[:, -1] + step if t > 0 else step.copy()
        cmd = make_downlink(
            t,
            nid_arrivals={q: queue.cum_arrivals(t)[q] for q in range(Q)},
            nid_activations={q: float(target[q]) for q in range(Q)},
        )
        commands.append(cmd)
        if pop is not None:
            out = apply_downlink(cmd, nid=pop, rng_seed=rng.integers(2**63))
            step = np.array([out.nid_starts.get(q, 0) for q in range(Q)], dtype=np.int64)
        queue.starts[:, t] = step
    check_nid_trajectory(np.cumsum(queue.starts, axis=1), arrivals, queue.chi)
    load = base_arr + queue.load()
    return RealtimeResult(scheduler, queue.starts.copy(), load, np.asarray(B, float), commands)
