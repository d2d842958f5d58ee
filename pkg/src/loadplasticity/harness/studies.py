"""End-to-end case studies: PHEV day-ahead planning, TCL regulation and uplink load."""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from ..arrivals import build_scenario_set, pjm_case_profile, sample_population_scenario
from ..categories.tcl import CoarseGrid, ThermalMapping
from ..categories.tcl_catalog import TclLaws, TclUnits, assign_units, build_catalog, cluster_counts, level_index, sample_units
from ..dispatch.phev import MpcConfig, simulate_nid_realtime
from ..dispatch.tcl import TclFleet, run_tracking
from ..planner.nid import plan_forward_clustered, plan_forward_tank, pulse_load
from ..planner.prices import PriceCurve, forward_cost, read_forward_prices
from ..planner.tcl_capacity import StepRule, estimate_capacity, fleet_step_shares
from ..telemetry import Neighborhood, coverage_limits, forward_bytes_per_slot, mac_throughput
from .config import ExperimentConfig, RunReport, Table
from .data import AMBIENT_6H, base_load, forward_prices, read_signal, regulation_signal

log = logging.getLogger(__name__)

# stream tags; every random draw in a study is keyed by (seed, tag)
_UNITS, _INIT, _RUN, _SIGNAL, _REALIZED = 1, 2, 3, 4, 5


def _prices(config: ExperimentConfig) -> PriceCurve:
    if config.price_file is None:
        return PriceCurve.from_forward(forward_prices(config.horizon_hours))
    with open(config.price_file) as fh:
        f = read_forward_prices(fh)
    if f.size < config.horizon_hours:
        raise ValueError(f"{config.price_file}: {f.size} hours of prices, need {config.horizon_hours}")
    return PriceCurve.from_forward(f[: config.horizon_hours])


# --- PHEV ---------------------------------------------------------------------------------


def run_phev_study(config: ExperimentConfig) -> RunReport:
    """Plan with the clustered and tank models, dispatch each plan with the configured schedulers.

    The hourly table holds B and the realized load per (model, scheduler)
    for every seed; the summary holds absolute deviations, their share of
    the realized flexible energy and the ratios between combinations.
    """
    H = config.horizon_hours
    N = config.phev_population
    profile = pjm_case_profile(population=N, horizon=H)
    clusters = [c.nid for c in profile.clusters]
    pulses = [c.pulse for c in clusters]
    prices = _prices(config)
    lam = profile.step_rates().sum(axis=1)
    base = base_load(H, pulse_load(lam, pulses, H))
    mpc = MpcConfig(lam, population=N, backend=config.backend)

    rows, per_seed, invariants, runtime = [], {}, {}, {}
    for seed in config.seeds:
        t0 = time.perf_counter()
        try:
            scen = build_scenario_set(profile, config.scenarios, seed, fixed_population=True)
            plans = {
                "clustered": plan_forward_clustered(scen, prices, clusters, base, backend=config.backend),
                "tank": plan_forward_tank(scen, prices, clusters, base, backend=config.backend),
            }
            realized = sample_population_scenario(profile, (seed, _REALIZED)).per_cluster()
            runs = {
                (model, sched): simulate_nid_realtime(
                    realized, clusters, plan.B, prices, sched, base=base, mpc=mpc if sched == "mpc" else None
                )
                for model, plan in plans.items()
                for sched in config.schedulers
            }
        except Exception as exc:
            raise RuntimeError(f"PHEV study, seed {seed}: {exc}") from exc
        runtime[f"seed_{seed}_s"] = time.perf_counter() - t0

        flex = float(sum(c.energy * realized[q, -1] for q, c in enumerate(clusters)))
        dev = {f"{m}+{s}": r.abs_deviation() for (m, s), r in runs.items()}
        stats = {
            "flexible_energy": flex,
            "abs_deviation": dev,
            "deviation_share": {k: (v / flex if flex > 0 else 0.0) for k, v in dev.items()},
            "plan_cost": {m: p.expected_cost for m, p in plans.items()},
            "lp_cost": {m: p.lp_cost for m, p in plans.items()},
            "realtime_cost": {f"{m}+{s}": r.cost(prices) for (m, s), r in runs.items()},
            "base_forward_cost": forward_cost(base, prices),
        }
        ref = dev.get("clustered+mpc")
        if ref:
            stats["ratio"] = {k: v / ref for k, v in dev.items() if k != "clustered+mpc"}
        per_seed[seed] = stats

        invariants[f"seed_{seed}_tank_bound"] = plans["tank"].lp_cost <= plans["clustered"].lp_cost + 1e-6 * max(
            1.0, abs(plans["clustered"].lp_cost)
        )
        invariants[f"seed_{seed}_nonnegative_B"] = all((p.B >= -1e-9).all() for p in plans.values())
        invariants[f"seed_{seed}_deviation_identity"] = all(
            np.allclose(r.deviation(), r.hourly() - r.B) for r in runs.values()
        )
        for h in range(H):
            row = [seed, h, plans["clustered"].B[h], plans["tank"].B[h], base[h]]
            for key in runs:
                r = runs[key]
                row += [r.load[h], r.load[h] - r.B[h]]
            rows.append(row)

    columns = ["seed", "hour", "B_clustered", "B_tank", "base"]
    for m, s in runs:
        columns += [f"load_{m}_{s}", f"dev_{m}_{s}"]
    flex_total = sum(v["flexible_energy"] for v in per_seed.values())
    pooled = {
        k: (sum(v["abs_deviation"][k] for v in per_seed.values()) / flex_total if flex_total > 0 else 0.0)
        for k in next(iter(per_seed.values()))["abs_deviation"]
    }
    summary = {"population": N, "seeds": per_seed, "pooled_deviation_share": pooled}
    return RunReport("phev", config.hash(), list(config.seeds), summary, {"hourly": Table(columns, rows)}, invariants, runtime)


# --- TCL ----------------------------------------------------------------------------------


def _ambient(config: ExperimentConfig) -> np.ndarray:
    amb = np.asarray(AMBIENT_6H if config.ambient is None else config.ambient, float)
    hours = int(np.ceil(config.tcl_minutes / 60))
    if amb.size < hours:
        raise ValueError(f"ambient profile covers {amb.size} hours, the run needs {hours}")
    return amb[:hours]


def _signal(config: ExperimentConfig, seed: int) -> np.ndarray:
    if config.signal_file is None:
        return regulation_signal(config.tcl_minutes, (seed, _SIGNAL))
    with open(config.signal_file) as fh:
        s = read_signal(fh)
    if s.size < config.tcl_minutes:
        raise ValueError(f"{config.signal_file}: {s.size} minutes of signal, need {config.tcl_minutes}")
    return s[: config.tcl_minutes]


class FleetFactory:
    """Rebuilds the same fleet at minute 0, so paired runs share initial states."""

    def __init__(self, units: TclUnits, ambient: np.ndarray, seed: int, laws: TclLaws, noise_sigma: float):
        rng = np.random.default_rng((seed, _INIT))
        self.units = units
        self.ambient = ambient
        self.temp = rng.uniform(units.lower, units.upper)
        self.b = (rng.random(units.n) < laws.on_prob).astype(np.int8)
        self.power_class = level_index(units.power, *laws.power, laws.levels[0])
        self.noise_sigma = noise_sigma

    def ambient_at(self, t: int) -> float:
        return float(self.ambient[min(t // 60, self.ambient.size - 1)])

    def __call__(self) -> TclFleet:
        u = self.units
        return TclFleet(
            u.power, u.G, u.k, u.lower, u.upper, self.temp.copy(), self.b.copy(), self.ambient_at,
            noise_sigma=self.noise_sigma, power_class=self.power_class, grid=CoarseGrid(),
        )


def tcl_population(config: ExperimentConfig, seed: int, n: int | None = None, laws: TclLaws = TclLaws()):
    """Sampled units and the fleet factory for one seed."""
    ambient = _ambient(config)
    mapping = ThermalMapping(config.capacitance)
    n = config.tcl_population if n is None else n
    units = sample_units(n, np.random.default_rng((seed, _UNITS)), laws, mapping, ambient_min=float(ambient.min()))
    return units, FleetFactory(units, ambient, seed, laws, config.noise_sigma)


def run_capacity(config: ExperimentConfig, seed: int | None = None) -> RunReport:
    """Baseline, stationary envelopes and simulated capacity of the sampled heater population."""
    seed = config.seeds[0] if seed is None else seed
    laws = TclLaws()
    ambient = _ambient(config)
    t0 = time.perf_counter()
    units, _ = tcl_population(config, seed, laws=laws)
    catalog = build_catalog(laws, ThermalMapping(config.capacitance), config.noise_sigma)
    counts = cluster_counts(assign_units(units, laws), laws.n_clusters)
    cap = estimate_capacity(catalog, counts, ambient, config.theta, StepRule(hold=config.hold_minutes), config.n_sim, seed)
    summary = {"seed": seed, "units": units.n, "M": cap.M, "M_prime": cap.M_prime, "baseline_mean": float(cap.baseline.mean())}
    tables = {"capacity": _capacity_table(catalog, counts, cap), "envelopes": _envelope_table(ambient, cap)}
    return RunReport("capacity", config.hash(), seed, summary, tables, {"capacity_ordered": cap.ordered}, {"total_s": time.perf_counter() - t0})


def _capacity_table(catalog, counts, cap) -> Table:
    H = cap.per_unit.shape[1]
    return Table(
        ["cluster", "units", "power", "G", "k", "x_star", "B", *[f"M_h{h}" for h in range(H)]],
        [[q, int(counts[q]), c.power, c.G, c.k, c.x_star, c.B, *cap.per_unit[q]] for q, c in enumerate(catalog)],
    )


def _envelope_table(ambient, cap) -> Table:
    return Table(
        ["hour", "ambient", "baseline", "L_max", "L_min"],
        [[h, ambient[h], cap.baseline[h], cap.L_max[h], cap.L_min[h]] for h in range(ambient.size)],
    )


def step_starts(minutes: int, hold: int) -> list[int]:
    """One step per hour, half an hour in, when it fits inside the run."""
    return [s for s in range(30, minutes, 60) if s + hold <= minutes]


def run_tcl_study(config: ExperimentConfig, seed: int | None = None, check_rejection: bool = True) -> RunReport:
    """Catalog, capacity and a regulation-tracking run for one seed."""
    seed = config.seeds[0] if seed is None else seed
    laws = TclLaws()
    ambient = _ambient(config)
    rule = StepRule(hold=config.hold_minutes)
    runtime = {}

    t0 = time.perf_counter()
    units, make = tcl_population(config, seed, laws=laws)
    catalog = build_catalog(laws, ThermalMapping(config.capacitance), config.noise_sigma)
    counts = cluster_counts(assign_units(units, laws), laws.n_clusters)
    cap = estimate_capacity(catalog, counts, ambient, config.theta, rule, config.n_sim, seed)
    runtime["capacity_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    M = cap.M_prime
    signal = _signal(config, seed)
    T = config.tcl_minutes
    base = run_tracking(make(), [None] * T, (seed, _RUN))["load"]
    target = base + M * signal
    sample = np.linspace(0, units.n - 1, 3).astype(int)
    run = run_tracking(make(), target, (seed, _RUN), record_temps=sample)
    err = run["load"] - target
    within = float(np.mean(np.abs(err) < 0.05 * M)) if M > 0 else float(np.all(err == 0))
    runtime["tracking_s"] = time.perf_counter() - t0

    summary = {
        "seed": seed,
        "units": units.n,
        "resampled_units": units.resampled,
        "M": cap.M,
        "M_prime": M,
        "baseline_mean": float(cap.baseline.mean()),
        "tracking_within_share": within,
        "max_push_run": run["max_push_run"],
        "max_out_run": run["max_out_run"],
        "max_excursion": run["max_excursion"],
        "max_abs_error_over_M": float(np.abs(err).max() / M) if M > 0 else 0.0,
    }
    invariants = {
        "capacity_ordered": cap.ordered,
        "band_respected": run["max_push_run"] <= 1,
    }
    if check_rejection:
        t0 = time.perf_counter()
        starts = step_starts(T, rule.hold)
        reject_m = config.reject_capacity * config.tcl_scale
        shares = fleet_step_shares(make, reject_m, starts, rule, (seed, _RUN))
        summary["reject_capacity"] = reject_m
        summary["reject_step_shares"] = shares
        summary["rejected"] = bool((shares < rule.share).any())
        if M > 0:
            at_m = fleet_step_shares(make, M, starts, rule, (seed, _RUN))
            summary["capacity_step_shares"] = at_m
            summary["accepted_at_capacity"] = bool((at_m >= rule.share).all())
        runtime["rejection_s"] = time.perf_counter() - t0

    temp_rows = [[t, *(run["temps"][t])] for t in range(T)]
    tables = {
        "tracking": Table(
            ["minute", "signal", "baseline", "target", "load", "error"],
            [[t, signal[t], base[t], target[t], run["load"][t], err[t]] for t in range(T)],
        ),
        "capacity": _capacity_table(catalog, counts, cap),
        "envelopes": _envelope_table(ambient, cap),
        "temperatures": Table(["minute", *[f"unit_{i}" for i in sample]], temp_rows),
    }
    return RunReport("tcl", config.hash(), seed, summary, tables, invariants, runtime)


# --- uplink -------------------------------------------------------------------------------


def tcl_switch_rates(config: ExperimentConfig, n: int, seed: int) -> tuple[np.ndarray, int]:
    """Autonomous switch events per unit and minute, averaged per hour, and the busiest minute's count."""
    _, make = tcl_population(config, seed, n)
    events = run_tracking(make(), [None] * config.tcl_minutes, (seed, _RUN))["events"]
    hours = int(np.ceil(config.tcl_minutes / 60))
    padded = np.zeros(hours * 60)
    padded[: events.size] = events
    per_minute = padded.reshape(hours, 60).sum(axis=1) / np.minimum(60, config.tcl_minutes - 60 * np.arange(hours))
    return per_minute / n, int(events.max(initial=0))


def run_comm_study(config: ExperimentConfig, seed: int | None = None) -> RunReport:
    """Uplink packet rate of one collector's neighborhood over a day.

    EVs send one packet on arrival, at the case-study arrival rates. TCLs
    send one packet per switch, at the rate of the autonomous heater
    population, taken as stationary over the day.
    """
    seed = config.seeds[0] if seed is None else seed
    t0 = time.perf_counter()
    n_ev = config.households * config.evs_per_house
    n_tcl = config.households * config.tcls_per_house
    hours = 24
    profile = pjm_case_profile(population=n_ev, horizon=hours)
    ev_per_hour = profile.rates.sum(axis=(0, 1))
    p_ev = ev_per_hour / max(n_ev, 1) / 60.0
    if n_tcl:
        tcl_rate, max_tcl_events = tcl_switch_rates(config, n_tcl, seed)
    else:
        tcl_rate, max_tcl_events = np.zeros(1), 0
    p_tcl = np.resize(tcl_rate, hours)

    hood = Neighborhood(
        config.households,
        {"ev": config.evs_per_house, "tcl": config.tcls_per_house},
        {"ev": p_ev, "tcl": p_tcl},
        latency_seconds=config.latency_seconds,
    )
    rho = np.array([mac_throughput(hood, h) for h in range(hours)])
    half = hood.scaled(0.5)
    rho_half = np.array([mac_throughput(half, h) for h in range(hours)])
    peak = float(rho.max())
    cov = coverage_limits(config.latency_seconds, config.collector_range_m, peak)

    # per-minute payload a collector forwards: one counter per reported value
    ev_max = int(np.ceil(ev_per_hour.max() / 60 / len(profile.clusters))) if n_ev else 0
    grid = CoarseGrid()
    bytes_rows = [
        ["phev", len(profile.clusters), ev_max, forward_bytes_per_slot(len(profile.clusters), max_count=max(ev_max, 1))],
        ["tcl", 2 * grid.n_bins, max_tcl_events, forward_bytes_per_slot(2 * grid.n_bins, max_count=max(max_tcl_events, 1))],
    ]
    summary = {
        "seed": seed,
        "peak_pps": peak,
        "peak_hour": int(rho.argmax()),
        "peak_ev_pps": float((n_ev * p_ev).max() / 60.0),
        "tcl_pps": float(n_tcl * p_tcl.max() / 60.0),
        "halved_peak_pps": float(rho_half.max()),
        "halved_ratio": float(rho_half.max() / peak) if peak > 0 else 0.0,
        "capacity_pps": cov.capacity_pps,
        "density_pps_per_m2": cov.density_pps_per_m2,
        "headroom": cov.headroom,
    }
    invariants = {"within_capacity": peak <= cov.capacity_pps}
    tables = {
        "throughput": Table(["hour", "p_ev", "p_tcl", "pps", "pps_half"], [[h, p_ev[h], p_tcl[h], rho[h], rho_half[h]] for h in range(hours)]),
        "bytes": Table(["category", "values", "max_count", "bytes_per_slot"], bytes_rows),
    }
    return RunReport("comm", config.hash(), seed, summary, tables, invariants, {"total_s": time.perf_counter() - t0})


STUDIES = {"phev": run_phev_study, "tcl": run_tcl_study, "comm": run_comm_study}


def run_study(name: str, config: ExperimentConfig, out_dir: str | Path | None = None) -> RunReport:
    report = STUDIES[name](config)
    report.write(config.output_dir if out_dir is None else out_dir)
    return report
