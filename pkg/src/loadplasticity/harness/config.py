"""Experiment configuration, run reports and table output."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

PHEV_FULL_POPULATION = 40000
TCL_FULL_POPULATION = 10000


@dataclass
class ExperimentConfig:
    name: str = "case-study"
    phev_scale: float = 0.05  # 2,000 PHEVs
    tcl_scale: float = 0.1  # 1,000 TCLs
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    scenarios: int = 20
    horizon_hours: int = 32
    price_file: str | None = None
    signal_file: str | None = None
    ambient: list[float] | None = None  # degF per hour of the TCL window
    schedulers: list[str] = field(default_factory=lambda: ["mpc", "edf"])
    backend: str = "auto"
    capacitance: float = 4.0e5  # J/degC
    noise_sigma: float = 0.05
    theta: float = 1.0  # degF, narrowest stationary band
    hold_minutes: int = 19
    n_sim: int = 1000
    tcl_minutes: int = 360
    reject_capacity: float = 2.4e6  # W at full scale, checked against the step rule
    households: int = 1000
    evs_per_house: int = 2
    tcls_per_house: int = 3
    latency_seconds: float = 0.007
    collector_range_m: float = 100.0
    output_dir: str = "out"

    def __post_init__(self):
        if not 0 <= self.phev_scale <= 1 or not 0 < self.tcl_scale <= 1:
            raise ValueError("scales must lie in (0, 1]")
        if self.scenarios < 1 or self.horizon_hours < 1:
            raise ValueError("need at least one scenario and one hour")
        for s in self.schedulers:
            if s not in ("mpc", "edf"):
                raise ValueError(f"unknown scheduler {s!r}")
        for f in (self.price_file, self.signal_file):
            if f is not None and not Path(f).exists():
                raise FileNotFoundError(f)

    @property
    def phev_population(self) -> int:
        return int(round(PHEV_FULL_POPULATION * self.phev_scale))

    @property
    def tcl_population(self) -> int:
        return int(round(TCL_FULL_POPULATION * self.tcl_scale))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Digest of everything except where results are written."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


@dataclass
class RunReport:
    study: str
    config_hash: str
    seed: int | list[int] | None
    summary: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)
    invariants: dict[str, bool] = field(default_factory=dict)
    runtime: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.invariants.values())

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, table in self.tables.items():
            p = out / f"{self.study}_{name}.csv"
            write_table(p, table, self.config_hash, self.seed)
            paths.append(p)
        p = out / f"{self.study}_summary.json"
        with open(p, "w") as fh:
            json.dump(
                {
                    "config_hash": self.config_hash,
                    "seed": self.seed,
                    "summary": _plain(self.summary),
                    "invariants": self.invariants,
                    "runtime": self.runtime,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
        paths.append(p)
        return paths


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: str | Path, table: Table, config_hash: str, seed) -> None:
    if isinstance(seed, (list, tuple)):
        seed = ",".join(map(str, seed))
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_table(path: str | Path) -> tuple[dict[str, str], Table]:
    with open(path) as fh:
        head = fh.readline().lstrip("#").split()
        meta = dict(kv.split("=", 1) for kv in head)
        cols = fh.readline().strip().split(",")
        rows = [[_parse(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return meta, Table(cols, rows)


def _parse(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v
