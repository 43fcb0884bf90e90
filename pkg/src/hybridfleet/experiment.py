"""End-to-end experiment orchestration: plan, simulate, aggregate, evaluate.

A sweep runs every (delivery set, drone count, prioritized) combination,
aggregates waiting-time statistics, and evaluates the fleet links on one
selected trace. Every run is independently reproducible: its seed derives
from the base seed and the (set index, config index) pair, and the manifest
written next to the results echoes the fully resolved configuration.
"""
from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from . import __version__
from .errors import ConfigError
from .hybrid import FleetConfig, plan_hybrid
from .jobs import generate_delivery_sets, save_sets
from .metrics import (SweepResult, SweepRow, summarize_sweep, waiting_stats,
                      write_capacity_curves_csv, write_summary_csv)
from .netmodel import (Centralized, ChannelConfig, Csma, Sps, check_requirements,
                       run_cam_traffic, write_net_results_csv, write_net_summary_csv)
from .rng import mix
from .scenario import generate_grid_scenario, load_scenario, save_scenario
from .simcore import save_trace, simulate

_MODEL_FACTORIES = {"centralized": Centralized, "csma": Csma, "sps": Sps}

# seed stream tags
_STREAM_SCENARIO = 0
_STREAM_JOBS = 1
_STREAM_RUNS = 2
_STREAM_NET = 3


@dataclass
class ExperimentConfig:
    scenario_path: str | None = None
    grid_rows: int = 8
    grid_cols: int = 8
    grid_spacing: float = 100.0
    buildings_per_cell: int = 2
    n_sets: int = 50
    per_set: int = 15
    medical_per_set: int = 5
    drone_counts: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    prioritize_flags: list[bool] = field(default_factory=lambda: [False, True])
    net_models: list[str] = field(default_factory=lambda: ["centralized", "csma", "sps"])
    net_trace_set: int = 0
    net_trace_drones: int | None = None      # default: max of drone_counts
    net_trace_prioritized: bool = True
    base_seed: int = 42
    out_dir: str = "out"
    workers: int = 1
    solver: str = "heuristic"
    fleet: dict = field(default_factory=dict)  # FleetConfig overrides sans drone_count
    channel: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # accept a manifest as a config source
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n_sets < 1 or self.per_set < 1:
            raise ConfigError("need n_sets >= 1 and per_set >= 1")
        if self.medical_per_set > self.per_set or self.medical_per_set < 0:
            raise ConfigError("0 <= medical_per_set <= per_set required")
        if not self.drone_counts or any(d < 0 for d in self.drone_counts):
            raise ConfigError("drone_counts must be non-empty, non-negative")
        if not self.prioritize_flags:
            raise ConfigError("prioritize_flags must be non-empty")
        for m in self.net_models:
            if m not in _MODEL_FACTORIES:
                raise ConfigError(f"unknown net model {m!r}")
        if self.solver not in ("exact", "heuristic"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scenario_path is None and (self.grid_rows < 2 or self.grid_cols < 2):
            raise ConfigError("grid needs rows >= 2 and cols >= 2")
        try:
            FleetConfig(**self.fleet)
        except TypeError as exc:
            raise ConfigError(f"bad fleet overrides: {exc}") from exc
        try:
            ChannelConfig(**self.channel)
        except TypeError as exc:
            raise ConfigError(f"bad channel overrides: {exc}") from exc

    def fleet_for(self, drone_count: int) -> FleetConfig:
        return FleetConfig(drone_count=drone_count, **self.fleet)

    def configs(self) -> list[tuple[int, bool]]:
        """Deterministic enumeration of (drone_count, prioritized) pairs."""
        return [(d, p) for d in sorted(self.drone_counts)
                for p in sorted(self.prioritize_flags)]


def build_scenario(cfg: ExperimentConfig):
    if cfg.scenario_path:
        return load_scenario(cfg.scenario_path)
    return generate_grid_scenario(cfg.grid_rows, cfg.grid_cols, cfg.grid_spacing,
                                  cfg.buildings_per_cell,
                                  mix(cfg.base_seed, _STREAM_SCENARIO))


def build_sets(cfg: ExperimentConfig, scenario):
    return generate_delivery_sets(scenario, cfg.n_sets, cfg.per_set,
                                  cfg.medical_per_set,
                                  mix(cfg.base_seed, _STREAM_JOBS))


# worker-side cache so parallel executors build the world once per process
_WORLD_CACHE: dict[str, tuple] = {}


def _world(cfg_json: str):
    cached = _WORLD_CACHE.get(cfg_json)
    if cached is None:
        cfg = ExperimentConfig.from_dict(json.loads(cfg_json))
        scenario = build_scenario(cfg)
        dsets = build_sets(cfg, scenario)
        cached = (cfg, scenario, dsets)
        _WORLD_CACHE.clear()
        _WORLD_CACHE[cfg_json] = cached
    return cached


def run_one(cfg: ExperimentConfig, scenario, dset, drone_count: int,
            prioritized: bool):
    """plan -> simulate -> waiting stats for one configuration of one set."""
    fleet = cfg.fleet_for(drone_count)
    plan = plan_hybrid(scenario, dset, fleet, prioritized, cfg.solver)
    targets = {j.id: (j.target.x, j.target.y) for j in dset.jobs}
    trace = simulate(scenario, plan, fleet, targets)
    stats = waiting_stats(trace, dset)
    return plan, trace, stats


def _run_set(cfg_json: str, set_idx: int):
    cfg, scenario, dsets = _world(cfg_json)
    dset = dsets[set_idx]
    rows = []
    failures = []
    for config_idx, (drones, prio) in enumerate(cfg.configs()):
        run_seed = mix(cfg.base_seed, _STREAM_RUNS, set_idx, config_idx)
        try:
            _, trace, stats = run_one(cfg, scenario, dset, drones, prio)
            rows.append(SweepRow(drones, prio, set_idx, stats, trace.end_time))
        except Exception as exc:  # isolate failures per run
            failures.append({
                "set": set_idx, "drones": drones, "prioritized": prio,
                "seed": run_seed, "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=5),
            })
    seeds = [{"set": set_idx, "drones": d, "prioritized": p,
              "seed": mix(cfg.base_seed, _STREAM_RUNS, set_idx, ci)}
             for ci, (d, p) in enumerate(cfg.configs())]
    return set_idx, rows, failures, seeds


def run_sweep(cfg: ExperimentConfig) -> tuple[SweepResult, list[dict], list[dict]]:
    """All (set, drone count, prioritized) runs; deterministic merge order."""
    cfg_json = json.dumps(asdict(cfg), sort_keys=True)
    set_indices = list(range(cfg.n_sets))
    results = []
    if cfg.workers <= 1:
        for i in set_indices:
            results.append(_run_set(cfg_json, i))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_set, [cfg_json] * len(set_indices),
                                  set_indices))
    sweep = SweepResult({})
    failures: list[dict] = []
    seeds: list[dict] = []
    for _, rows, fails, run_seeds in results:
        for row in rows:
            sweep.add(row)
        failures.extend(fails)
        seeds.extend(run_seeds)
    return sweep, failures, seeds


def run_experiment(cfg: ExperimentConfig) -> int:
    """Full pipeline; writes artifacts into cfg.out_dir. Returns exit status
    (0 ok, 1 when any run failed)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    scenario = build_scenario(cfg)
    dsets = build_sets(cfg, scenario)
    save_scenario(scenario, os.path.join(cfg.out_dir, "scenario.json"))
    save_sets(dsets, os.path.join(cfg.out_dir, "jobs.json"))

    sweep, failures, seeds = run_sweep(cfg)
    if sweep.rows:
        summary = summarize_sweep(sweep)
        write_summary_csv(summary, os.path.join(cfg.out_dir, "summary.csv"))
        write_capacity_curves_csv(summary,
                                  os.path.join(cfg.out_dir, "capacity_curves.csv"))

    net_report_lines: list[str] = []
    net_error = None
    if cfg.net_models:
        try:
            net_report_lines = _run_net(cfg, scenario, dsets)
        except Exception as exc:
            net_error = f"{type(exc).__name__}: {exc}"

    manifest = {
        "version": __version__,
        "config": asdict(cfg),
        "runs": seeds,
        "failures": failures,
        "net_error": net_error,
        "requirement_checks": net_report_lines,
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return 1 if (failures or net_error) else 0


def _run_net(cfg: ExperimentConfig, scenario, dsets) -> list[str]:
    drones = cfg.net_trace_drones
    if drones is None:
        drones = max(cfg.drone_counts)
    set_idx = cfg.net_trace_set
    if not 0 <= set_idx < len(dsets):
        raise ConfigError(f"net_trace_set {set_idx} out of range")
    _, trace, _ = run_one(cfg, scenario, dsets[set_idx], drones,
                          cfg.net_trace_prioritized)
    save_trace(trace, os.path.join(cfg.out_dir, "net_trace.csv"))
    channel = ChannelConfig(**cfg.channel)
    stats_list = []
    lines = []
    for model_name in cfg.net_models:
        mac = _MODEL_FACTORIES[model_name]()
        seed = mix(cfg.base_seed, _STREAM_NET, _model_tag(model_name))
        stats = run_cam_traffic(trace, scenario, mac, channel, seed=seed)
        stats_list.append(stats)
        if stats.sent:
            lines.extend(check_requirements(stats).lines())
        else:
            lines.append(f"[{model_name}] no CAM traffic on the selected trace")
    write_net_results_csv(stats_list, os.path.join(cfg.out_dir, "net_results.csv"))
    write_net_summary_csv(stats_list, os.path.join(cfg.out_dir, "net_summary.csv"))
    return lines


def _model_tag(name: str) -> int:
    return {"centralized": 0, "csma": 1, "sps": 2}[name]
