"""Waiting-time statistics, capacity curves, and sweep summaries.

Waiting time is measured from tour start (t = 0) to handover completion,
service time included.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PlanConsistencyError
from .jobs import Category, DeliverySet
from .simcore import DeliveryTrace

ALL = "all"


@dataclass
class CategoryStats:
    n: int
    mean: float
    median: float
    samples: np.ndarray      # sorted, seconds


@dataclass
class WaitingStats:
    categories: dict[str, CategoryStats]   # keys: medical/standard/all, absent if empty

    def get(self, key: str) -> CategoryStats | None:
        return self.categories.get(key)


def _cat_stats(samples: list[float]) -> CategoryStats:
    arr = np.sort(np.array(samples, np.float64))
    return CategoryStats(arr.size, float(arr.mean()), float(np.median(arr)), arr)


def waiting_stats(trace: DeliveryTrace, dset: DeliverySet) -> WaitingStats:
    """Per-category waiting times of a simulated delivery set."""
    buckets: dict[str, list[float]] = {Category.MEDICAL.value: [],
                                       Category.STANDARD.value: [], ALL: []}
    for job in dset.jobs:
        if job.id not in trace.completion:
            raise PlanConsistencyError(f"job {job.id} has no completion in the trace")
        t = trace.completion[job.id]
        if t < 0:
            raise PlanConsistencyError(f"job {job.id} completed at negative time")
        buckets[job.category.value].append(t)
        buckets[ALL].append(t)
    return WaitingStats({k: _cat_stats(v) for k, v in buckets.items() if v})


def capacity_at(stats: WaitingStats, threshold: float) -> float:
    """Fraction of all deliveries completed within threshold seconds."""
    cat = stats.get(ALL)
    if cat is None or cat.n == 0:
        raise ParameterError("no samples")
    return float(np.searchsorted(cat.samples, threshold, side="right")) / cat.n


def prioritization_effect(base: WaitingStats, prio: WaitingStats
                          ) -> tuple[float, float]:
    """Relative change of category mean waiting times, (prio - base) / base.

    Negative values are improvements. Returns (medical_change,
    standard_change).
    """
    def change(key: str) -> float:
        b = base.get(key)
        p = prio.get(key)
        if b is None or p is None:
            raise ParameterError(f"category {key} missing from one side")
        if b.mean == 0:
            raise ParameterError(f"category {key} has zero baseline mean")
        return (p.mean - b.mean) / b.mean

    return change(Category.MEDICAL.value), change(Category.STANDARD.value)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    drone_count: int
    prioritized: bool
    set_id: int
    stats: WaitingStats
    makespan: float


@dataclass
class SweepResult:
    rows: dict[tuple[int, bool, int], SweepRow]

    def add(self, row: SweepRow) -> None:
        key = (row.drone_count, row.prioritized, row.set_id)
        if key in self.rows:
            raise ParameterError(f"duplicate sweep row {key}")
        self.rows[key] = row


@dataclass
class SweepSummary:
    # one row per (drones, prioritized, category)
    rows: list[dict]
    # (drones, prioritized) -> capacity fraction per whole minute of threshold
    capacity_curves: dict[tuple[int, bool], list[float]]


def summarize_sweep(result: SweepResult) -> SweepSummary:
    """Aggregate sweep rows per configuration.

    Means/medians pool the per-set samples; the capacity curve samples
    capacity_at on the pooled samples at one-minute steps up to the slowest
    delivery. capacity_20min repeats the configuration's pooled 20-minute
    capacity on each of its category rows.
    """
    if not result.rows:
        raise ParameterError("empty sweep result")
    configs: dict[tuple[int, bool], list[SweepRow]] = {}
    for row in result.rows.values():
        configs.setdefault((row.drone_count, row.prioritized), []).append(row)

    out_rows = []
    curves = {}
    for (drones, prio) in sorted(configs):
        rows = configs[(drones, prio)]
        pooled: dict[str, list[float]] = {}
        for r in rows:
            for key, cat in r.stats.categories.items():
                pooled.setdefault(key, []).extend(cat.samples.tolist())
        pooled_stats = WaitingStats({k: _cat_stats(v) for k, v in pooled.items() if v})
        cap20 = capacity_at(pooled_stats, 20 * 60.0)
        all_cat = pooled_stats.get(ALL)
        max_minute = int(np.ceil(all_cat.samples[-1] / 60.0)) if all_cat.n else 0
        curves[(drones, prio)] = [capacity_at(pooled_stats, 60.0 * m)
                                  for m in range(max_minute + 1)]
        for key in (Category.MEDICAL.value, Category.STANDARD.value, ALL):
            cat = pooled_stats.get(key)
            if cat is None:
                continue
            out_rows.append({
                "drones": drones,
                "prioritized": prio,
                "category": key,
                "mean_s": cat.mean,
                "median_s": cat.median,
                "capacity_20min": cap20,
            })
    return SweepSummary(out_rows, curves)


def write_summary_csv(summary: SweepSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["drones", "prioritized", "category", "mean_s", "median_s",
                    "capacity_20min"])
        for row in summary.rows:
            w.writerow([row["drones"], int(row["prioritized"]), row["category"],
                        repr(row["mean_s"]), repr(row["median_s"]),
                        repr(row["capacity_20min"])])


def write_capacity_curves_csv(summary: SweepSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["drones", "prioritized", "minute", "fraction"])
        for (drones, prio) in sorted(summary.capacity_curves):
            for minute, frac in enumerate(summary.capacity_curves[(drones, prio)]):
                w.writerow([drones, int(prio), minute, repr(frac)])
