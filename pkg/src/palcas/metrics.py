"""Outcome metrics and the CSV export/import surface.

Rates follow resolved-outcome semantics: a vehicle enters a rate's
denominator only once its outcome is decided within the episode (exited,
missed, merged, deadlocked, or collided); vehicles still in flight when the
episode ends are excluded rather than counted as failures. Collision rate is
the exception: it is taken over all spawned CAVs. Zero denominators report an
absent metric, never 0 or 100.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .road import CAV, RoadNetwork, Route
from .sim import Event

EVENT_COLUMNS = ("time", "event", "vehicle_id", "kind", "lane", "long_pos", "detail")
TRAJECTORY_COLUMNS = ("time", "vehicle_id", "kind", "lane", "long_pos",
                      "lat_pos", "speed", "accel")


@dataclass
class EpisodeData:
    events: list = field(default_factory=list)          # Event records
    trajectory: list = field(default_factory=list)      # TRAJECTORY_COLUMNS tuples


@dataclass
class MetricValue:
    mean: Optional[float]
    std: Optional[float]
    n: int

    def present(self) -> bool:
        return self.mean is not None


@dataclass
class MetricsReport:
    efficiency: MetricValue
    collision_rate: MetricValue
    destination_success_rate: MetricValue
    merge_success_rate: MetricValue
    comfort_mean_abs_accel: MetricValue
    denominators: dict = field(default_factory=dict)

    def as_rows(self) -> list:
        rows = []
        for name in ("efficiency", "collision_rate", "destination_success_rate",
                     "merge_success_rate", "comfort_mean_abs_accel"):
            value: MetricValue = getattr(self, name)
            rows.append((name,
                         "" if value.mean is None else value.mean,
                         "" if value.std is None else value.std,
                         value.n))
        return rows


def _aggregate(values: list) -> MetricValue:
    values = [v for v in values if v is not None]
    if not values:
        return MetricValue(None, None, 0)
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return MetricValue(mean, std, len(values))


def _episode_rates(events: list) -> dict:
    """Per-episode CR/DSR/MSR numerators and denominators from the event log."""
    spawned_cavs = set()
    exiting_cavs = set()
    ramp_cavs = set()
    collided = set()
    exited = set()
    missed = set()
    merged = set()
    deadlocked = set()
    for ev in events:
        vid = ev.vehicle_id
        if ev.event == "spawn" and ev.kind == CAV:
            spawned_cavs.add(vid)
            route = Route.parse(ev.detail.removeprefix("route="))
            if route.is_exiting:
                exiting_cavs.add(vid)
            if route.is_ramp_entry:
                ramp_cavs.add(vid)
        elif ev.event == "collision" and ev.kind == CAV:
            collided.add(vid)
        elif ev.event == "arrival" and ev.kind == CAV and ev.detail == "exit":
            exited.add(vid)
        elif ev.event == "missed_exit" and ev.kind == CAV:
            missed.add(vid)
        elif ev.event == "merge" and ev.kind == CAV:
            merged.add(vid)
        elif ev.event == "deadlock" and ev.kind == CAV:
            deadlocked.add(vid)

    dsr_resolved = exited | (exiting_cavs & (missed | collided))
    # Merge success: deadlock or a collision before any merge counts failed.
    msr_success = set()
    msr_failed = set()
    for vid in ramp_cavs:
        if vid in deadlocked:
            msr_failed.add(vid)
        elif vid in merged:
            msr_success.add(vid)
        elif vid in collided:
            msr_failed.add(vid)
    return {
        "spawned_cavs": len(spawned_cavs),
        "collided_cavs": len(collided & spawned_cavs),
        "exit_success": len(exited),
        "exit_resolved": len(dsr_resolved),
        "merge_success": len(msr_success),
        "merge_resolved": len(msr_success | msr_failed),
    }


def _episode_efficiency(trajectory: list, network: RoadNetwork) -> Optional[float]:
    speeds = [row[6] for row in trajectory
              if any(c.contains(row[4]) for c in network.clusters)]
    return float(np.mean(speeds)) if speeds else None


def _episode_comfort(trajectory: list) -> Optional[float]:
    accels = [abs(row[7]) for row in trajectory if row[2] == CAV]
    return float(np.mean(accels)) if accels else None


def compute_metrics(episodes: list, network: RoadNetwork) -> MetricsReport:
    """Mean +- sample standard deviation of every metric across episodes."""
    cr, dsr, msr, eff, comfort = [], [], [], [], []
    denom = {"spawned_cavs": 0, "exit_resolved": 0, "merge_resolved": 0}
    for ep in episodes:
        tally = _episode_rates(ep.events)
        denom["spawned_cavs"] += tally["spawned_cavs"]
        denom["exit_resolved"] += tally["exit_resolved"]
        denom["merge_resolved"] += tally["merge_resolved"]
        cr.append(100.0 * tally["collided_cavs"] / tally["spawned_cavs"]
                  if tally["spawned_cavs"] else None)
        dsr.append(100.0 * tally["exit_success"] / tally["exit_resolved"]
                   if tally["exit_resolved"] else None)
        msr.append(100.0 * tally["merge_success"] / tally["merge_resolved"]
                   if tally["merge_resolved"] else None)
        eff.append(_episode_efficiency(ep.trajectory, network))
        comfort.append(_episode_comfort(ep.trajectory))
    return MetricsReport(
        efficiency=_aggregate(eff),
        collision_rate=_aggregate(cr),
        destination_success_rate=_aggregate(dsr),
        merge_success_rate=_aggregate(msr),
        comfort_mean_abs_accel=_aggregate(comfort),
        denominators=denom,
    )


def space_time_grid(trajectory: list, bin_x: float, bin_t: float) -> dict:
    """Mean speed per (time, position) bin; empty cells are simply absent.

    Keys are (t_bin_start, x_bin_start).
    """
    if bin_x <= 0 or bin_t <= 0:
        raise ValueError("bins must be positive")
    sums: dict = {}
    counts: dict = {}
    for row in trajectory:
        key = (math.floor(row[0] / bin_t) * bin_t, math.floor(row[4] / bin_x) * bin_x)
        sums[key] = sums.get(key, 0.0) + row[6]
        counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


def inference_cdf(samples_ms: list) -> list:
    """Empirical CDF as sorted (value, cumulative fraction) pairs."""
    if not samples_ms:
        raise ValueError("need at least one sample")
    ordered = sorted(samples_ms)
    n = len(ordered)
    return [(v, (i + 1) / n) for i, v in enumerate(ordered)]


def percentile_nearest_rank(samples_ms: list, pct: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample."""
    ordered = sorted(samples_ms)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


# -- CSV surface -----------------------------------------------------------------

def write_events_csv(path, events: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        for ev in events:
            writer.writerow([ev.time, ev.event, ev.vehicle_id, ev.kind,
                             ev.lane, ev.long_pos, ev.detail])


def read_events_csv(path) -> list:
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(Event(float(row["time"]), row["event"], int(row["vehicle_id"]),
                             row["kind"], int(row["lane"]), float(row["long_pos"]),
                             row["detail"]))
    return out


def write_trajectory_csv(path, trajectory: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        writer.writerows(trajectory)


def read_trajectory_csv(path) -> list:
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append((float(row["time"]), int(row["vehicle_id"]), row["kind"],
                        int(row["lane"]), float(row["long_pos"]), float(row["lat_pos"]),
                        float(row["speed"]), float(row["accel"])))
    return out


def write_metrics_csv(path, report: MetricsReport):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "mean", "std", "n"))
        writer.writerows(report.as_rows())


def write_spacetime_csv(path, grid: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t_bin", "x_bin", "mean_speed"))
        for (t_bin, x_bin) in sorted(grid):
            writer.writerow((t_bin, x_bin, grid[(t_bin, x_bin)]))


def write_rounds_csv(path, records: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("round", "agent_id", "n_k", "mean_loss", "epsilon", "wall_ms"))
        for rec in records:
            writer.writerow((rec["round"], rec["agent_id"], rec["n_k"],
                             rec["mean_loss"], rec["epsilon"], rec["wall_ms"]))


def write_inference_cdf_csv(path, cdf: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("ms", "cum_frac"))
        writer.writerows(cdf)
