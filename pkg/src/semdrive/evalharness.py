"""Evaluation episodes, the ten-metric report, and agent comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import simworld
from .advisor import Advisor, AdvisorConfig, MetaAction
from .env import DrivingEnv
from .mdpcore import RewardParams, TerminationReason
from .policy import ActorCritic, RunningNorm

METRIC_NAMES = ["SR", "TD", "AD", "RC", "SM", "SS", "CDM", "CDS", "RM", "RS"]
HIGHER_IS_BETTER = {"SR", "TD", "AD", "RC", "SM", "RM"}


@dataclass
class EpisodeLog:
    map_id: str
    route_index: int
    seed: int
    terminal: TerminationReason
    route_length: float
    # per-step arrays (aligned; recorded after each step)
    t: list[int] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    heading: list[float] = field(default_factory=list)
    speed_kmh: list[float] = field(default_factory=list)
    lateral: list[float] = field(default_factory=list)
    reward: list[float] = field(default_factory=list)
    meta: list[int] = field(default_factory=list)
    throttle: list[float] = field(default_factory=list)
    steering: list[float] = field(default_factory=list)
    distance: float = 0.0
    progress: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def progress_fraction(self) -> float:
        if self.route_length <= 0:
            return 0.0
        return min(self.progress / self.route_length, 1.0)


@dataclass(frozen=True)
class MetricsReport:
    SR: float
    TD: float
    AD: float
    RC: float
    SM: float
    SS: float
    CDM: float
    CDS: float
    RM: float
    RS: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def run_episodes(
    model: ActorCritic,
    norm: RunningNorm,
    world_map: simworld.WorldMap,
    advisor_config: AdvisorConfig,
    n: int,
    seed: int,
    reward_params: RewardParams | None = None,
    max_steps: int = 2000,
) -> list[EpisodeLog]:
    """Run n deterministic evaluation episodes (mean action, no sampling)."""
    if n < 1:
        raise ValueError("need n >= 1 episodes")
    norm.frozen = True
    model.eval()
    logs = []
    for i in range(n):
        episode_seed = int(np.random.default_rng([seed, i]).integers(2**31 - 1))
        route_index = episode_seed % len(world_map.routes)
        env = DrivingEnv(world_map, reward_params, max_steps=max_steps)
        env.reset(route_index)
        advisor = Advisor(advisor_config)
        logs.append(_run_one(env, model, norm, advisor, episode_seed))
    return logs


def _run_one(
    env: DrivingEnv, model: ActorCritic, norm: RunningNorm, advisor: Advisor, seed: int
) -> EpisodeLog:
    log = EpisodeLog(
        map_id=env.world_map.map_id,
        route_index=env.world.route_index,
        seed=seed,
        terminal=TerminationReason.TIMEOUT,
        route_length=env.route_length,
    )
    while True:
        snapshot = env.snapshot
        meta, _, _ = advisor.advise(snapshot, env.elapsed)
        obs = norm.normalize(env.observe(meta))
        with torch.no_grad():
            mean, _, _ = model(torch.from_numpy(obs))
        action = np.clip(mean.numpy(), -1.0, 1.0)
        prev = (snapshot.ego.x, snapshot.ego.y)
        result = env.step((action[0], action[1]))
        ego = result.snapshot.ego
        log.t.append(env.elapsed)
        log.x.append(ego.x)
        log.y.append(ego.y)
        log.heading.append(ego.heading)
        log.speed_kmh.append(ego.speed * 3.6)
        log.lateral.append(result.snapshot.lateral_offset)
        log.reward.append(result.reward.total)
        log.meta.append(int(meta))
        log.throttle.append(float(action[0]))
        log.steering.append(float(action[1]))
        log.distance += math.hypot(ego.x - prev[0], ego.y - prev[1])
        log.progress = max(log.progress, result.snapshot.progress)
        if result.terminal is not None:
            log.terminal = result.terminal
            return log


def compute_metrics(logs: list[EpisodeLog]) -> MetricsReport:
    """Ten-metric report; step-level quantities are pooled over episodes.

    Standard deviations use the population convention.
    """
    if not logs:
        raise ValueError("no episode logs")
    n = len(logs)
    successes = sum(1 for l in logs if l.terminal == TerminationReason.ROUTE_COMPLETE)
    td = sum(l.distance for l in logs)
    rc = sum(l.progress_fraction for l in logs) / n
    speeds = np.concatenate([np.asarray(l.speed_kmh) for l in logs]) if any(len(l) for l in logs) else np.zeros(1)
    lateral = np.concatenate([np.abs(l.lateral) for l in logs]) if any(len(l) for l in logs) else np.zeros(1)
    rewards = np.concatenate([np.asarray(l.reward) for l in logs]) if any(len(l) for l in logs) else np.zeros(1)
    return MetricsReport(
        SR=successes / n,
        TD=td,
        AD=td / n,
        RC=rc,
        SM=float(np.mean(speeds)),
        SS=float(np.std(speeds)),
        CDM=float(np.mean(lateral)),
        CDS=float(np.std(lateral)),
        RM=float(np.mean(rewards)),
        RS=float(np.std(rewards)),
    )


@dataclass(frozen=True)
class ComparisonTable:
    names: list[str]
    reports: list[MetricsReport]
    best: dict[str, list[str]]    # metric -> agents marked best (ties share)

    def render_text(self) -> str:
        lines = []
        header = f"{'Method':<12}" + "".join(
            f"{m + ('(+)' if m in HIGHER_IS_BETTER else '(-)'): >12}" for m in METRIC_NAMES
        )
        lines.append(header)
        for name, rep in zip(self.names, self.reports):
            cells = []
            for m in METRIC_NAMES:
                val = rep.as_dict()[m]
                mark = "*" if name in self.best[m] else " "
                cells.append(f"{val:>11.3f}{mark}")
            lines.append(f"{name:<12}" + "".join(cells))
        lines.append("(* = best per column; (+) higher is better, (-) lower)")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method"] + METRIC_NAMES + [f"best_{m}" for m in METRIC_NAMES])
            for name, rep in zip(self.names, self.reports):
                row = [name] + [f"{rep.as_dict()[m]:.10g}" for m in METRIC_NAMES]
                row += [int(name in self.best[m]) for m in METRIC_NAMES]
                writer.writerow(row)


def compare(named_reports: list[tuple[str, MetricsReport]]) -> ComparisonTable:
    """Mark the best agent per metric, honoring each metric's direction."""
    if len(named_reports) < 2:
        raise ValueError("comparison needs >= 2 reports")
    names = [n for n, _ in named_reports]
    reports = [r for _, r in named_reports]
    best: dict[str, list[str]] = {}
    for m in METRIC_NAMES:
        values = [r.as_dict()[m] for r in reports]
        target = max(values) if m in HIGHER_IS_BETTER else min(values)
        best[m] = [n for n, v in zip(names, values) if v == target]
    return ComparisonTable(names=names, reports=reports, best=best)


# ---------------------------------------------------------------------------
# Log and report serialization

def write_report_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_NAMES)
        writer.writerow([f"{report.as_dict()[m]:.10g}" for m in METRIC_NAMES])


def write_report_text(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        for m in METRIC_NAMES:
            fh.write(f"{m:>4}: {report.as_dict()[m]:.4f}\n")


LOG_COLUMNS = [
    "t", "x", "y", "heading", "speed_kmh", "lateral", "reward", "meta",
    "throttle", "steering",
]


def save_episode_log(log: EpisodeLog, path) -> None:
    """One CSV per episode, with run metadata in # header lines."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# map_id={log.map_id}\n")
        fh.write(f"# route_index={log.route_index}\n")
        fh.write(f"# seed={log.seed}\n")
        fh.write(f"# terminal={log.terminal.value}\n")
        fh.write(f"# route_length={log.route_length!r}\n")
        fh.write(f"# distance={log.distance!r}\n")
        fh.write(f"# progress={log.progress!r}\n")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for i in range(len(log)):
            writer.writerow(
                [
                    log.t[i],
                    repr(log.x[i]), repr(log.y[i]), repr(log.heading[i]),
                    repr(log.speed_kmh[i]), repr(log.lateral[i]), repr(log.reward[i]),
                    log.meta[i], repr(log.throttle[i]), repr(log.steering[i]),
                ]
            )


def load_episode_log(path) -> EpisodeLog:
    meta: dict[str, str] = {}
    rows = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif line:
            body.append(line)
    if not body or not meta:
        raise ValueError(f"{path}: not an episode log")
    reader = csv.DictReader(body)
    log = EpisodeLog(
        map_id=meta["map_id"],
        route_index=int(meta["route_index"]),
        seed=int(meta["seed"]),
        terminal=TerminationReason(meta["terminal"]),
        route_length=float(meta["route_length"]),
        distance=float(meta["distance"]),
        progress=float(meta["progress"]),
    )
    for row in reader:
        log.t.append(int(row["t"]))
        log.x.append(float(row["x"]))
        log.y.append(float(row["y"]))
        log.heading.append(float(row["heading"]))
        log.speed_kmh.append(float(row["speed_kmh"]))
        log.lateral.append(float(row["lateral"]))
        log.reward.append(float(row["reward"]))
        log.meta.append(int(row["meta"]))
        log.throttle.append(float(row["throttle"]))
        log.steering.append(float(row["steering"]))
    if not log.t:
        raise ValueError(f"{path}: episode log has no steps")
    return log


@dataclass(frozen=True)
class ReplayDivergence:
    step: int
    field_name: str
    logged: float
    replayed: float


def replay_episode(log: EpisodeLog, tolerance: float = 1e-9) -> ReplayDivergence | None:
    """Re-simulate the logged action sequence and compare states per step.

    Returns None on agreement within tolerance, else the first mismatch.
    """
    world_map = simworld.load_bundled_map(log.map_id)
    env = DrivingEnv(world_map, max_steps=len(log) + 1)
    env.reset(log.route_index)
    for i in range(len(log)):
        result = env.step((log.throttle[i], log.steering[i]))
        ego = result.snapshot.ego
        for field_name, logged, replayed in (
            ("x", log.x[i], ego.x),
            ("y", log.y[i], ego.y),
            ("heading", log.heading[i], ego.heading),
            ("speed_kmh", log.speed_kmh[i], ego.speed * 3.6),
        ):
            if abs(logged - replayed) > tolerance:
                return ReplayDivergence(step=i, field_name=field_name,
                                        logged=logged, replayed=replayed)
    return None
