"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evalharness import EpisodeLog, HIGHER_IS_BETTER, METRIC_NAMES, ComparisonTable
from .simworld import WorldMap


def plot_training_curves(curves_csv: str | Path, out_path: str | Path) -> Path:
    """Three-panel training figure: episode reward, speed, survived distance."""
    with open(curves_csv) as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    panels = [
        ("episode_reward", "Episode Reward"),
        ("speed", "Speed (km/h)"),
        ("survived_distance", "Survived distance (m)"),
    ]
    for ax, (col, title) in zip(axes, panels):
        ax.plot(steps, [float(r[col]) for r in rows])
        ax.set_title(title)
        ax.set_xlabel("environment steps")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_trajectory(
    log: EpisodeLog, world_map: WorldMap, out_path: str | Path, title: str = ""
) -> Path:
    """Top-down trajectory over the map geometry."""
    fig, ax = plt.subplots(figsize=(7, 6))
    for lane in world_map.lanes:
        ax.plot(lane[:, 0], lane[:, 1], color="0.8", lw=6, solid_capstyle="round", zorder=0)
    route = world_map.routes[log.route_index]
    ax.plot(route[:, 0], route[:, 1], "k--", lw=0.8, label="route")
    pts = ax.scatter(log.x, log.y, c=log.speed_kmh, s=6, cmap="viridis", label="ego")
    fig.colorbar(pts, ax=ax, label="speed (km/h)")
    for spec in world_map.object_spawns:
        marker = "s" if spec.kind == "vehicle" else "o"
        ax.plot(spec.x, spec.y, marker, color="tab:red", ms=6)
    ax.set_aspect("equal")
    ax.set_title(title or f"{log.map_id} route {log.route_index} ({log.terminal.value})")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_comparison(table: ComparisonTable, out_path: str | Path, title: str = "") -> Path:
    """Grouped bars, one panel per metric, best bar hatched."""
    fig, axes = plt.subplots(2, 5, figsize=(15, 5.5))
    for ax, metric in zip(axes.ravel(), METRIC_NAMES):
        values = [rep.as_dict()[metric] for rep in table.reports]
        xs = np.arange(len(table.names))
        bars = ax.bar(xs, values, color="tab:blue")
        for bar, name in zip(bars, table.names):
            if name in table.best[metric]:
                bar.set_color("tab:green")
        arrow = "↑" if metric in HIGHER_IS_BETTER else "↓"
        ax.set_title(f"{metric} ({arrow})")
        ax.set_xticks(xs)
        ax.set_xticklabels(table.names, rotation=30, fontsize=8)
        ax.grid(axis="y", alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
