"""Figure rendering smoke tests."""

import csv

import pytest

from semdrive.evalharness import EpisodeLog, compare, compute_metrics
from semdrive.mdpcore import TerminationReason
from semdrive.plots import plot_comparison, plot_trajectory, plot_training_curves
from semdrive.simworld import load_bundled_map
from semdrive.trainer import CURVE_COLUMNS


def test_plot_training_curves(tmp_path):
    curves = tmp_path / "curves.csv"
    with open(curves, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for i in range(1, 4):
            writer.writerow([i * 1024] + [0.1 * i] * (len(CURVE_COLUMNS) - 1))
    out = plot_training_curves(curves, tmp_path / "curves.png")
    assert out.exists() and out.stat().st_size > 1000


def _log(n=30):
    return EpisodeLog(
        map_id="map_seen", route_index=0, seed=0,
        terminal=TerminationReason.ROUTE_COMPLETE, route_length=160.0,
        t=list(range(1, n + 1)),
        x=[float(5 * i) for i in range(n)], y=[0.0] * n, heading=[0.0] * n,
        speed_kmh=[10.0 + i for i in range(n)], lateral=[0.1] * n,
        reward=[1.0] * n, meta=[4] * n, throttle=[0.5] * n, steering=[0.0] * n,
        distance=150.0, progress=150.0,
    )


def test_plot_trajectory(tmp_path):
    out = plot_trajectory(_log(), load_bundled_map("map_seen"), tmp_path / "traj.png")
    assert out.exists() and out.stat().st_size > 1000


def test_plot_comparison(tmp_path):
    a = compute_metrics([_log()])
    bad = _log()
    bad.terminal = TerminationReason.COLLISION
    b = compute_metrics([bad])
    table = compare([("a", a), ("b", b)])
    out = plot_comparison(table, tmp_path / "cmp.png", title="toy")
    assert out.exists() and out.stat().st_size > 1000
