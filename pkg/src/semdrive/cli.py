"""Operator entry point: train, evaluate, benchmark, and replay."""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

import numpy as np
import torch

from . import plots, simworld
from .advisor import Advisor
from .config import (
    AGENTS,
    ConfigError,
    RunConfig,
    load_config,
    normalize_map_id,
    save_resolved,
)
from .env import DrivingEnv
from .evalharness import (
    METRIC_NAMES,
    MetricsReport,
    compare,
    compute_metrics,
    load_episode_log,
    replay_episode,
    run_episodes,
    save_episode_log,
    write_report_csv,
    write_report_text,
)
from .policy import CheckpointError, load_checkpoint
from .trainer import train


def _setup_determinism() -> None:
    torch.set_num_threads(1)


def cmd_train(config: RunConfig, out_dir: Path) -> int:
    _setup_determinism()
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved(config, out_dir / "resolved_config.json")
    world_map = simworld.load_bundled_map(config.map_id)
    env = DrivingEnv(world_map, config.reward, max_steps=config.episode_max_steps)
    advisor = Advisor(config.resolved_advisor())
    extra = {"agent": config.agent, "map_id": config.map_id, "seed": config.seed}
    train(env, advisor, config.resolved_train(), out_dir, checkpoint_extra=extra)
    plots.plot_training_curves(out_dir / "curves.csv", out_dir / "curves.png")
    print(f"training complete: {out_dir}/curves.csv, checkpoint.npz")
    return 0


def cmd_eval(
    checkpoint: str,
    map_id: str,
    episodes: int,
    seed: int,
    out_dir: Path,
    config: RunConfig,
) -> int:
    _setup_determinism()
    model, norm, extra = load_checkpoint(checkpoint)
    agent = extra.get("agent", config.agent)
    advisor_cfg = config.resolved_advisor()
    advisor_cfg.backend = AGENTS.get(agent, AGENTS[config.agent])["backend"]
    world_map = simworld.load_bundled_map(map_id)
    logs = run_episodes(
        model, norm, world_map, advisor_cfg, n=episodes, seed=seed,
        reward_params=config.reward, max_steps=config.episode_max_steps,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    episodes_dir = out_dir / "episodes"
    episodes_dir.mkdir(exist_ok=True)
    for i, log in enumerate(logs):
        save_episode_log(log, episodes_dir / f"episode_{i:03d}.csv")
    report = compute_metrics(logs)
    write_report_csv(report, out_dir / "metrics.csv")
    write_report_text(report, out_dir / "metrics.txt")
    plots.plot_trajectory(logs[0], world_map, out_dir / "trajectory.png")
    print(f"evaluated {episodes} episodes on {map_id}: SR={report.SR:.2f} RC={report.RC:.2f}")
    print(f"reports in {out_dir}")
    return 0


def _bench_cell(config: RunConfig, agent: str, seed: int, bench_dir: Path) -> dict:
    """Train one (agent, seed) cell and evaluate on both maps; resumable."""
    import dataclasses

    cell_dir = bench_dir / f"{agent}_s{seed}"
    marker = cell_dir / "done.json"
    if marker.exists():
        return json.loads(marker.read_text())

    cell_cfg = dataclasses.replace(config, agent=agent, seed=seed)
    cmd_train(cell_cfg, cell_dir)
    result: dict = {"agent": agent, "seed": seed}
    for map_id in ("map_seen", "map_unseen"):
        eval_dir = cell_dir / f"eval_{map_id}"
        cmd_eval(
            str(cell_dir / "checkpoint.npz"), map_id, config.eval_episodes,
            seed + 1000, eval_dir, cell_cfg,
        )
        with open(eval_dir / "metrics.csv") as fh:
            row = list(csv.DictReader(fh))[0]
        result[map_id] = {m: float(row[m]) for m in METRIC_NAMES}
    marker.write_text(json.dumps(result, indent=2))
    return result


def cmd_bench(config: RunConfig, out_dir: Path) -> int:
    _setup_determinism()
    if len(config.bench_agents) < 2:
        print("error: bench comparison needs >= 2 agents", file=sys.stderr)
        return 2
    if not config.bench_seeds:
        print("error: bench needs >= 1 seed", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved(config, out_dir / "resolved_config.json")

    cells = []
    for agent in config.bench_agents:
        for seed in config.bench_seeds:
            print(f"=== bench cell: agent={agent} seed={seed}")
            cells.append(_bench_cell(config, agent, seed, out_dir))

    summary: dict = {"agents": {}, "seeds": config.bench_seeds}
    for map_id in ("map_seen", "map_unseen"):
        named = []
        per_seed_rows = []
        for agent in config.bench_agents:
            agent_cells = [c for c in cells if c["agent"] == agent]
            medians = {
                m: statistics.median(c[map_id][m] for c in agent_cells)
                for m in METRIC_NAMES
            }
            named.append((agent, MetricsReport(**medians)))
            summary["agents"].setdefault(agent, {})[map_id] = medians
            for c in agent_cells:
                per_seed_rows.append([agent, c["seed"]] + [c[map_id][m] for m in METRIC_NAMES])
        table = compare(named)
        table.write_csv(out_dir / f"comparison_{map_id}.csv")
        (out_dir / f"comparison_{map_id}.txt").write_text(table.render_text() + "\n")
        plots.plot_comparison(table, out_dir / f"comparison_{map_id}.png",
                              title=f"median over {len(config.bench_seeds)} seeds, {map_id}")
        with open(out_dir / f"per_seed_{map_id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent", "seed"] + METRIC_NAMES)
            writer.writerows(per_seed_rows)
        print(f"--- {map_id} (medians over seeds)")
        print(table.render_text())

    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"benchmark outputs in {out_dir}")
    return 0


def cmd_replay(log_path: str, out_dir: Path) -> int:
    try:
        log = load_episode_log(log_path)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: cannot load episode log: {exc}", file=sys.stderr)
        return 2
    divergence = replay_episode(log)
    if divergence is not None:
        print(
            f"replay DIVERGED at step {divergence.step}: {divergence.field_name} "
            f"logged {divergence.logged!r} vs replayed {divergence.replayed!r}",
            file=sys.stderr,
        )
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = out_dir / "trajectory.csv"
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "heading", "speed_kmh", "lateral", "reward"])
        for i in range(len(log)):
            writer.writerow([log.t[i], log.x[i], log.y[i], log.heading[i],
                             log.speed_kmh[i], log.lateral[i], log.reward[i]])
    world_map = simworld.load_bundled_map(log.map_id)
    plots.plot_trajectory(log, world_map, out_dir / "trajectory.png")
    print(f"replay verified: {len(log)} steps, terminal={log.terminal.value}")
    print(f"trajectory written to {traj_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semdrive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_map=True):
        p.add_argument("--config", help="JSON run-config file")
        p.add_argument("--agent", choices=sorted(AGENTS))
        p.add_argument("--preset", choices=["paper", "desk"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (default: $COVLM_OUT_DIR or ./runs)")
        if with_map:
            p.add_argument("--map", choices=["seen", "unseen"])

    p_train = sub.add_parser("train", help="train one agent")
    common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int)

    p_bench = sub.add_parser("bench", help="train and compare agents across seeds")
    common(p_bench, with_map=False)

    p_replay = sub.add_parser("replay", help="verify and re-render an episode log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return cmd_replay(args.log, Path(args.out or "replay_out"))

    overrides = {
        "agent": args.agent,
        "preset": args.preset,
        "seed": args.seed,
        "out_dir": args.out,
    }
    if getattr(args, "map", None):
        overrides["map_id"] = normalize_map_id(args.map)
    if getattr(args, "episodes", None):
        overrides["eval_episodes"] = args.episodes
    try:
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(config.out_dir)
    try:
        if args.command == "train":
            return cmd_train(config, out_dir)
        if args.command == "eval":
            return cmd_eval(
                args.checkpoint, config.map_id, config.eval_episodes,
                config.seed, out_dir, config,
            )
        if args.command == "bench":
            return cmd_bench(config, out_dir)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except simworld.MapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
