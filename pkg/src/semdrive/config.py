"""Run configuration: JSON files, presets, and agent variants."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .advisor import AdvisorConfig
from .mdpcore import RewardParams
from .trainer import TrainConfig

OUT_DIR_ENV = "COVLM_OUT_DIR"

# The three agent variants: advisor backend plus whether the
# consistency term is active.
AGENTS = {
    "rl": {"backend": "none", "use_consistency": False},
    "mrl": {"backend": "map_prior", "use_consistency": False},
    "covlm": {"backend": "oracle", "use_consistency": True},
}

PRESETS: dict[str, dict] = {
    # Verbatim published hyperparameters; far too slow for a desk budget.
    "paper": {
        "train": {"learning_rate": 1e-6, "total_steps": 1048576, "lambda_cons": 0.1},
        "episode_max_steps": 2000,
        "eval_episodes": 10,
    },
    # Minutes-scale CPU preset used by the bundled benchmark.
    "desk": {
        "train": {"learning_rate": 3e-4, "total_steps": 32768, "lambda_cons": 0.5},
        "episode_max_steps": 900,
        "eval_episodes": 10,
    },
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key path."""


@dataclass
class RunConfig:
    map_id: str = "map_seen"
    agent: str = "covlm"
    preset: str = "desk"
    seed: int = 0
    eval_episodes: int = 10
    episode_max_steps: int = 900
    out_dir: str = "runs"
    advisor: AdvisorConfig = field(default_factory=AdvisorConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    # bench-only
    bench_agents: list[str] = field(default_factory=lambda: ["rl", "mrl", "covlm"])
    bench_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def resolved_advisor(self) -> AdvisorConfig:
        """Advisor config with the agent variant's backend applied."""
        cfg = dataclasses.replace(self.advisor)
        cfg.backend = AGENTS[self.agent]["backend"]
        return cfg

    def resolved_train(self) -> TrainConfig:
        cfg = dataclasses.replace(self.train, seed=self.seed)
        if not AGENTS[self.agent]["use_consistency"]:
            cfg.lambda_cons = 0.0
        return cfg

    def to_dict(self) -> dict:
        return {
            "map_id": self.map_id,
            "agent": self.agent,
            "preset": self.preset,
            "seed": self.seed,
            "eval_episodes": self.eval_episodes,
            "episode_max_steps": self.episode_max_steps,
            "out_dir": self.out_dir,
            "advisor": _advisor_dict(self.advisor),
            "reward": dataclasses.asdict(self.reward),
            "train": dataclasses.asdict(self.train),
            "bench_agents": self.bench_agents,
            "bench_seeds": self.bench_seeds,
        }


def _advisor_dict(cfg: AdvisorConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["fallback"] = cfg.fallback.name
    return d


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    preset_name = data.pop("preset", "desk")
    if preset_name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset_name!r} (have {sorted(PRESETS)})")
    merged = _merge(PRESETS[preset_name], data)

    agent = merged.get("agent", "covlm")
    if agent not in AGENTS:
        raise ConfigError(f"agent: unknown agent {agent!r} (have {sorted(AGENTS)})")
    map_id = normalize_map_id(merged.get("map_id", "map_seen"))

    advisor_data = dict(merged.get("advisor", {}))
    if "fallback" in advisor_data and isinstance(advisor_data["fallback"], str):
        from .advisor import MetaAction

        try:
            advisor_data["fallback"] = MetaAction[advisor_data["fallback"]]
        except KeyError as exc:
            raise ConfigError(f"advisor.fallback: unknown meta-action {advisor_data['fallback']!r}") from exc
    advisor_cfg = _build_section(AdvisorConfig, advisor_data, "advisor")
    reward_cfg = _build_section(RewardParams, dict(merged.get("reward", {})), "reward")
    train_cfg = _build_section(TrainConfig, dict(merged.get("train", {})), "train")

    out_dir = merged.get("out_dir") or os.environ.get(OUT_DIR_ENV, "runs")

    def _int(key, default):
        value = merged.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value

    seed = _int("seed", 0)
    cfg = RunConfig(
        map_id=map_id,
        agent=agent,
        preset=preset_name,
        seed=seed,
        eval_episodes=_int("eval_episodes", 10),
        episode_max_steps=_int("episode_max_steps", 900),
        out_dir=str(out_dir),
        advisor=advisor_cfg,
        reward=reward_cfg,
        train=train_cfg,
        bench_agents=list(merged.get("bench_agents", ["rl", "mrl", "covlm"])),
        bench_seeds=[int(s) for s in merged.get("bench_seeds", [0, 1, 2, 3, 4])],
    )
    for a in cfg.bench_agents:
        if a not in AGENTS:
            raise ConfigError(f"bench_agents: unknown agent {a!r}")
    return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config does not parse: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def normalize_map_id(name: str) -> str:
    aliases = {"seen": "map_seen", "unseen": "map_unseen"}
    name = aliases.get(name, name)
    if name not in ("map_seen", "map_unseen"):
        raise ConfigError(f"map_id: unknown map {name!r}")
    return name


def save_resolved(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
