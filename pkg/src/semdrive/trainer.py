"""PPO with generalized advantage estimation and the consistency loss."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .advisor import EMBEDDINGS, Advisor
from .env import DrivingEnv
from .policy import ActorCritic, RunningNorm, entropy, log_prob, sample


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    gamma: float = 0.98
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    entropy_coef: float = 0.05
    value_coef: float = 0.5
    n_epochs: int = 10
    n_steps: int = 1024
    minibatch_size: int = 256
    lambda_cons: float = 0.1
    kappa: float = 1.0
    max_grad_norm: float = 0.5
    total_steps: int = 16384
    seed: int = 0
    checkpoint_interval: int = 0   # updates between checkpoints; 0 = final only

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_range <= 0:
            raise ValueError("clip_range must be > 0")
        if self.lambda_cons < 0:
            raise ValueError("lambda_cons must be >= 0")


@dataclass
class RolloutBuffer:
    observations: np.ndarray      # (n, 18), normalized
    actions: np.ndarray           # (n, 2), raw samples
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    meta_indices: np.ndarray      # (n,)
    embeddings: np.ndarray        # (n, 2)
    bootstrap_value: float
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_stats: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward GAE recursion; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("rewards, values, dones must have equal length")
    n = len(rewards)
    advantages = np.zeros(n)
    gae = 0.0
    next_value = bootstrap_value
    for t in range(n - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        gae = delta + gamma * lam * not_done * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def consistency_loss(
    action_mean: torch.Tensor, meta_index: torch.Tensor, kappa: float = 1.0
) -> torch.Tensor:
    """Softmax-contrastive alignment of actions with meta-action embeddings.

    For each sample: -log softmax(kappa * Omega a)[j], over the five
    canonical embeddings. Returns the per-sample loss vector.
    """
    omega = torch.from_numpy(EMBEDDINGS)
    if action_mean.dim() == 1:
        action_mean = action_mean.unsqueeze(0)
    idx = torch.as_tensor(meta_index, dtype=torch.long).reshape(-1)
    if torch.any(idx < 0) or torch.any(idx >= len(omega)):
        raise IndexError("meta index out of range")
    logits = kappa * action_mean @ omega.T
    return -torch.log_softmax(logits, dim=-1).gather(1, idx.unsqueeze(1)).squeeze(1)


def ppo_loss(
    batch: dict[str, torch.Tensor], model: ActorCritic, config: TrainConfig
) -> tuple[torch.Tensor, dict]:
    """Clipped-surrogate PPO loss with value and entropy terms."""
    mean, std, value = model(batch["observations"])
    new_log_prob = log_prob(mean, std, batch["actions"])
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std(unbiased=False) + 1e-8)
    ratio = torch.exp(new_log_prob - batch["log_probs"])
    unclipped = ratio * adv
    clipped = torch.clamp(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range) * adv
    policy_term = -torch.min(unclipped, clipped).mean()
    value_term = config.value_coef * ((value - batch["returns"]) ** 2).mean()
    ent = entropy(std).mean()
    loss = policy_term + value_term - config.entropy_coef * ent
    with torch.no_grad():
        stats = {
            "policy_loss": float(policy_term),
            "value_loss": float(value_term),
            "entropy": float(ent),
            "clip_fraction": float((torch.abs(ratio - 1.0) > config.clip_range).double().mean()),
            "approx_kl": float((batch["log_probs"] - new_log_prob).mean()),
        }
    return loss, stats


def total_loss(
    batch: dict[str, torch.Tensor], model: ActorCritic, config: TrainConfig
) -> tuple[torch.Tensor, dict]:
    """PPO loss plus the weighted mean consistency term."""
    loss, stats = ppo_loss(batch, model, config)
    if config.lambda_cons > 0.0:
        mean, _, _ = model(batch["observations"])
        cons = consistency_loss(mean, batch["meta_indices"], config.kappa).mean()
        loss = loss + config.lambda_cons * cons
        stats["consistency"] = float(cons.detach())
    else:
        stats["consistency"] = 0.0
    return loss, stats


class EnvironmentFault(RuntimeError):
    """An environment raised mid-rollout; carries the partial buffer size."""

    def __init__(self, message: str, collected: int):
        super().__init__(f"{message} (after {collected} transitions)")
        self.collected = collected


def collect_rollout(
    env: DrivingEnv,
    model: ActorCritic,
    advisor: Advisor,
    config: TrainConfig,
    norm: RunningNorm,
    rng: np.random.Generator,
    episode_state: dict | None = None,
) -> RolloutBuffer:
    """Gather exactly n_steps transitions, auto-resetting on episode end.

    ``episode_state`` carries the running episode accumulators across
    rollout boundaries so training curves reflect full episodes.
    """
    n = config.n_steps
    obs_buf = np.zeros((n, norm.mean.shape[0]))
    act_buf = np.zeros((n, 2))
    logp_buf = np.zeros(n)
    val_buf = np.zeros(n)
    rew_buf = np.zeros(n)
    done_buf = np.zeros(n)
    meta_buf = np.zeros(n, dtype=int)
    emb_buf = np.zeros((n, 2))
    stats: list[dict] = []

    st = episode_state if episode_state is not None else {}
    if "reward" not in st:
        st.update({"reward": 0.0, "speed_sum": 0.0, "steps": 0, "distance": 0.0})
        env.reset()
        advisor.reset()

    model.eval()
    for i in range(n):
        try:
            snapshot = env.snapshot
            meta, omega, _ = advisor.advise(snapshot, env.elapsed)
            raw_obs = env.observe(meta)
            norm.update(raw_obs)
            obs = norm.normalize(raw_obs)
            with torch.no_grad():
                mean_t, std_t, value_t = model(torch.from_numpy(obs))
            mean = mean_t.numpy()
            std = std_t.numpy()
            action = sample(mean, std, rng)
            logp = float(
                log_prob(mean_t, std_t, torch.from_numpy(action))
            )
            applied = np.clip(action, -1.0, 1.0)
            prev_pos = (snapshot.ego.x, snapshot.ego.y)
            result = env.step((applied[0], applied[1]))
        except Exception as exc:  # noqa: BLE001 - diagnostic contract
            raise EnvironmentFault(str(exc), i) from exc

        obs_buf[i] = obs
        act_buf[i] = action
        logp_buf[i] = logp
        val_buf[i] = float(value_t)
        rew_buf[i] = result.reward.total
        meta_buf[i] = int(meta)
        emb_buf[i] = omega
        done = result.terminal is not None
        done_buf[i] = float(done)

        ego = result.snapshot.ego
        st["reward"] += result.reward.total
        st["speed_sum"] += ego.speed * 3.6
        st["steps"] += 1
        st["distance"] += math.hypot(ego.x - prev_pos[0], ego.y - prev_pos[1])

        if done:
            stats.append(
                {
                    "episode_reward": st["reward"],
                    "mean_speed_kmh": st["speed_sum"] / max(st["steps"], 1),
                    "survived_distance": st["distance"],
                    "length": st["steps"],
                    "terminal": result.terminal.value,
                }
            )
            st.update({"reward": 0.0, "speed_sum": 0.0, "steps": 0, "distance": 0.0})
            env.reset()
            advisor.reset()

    # bootstrap from the state after the last transition, using the cached meta
    last_obs = norm.normalize(env.observe(advisor_peek(advisor)))
    with torch.no_grad():
        _, _, boot = model(torch.from_numpy(last_obs))

    buf = RolloutBuffer(
        observations=obs_buf,
        actions=act_buf,
        log_probs=logp_buf,
        values=val_buf,
        rewards=rew_buf,
        dones=done_buf,
        meta_indices=meta_buf,
        embeddings=emb_buf,
        bootstrap_value=float(boot),
        episode_stats=stats,
    )
    buf.advantages, buf.returns = compute_gae(
        rew_buf, val_buf, done_buf, float(boot), config.gamma, config.gae_lambda
    )
    return buf


def advisor_peek(advisor: Advisor):
    """Currently cached meta-action without triggering a query."""
    return advisor._meta


def update(
    model: ActorCritic,
    optimizer: torch.optim.Optimizer,
    buffer: RolloutBuffer,
    config: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    """n_epochs of shuffled-minibatch steps; returns averaged stats."""
    if buffer.advantages is None or buffer.returns is None:
        raise ValueError("buffer advantages not computed")
    n = len(buffer)
    tensors = {
        "observations": torch.from_numpy(buffer.observations),
        "actions": torch.from_numpy(buffer.actions),
        "log_probs": torch.from_numpy(buffer.log_probs),
        "advantages": torch.from_numpy(buffer.advantages),
        "returns": torch.from_numpy(buffer.returns),
        "meta_indices": torch.from_numpy(buffer.meta_indices),
    }
    model.train()
    agg: dict[str, float] = {}
    count = 0
    for _ in range(config.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            batch = {k: v[idx] for k, v in tensors.items()}
            loss, stats = total_loss(batch, model, config)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss during update (stats so far: {stats})"
                )
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            optimizer.step()
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            agg["loss"] = agg.get("loss", 0.0) + float(loss.detach())
            count += 1
    return {k: v / count for k, v in agg.items()}


CURVE_COLUMNS = [
    "step",
    "episode_reward",
    "speed",
    "survived_distance",
    "loss",
    "policy_loss",
    "value_loss",
    "entropy",
    "consistency",
    "clip_fraction",
    "approx_kl",
]


def train(
    env: DrivingEnv,
    advisor: Advisor,
    config: TrainConfig,
    out_dir: str | Path,
    curves_name: str = "curves.csv",
    checkpoint_name: str = "checkpoint.npz",
    checkpoint_extra: dict | None = None,
) -> tuple[ActorCritic, RunningNorm]:
    """Full training run: rollouts, updates, CSV curves, checkpoints."""
    from .policy import init_params, save_checkpoint

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    model = init_params(config.seed)
    norm = RunningNorm()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    rng = np.random.default_rng(config.seed)
    episode_state: dict = {}

    n_updates = max(1, config.total_steps // config.n_steps)
    last = {"episode_reward": 0.0, "mean_speed_kmh": 0.0, "survived_distance": 0.0}
    with open(out_dir / curves_name, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for u in range(1, n_updates + 1):
            buffer = collect_rollout(env, model, advisor, config, norm, rng, episode_state)
            stats = update(model, optimizer, buffer, config, rng)
            if buffer.episode_stats:
                for key in ("episode_reward", "mean_speed_kmh", "survived_distance"):
                    last[key] = float(
                        np.mean([s[key] for s in buffer.episode_stats])
                    )
            row = [
                u * config.n_steps,
                last["episode_reward"],
                last["mean_speed_kmh"],
                last["survived_distance"],
                stats.get("loss", 0.0),
                stats.get("policy_loss", 0.0),
                stats.get("value_loss", 0.0),
                stats.get("entropy", 0.0),
                stats.get("consistency", 0.0),
                stats.get("clip_fraction", 0.0),
                stats.get("approx_kl", 0.0),
            ]
            writer.writerow([_fmt(v) for v in row])
            if config.checkpoint_interval and u % config.checkpoint_interval == 0:
                save_checkpoint(out_dir / f"checkpoint_{u:04d}.npz", model, norm, checkpoint_extra)
    save_checkpoint(out_dir / checkpoint_name, model, norm, checkpoint_extra)
    return model, norm


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return f"{v:.10g}"
