"""Actor-critic network, Gaussian action head, checkpoint I/O.

Everything runs in float64 on CPU: the networks are tiny and double
precision keeps finite-difference gradient checks and replay exactness
unproblematic.
"""

from __future__ import annotations

import io
import json
import math

import numpy as np
import torch
from torch import nn

from .mdpcore import OBS_DIM

ACTION_DIM = 2
EXTRACTOR_DIM = 256
TRUNK_DIMS = (500, 300)
LOG_STD_INIT = -0.5
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HIDDEN_GAIN = 1.414
HEAD_GAIN = 0.01

CHECKPOINT_VERSION = 1

torch.set_default_dtype(torch.float64)


def _mlp(dims: list[int], gain: float, head_gain: float | None = None) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        lin = nn.Linear(a, b)
        last = i == len(dims) - 2
        g = head_gain if (last and head_gain is not None) else gain
        nn.init.orthogonal_(lin.weight, gain=g)
        nn.init.zeros_(lin.bias)
        layers.append(lin)
        if not last or head_gain is None:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    """Shared feature extractor with separate actor and critic trunks."""

    def __init__(self):
        super().__init__()
        self.extractor = _mlp([OBS_DIM, EXTRACTOR_DIM], HIDDEN_GAIN)
        self.actor = _mlp([EXTRACTOR_DIM, *TRUNK_DIMS], HIDDEN_GAIN)
        self.mean_head = _mlp([TRUNK_DIMS[-1], ACTION_DIM], HIDDEN_GAIN, head_gain=HEAD_GAIN)
        self.critic = _mlp([EXTRACTOR_DIM, *TRUNK_DIMS], HIDDEN_GAIN)
        self.value_head = _mlp([TRUNK_DIMS[-1], 1], HIDDEN_GAIN, head_gain=HEAD_GAIN)
        self.log_std = nn.Parameter(torch.full((ACTION_DIM,), LOG_STD_INIT))

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (mean in [-1,1]^2, std, value)."""
        if obs.shape[-1] != OBS_DIM:
            raise ValueError(f"observation must have {OBS_DIM} entries, got {obs.shape[-1]}")
        feat = self.extractor(obs)
        mean = torch.tanh(self.mean_head(self.actor(feat)))
        std = torch.exp(self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX))
        value = self.value_head(self.critic(feat)).squeeze(-1)
        return mean, std.expand_as(mean), value


def init_params(seed: int) -> ActorCritic:
    """Deterministic network initialization."""
    torch.manual_seed(seed)
    return ActorCritic()


_LOG_2PI = math.log(2.0 * math.pi)


def log_prob(mean: torch.Tensor, std: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
    """Diagonal-Gaussian log density, summed over action dimensions."""
    var = std ** 2
    return (-0.5 * ((action - mean) ** 2 / var + _LOG_2PI) - torch.log(std)).sum(-1)


def entropy(std: torch.Tensor) -> torch.Tensor:
    return (0.5 * (1.0 + _LOG_2PI) + torch.log(std)).sum(-1)


def sample(mean: np.ndarray, std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw a raw (unclipped) action via per-dimension standard normals."""
    return mean + std * rng.standard_normal(mean.shape)


class RunningNorm:
    """Running mean/std observation normalizer (Welford), freezable."""

    def __init__(self, dim: int = OBS_DIM, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.count = 0
        self.eps = eps
        self.frozen = False

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.sqrt(self.m2 / self.count) + self.eps

    def update(self, obs: np.ndarray) -> None:
        if self.frozen:
            return
        self.count += 1
        delta = obs - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (obs - self.mean)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.mean) / self.std

    def state(self) -> dict:
        return {"mean": self.mean, "m2": self.m2, "count": self.count}

    def load_state(self, state: dict) -> None:
        self.mean = np.asarray(state["mean"], dtype=float)
        self.m2 = np.asarray(state["m2"], dtype=float)
        self.count = int(state["count"])


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: ActorCritic, norm: RunningNorm, extra: dict | None = None) -> None:
    """Write the parameter tensors plus a manifest to a single npz file."""
    arrays = {f"param/{name}": p.detach().numpy() for name, p in model.named_parameters()}
    arrays["norm/mean"] = norm.mean
    arrays["norm/m2"] = norm.m2
    manifest = {
        "version": CHECKPOINT_VERSION,
        "layers": [
            {"name": name, "shape": list(p.shape)} for name, p in model.named_parameters()
        ],
        "norm_count": norm.count,
        "extra": extra or {},
    }
    arrays["manifest"] = np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ActorCritic, RunningNorm, dict]:
    try:
        data = np.load(path)
        manifest = json.loads(bytes(data["manifest"]).decode())
    except Exception as exc:
        raise CheckpointError(f"checkpoint does not parse: {exc}") from exc
    version = manifest.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} unsupported (expected {CHECKPOINT_VERSION})"
        )
    model = ActorCritic()
    state = {}
    for layer in manifest["layers"]:
        key = f"param/{layer['name']}"
        if key not in data:
            raise CheckpointError(f"checkpoint missing tensor {layer['name']}")
        arr = data[key]
        if list(arr.shape) != layer["shape"]:
            raise CheckpointError(f"tensor {layer['name']} has shape {list(arr.shape)}, "
                                  f"manifest says {layer['shape']}")
        state[layer["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    norm = RunningNorm()
    norm.load_state({"mean": data["norm/mean"], "m2": data["norm/m2"],
                     "count": manifest["norm_count"]})
    norm.frozen = True
    return model, norm, manifest.get("extra", {})
