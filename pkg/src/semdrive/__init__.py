"""2D driving stack: simulator, semantic advisor, PPO trainer, evaluation."""

from .advisor import Advisor, AdvisorConfig, MetaAction, convert, embedding
from .env import DrivingEnv
from .mdpcore import RewardParams, TerminationReason, compute_reward
from .policy import ActorCritic, RunningNorm, load_checkpoint, save_checkpoint
from .simworld import World, load_bundled_map, load_map
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Advisor",
    "AdvisorConfig",
    "MetaAction",
    "convert",
    "embedding",
    "DrivingEnv",
    "RewardParams",
    "TerminationReason",
    "compute_reward",
    "ActorCritic",
    "RunningNorm",
    "load_checkpoint",
    "save_checkpoint",
    "World",
    "load_bundled_map",
    "load_map",
    "TrainConfig",
    "train",
    "__version__",
]
