"""Adversarial imitation learning with reparameterized f-divergence bounds."""

from .fdiv import DivergenceKind
from .adversary import LossVariant, PairMode, RegConfig
from .imitate import DemoDataset, TrainerConfig, train, train_fvim, train_fvimo
from .policy_opt import PPOConfig, train_expert

__all__ = [
    "DivergenceKind",
    "LossVariant",
    "PairMode",
    "RegConfig",
    "DemoDataset",
    "TrainerConfig",
    "PPOConfig",
    "train",
    "train_fvim",
    "train_fvimo",
    "train_expert",
]
