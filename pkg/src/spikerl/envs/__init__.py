from .base import Environment
from .pendulum import (
    InvertedPendulum,
    PendulumParams,
    PendulumState,
    pendulum_reset,
    pendulum_reward,
    pendulum_step,
    plane_energy,
)
from .sonar import (
    SonarDataset,
    SonarLabel,
    SonarParseError,
    SonarTask,
    SonarTaskConfig,
    parse_sonar,
    split_dataset,
)

__all__ = [
    "Environment",
    "InvertedPendulum",
    "PendulumParams",
    "PendulumState",
    "pendulum_reset",
    "pendulum_reward",
    "pendulum_step",
    "plane_energy",
    "SonarDataset",
    "SonarLabel",
    "SonarParseError",
    "SonarTask",
    "SonarTaskConfig",
    "parse_sonar",
    "split_dataset",
]
