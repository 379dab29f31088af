"""Group-fair contextual bandits: policies, simulator and experiment harness."""
from .core import (BanditInstance, ConfigError, GroupPartition, RoundOutcome, Slate,
                   SyntheticConfig, generate_instance, observed_reward, round_regrets,
                   sample_slate, true_reward)
from .experiments import (ExperimentConfig, Trajectory, cumulative_regret, figure_preset,
                          run_trial, sensitive_pull_fraction, sweep)
from .policies import POLICIES, Decision, PolicyConfig, make_policy

__version__ = "0.1.0"

__all__ = [
    "BanditInstance", "ConfigError", "GroupPartition", "RoundOutcome", "Slate",
    "SyntheticConfig", "generate_instance", "observed_reward", "round_regrets",
    "sample_slate", "true_reward", "ExperimentConfig", "Trajectory", "cumulative_regret",
    "figure_preset", "run_trial", "sensitive_pull_fraction", "sweep", "POLICIES",
    "Decision", "PolicyConfig", "make_policy",
]
