"""Flow matching for count data with local birth-death processes."""
from .assignment import BACKEND, solve_assignment
from .bridge import EpsilonConfig, bridge_pmf, conditional_rates, sample_bridge
from .net import RateNetwork, count_params, forward, load_checkpoint, save_checkpoint
from .sampler import SampleConfig, simulate
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EpsilonConfig",
    "RateNetwork",
    "SampleConfig",
    "TrainConfig",
    "bridge_pmf",
    "conditional_rates",
    "count_params",
    "forward",
    "load_checkpoint",
    "sample_bridge",
    "save_checkpoint",
    "simulate",
    "solve_assignment",
    "train",
]
