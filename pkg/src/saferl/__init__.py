"""Safe reinforcement learning for highway lane changes around regret-driven human drivers."""

from .regret import REFERENCE_DRIVER, LaneChangeObservation, LaneDecision, RegretParams, decide

__version__ = "0.1.0"

__all__ = ["REFERENCE_DRIVER", "LaneChangeObservation", "LaneDecision", "RegretParams", "decide", "__version__"]
