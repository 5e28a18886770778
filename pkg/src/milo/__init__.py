"""Model-based offline imitation learning on tabular MDPs."""

__version__ = "0.1.0"
