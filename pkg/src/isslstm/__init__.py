"""Stacked LSTM identification with an infinity-norm input-to-state
stability certificate, plus a synthetic two-zone thermal plant to train on."""

from ._kernels import backend
from .iss import IssReport, UnstableLayerError, network_condition
from .lstm import ArchitectureSpec, LayerParams, NetworkParams, forward, init_params, simulate
from .numerics import DomainError
from .training import NoStableCheckpoint, TrainConfig, TrainOutcome, train

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec", "DomainError", "IssReport", "LayerParams", "NetworkParams", "NoStableCheckpoint",
    "TrainConfig", "TrainOutcome", "UnstableLayerError", "backend", "forward", "init_params",
    "network_condition", "simulate", "train",
]
