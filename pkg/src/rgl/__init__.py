"""Recurrent gradient laboratory.

From-scratch recurrent sequence models (canonical/standard RNN, Vanilla and
Augmented LSTM) with explicit Back Propagation Through Time, segmentation and
unrolling, gradient-flow diagnostics, and finite-difference verification.
"""

from . import (
    bptt,
    checkpoint,
    diagnostics,
    kernels,
    lstm_augmented,
    lstm_vanilla,
    numerics,
    rnn,
    segmentation,
    training,
)

__all__ = [
    "numerics",
    "rnn",
    "segmentation",
    "lstm_vanilla",
    "lstm_augmented",
    "bptt",
    "diagnostics",
    "training",
    "kernels",
    "checkpoint",
]

__version__ = "0.1.0"
