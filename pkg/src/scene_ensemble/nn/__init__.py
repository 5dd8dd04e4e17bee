"""Small numpy neural-network engine: the layers the three classifiers need."""

from .kernels import BACKEND
from .layers import (
    Conv1D, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool1D, MaxPool2D,
    MissingCacheError, ReLU, ShapeError, dropout, relu, relu_backward,
)
from .losses import cross_entropy, softmax, softmax_cross_entropy
from .lstm import LSTM, LstmCellState, lstm_cell_step, sigmoid
from .optim import Adam, AdamState, adam_step

__all__ = [
    "BACKEND", "Adam", "AdamState", "Conv1D", "Conv2D", "Dense", "Dropout",
    "Flatten", "LSTM", "Layer", "LstmCellState", "MaxPool1D", "MaxPool2D",
    "MissingCacheError", "ReLU", "ShapeError", "adam_step", "cross_entropy",
    "dropout", "lstm_cell_step", "relu", "relu_backward", "sigmoid", "softmax",
    "softmax_cross_entropy",
]
