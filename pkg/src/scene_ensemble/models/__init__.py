"""The three classifiers, their weighted ensemble, training and checkpoints."""

from .architectures import (
    BUILDERS, MODEL_NAMES, NUM_CLASSES, ArchitectureDescriptor, Model, build_cnn1d,
    build_cnn2d, build_lstm, build_model, cnn1d_descriptor, cnn2d_descriptor,
    lstm_descriptor, predict,
)
from .checkpoint import (
    CheckpointShapeError, ContainerError, CorruptContainerError, ModelCheckpoint,
    UnsupportedVersionError, load_checkpoint, read_container, save_checkpoint,
    write_container,
)
from .ensemble import EnsembleWeights, ensemble_predict
from .training import TrainConfig, TrainingDivergedError, TrainResult, train_model, write_log_csv

__all__ = [
    "BUILDERS", "MODEL_NAMES", "NUM_CLASSES", "ArchitectureDescriptor", "CheckpointShapeError",
    "ContainerError", "CorruptContainerError", "EnsembleWeights", "Model", "ModelCheckpoint",
    "TrainConfig", "TrainResult", "TrainingDivergedError", "UnsupportedVersionError",
    "build_cnn1d", "build_cnn2d", "build_lstm", "build_model", "cnn1d_descriptor",
    "cnn2d_descriptor", "ensemble_predict", "load_checkpoint", "lstm_descriptor", "predict",
    "read_container", "save_checkpoint", "train_model", "write_container", "write_log_csv",
]
