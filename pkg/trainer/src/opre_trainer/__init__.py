"""Train a small CNN from scratch on exported compressed datasets."""

from .data import (
    DataFormatError,
    check_provenance,
    filter_classes,
    load_test_set,
    read_cifar_test,
    read_export,
)
from .model import SimpleNet, build_model, parameter_bytes
from .train import TrainConfig, TrainingDiverged, evaluate_model, train_and_eval

__version__ = "0.1.0"
