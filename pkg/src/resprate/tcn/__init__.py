"""From-scratch temporal convolutional network: layers, training, model files."""

from .nn import (TcnConfig, TcnModel, build_model, cross_entropy,
                 default_dilations, forward, loss_and_gradients,
                 predict_labels, receptive_field_radius, rescale_symmetric,
                 softmax_probs)
from .serialize import load, save
from .training import Adam, TrainResult, TrainSpec, dataset_loss, make_chunks, train

__all__ = [
    "Adam", "TcnConfig", "TcnModel", "TrainResult", "TrainSpec", "build_model",
    "cross_entropy", "dataset_loss", "default_dilations", "forward", "load",
    "loss_and_gradients", "make_chunks", "predict_labels",
    "receptive_field_radius", "rescale_symmetric", "save", "softmax_probs",
    "train",
]
