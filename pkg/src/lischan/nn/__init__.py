"""From-scratch convolutional regressor (ChannelNet) in numpy."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_gradients
from .layers import LayerSpec, channelnet_preset
from .network import Network, ShapeError, StaleActivationsError, backward, build_network, forward, loss
from .predict import predict_channel
from .train import EarlyStopping, TrainConfig, TrainingDivergedError, sgd_step, train

__all__ = [
    "EarlyStopping",
    "LayerSpec",
    "Network",
    "ShapeError",
    "StaleActivationsError",
    "TrainConfig",
    "TrainingDivergedError",
    "backward",
    "build_network",
    "channelnet_preset",
    "check_gradients",
    "forward",
    "load_checkpoint",
    "loss",
    "numerical_gradients",
    "predict_channel",
    "save_checkpoint",
    "sgd_step",
    "train",
]
