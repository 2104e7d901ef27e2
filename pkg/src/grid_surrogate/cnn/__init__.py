from .layers import conv1d_backward, conv1d_forward, global_avg_pool, maxpool1d
from .model import CnnArch, CnnModel, backward, forward, init_params, load_model, predict, save_model
from .train import TrainSettings, canonical_order, train

__all__ = ["CnnArch", "CnnModel", "TrainSettings", "backward", "canonical_order", "conv1d_backward",
           "conv1d_forward", "forward", "global_avg_pool", "init_params", "load_model", "maxpool1d",
           "predict", "save_model", "train"]
