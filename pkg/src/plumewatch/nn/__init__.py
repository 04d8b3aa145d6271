from .adam import AdamState, adam_step
from .io import load_model, save_model
from .loss import weighted_bce_from_logits, weighted_bce_loss
from .unet import UNetConfig, backward, forward, init_params, param_names

__all__ = [
    "AdamState", "UNetConfig", "adam_step", "backward", "forward",
    "init_params", "load_model", "param_names", "save_model",
    "weighted_bce_from_logits", "weighted_bce_loss",
]
