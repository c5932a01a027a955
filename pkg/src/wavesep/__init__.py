"""Time-domain music source separation with dilated and densely connected U-Nets."""

from wavesep.model import ModelConfig, build_model, dilation_schedule, forward, receptive_field
from wavesep.tensor import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["ModelConfig", "Tape", "Tensor", "backward", "build_model", "dilation_schedule",
           "forward", "receptive_field"]
