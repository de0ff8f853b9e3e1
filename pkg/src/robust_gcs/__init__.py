"""Geometric constellation shaping robust to SNR and laser-linewidth variations."""
from .channels import ChannelConditions, RngStream
from .constellation import Constellation, load, normalize_power, save, square_qam
from .cpe import BpsConfig
from .metrics import MiReport, mi_mismatched_gaussian
from .trainer import TrainingSchedule, train

__version__ = "0.1.0"

__all__ = [
    "BpsConfig", "ChannelConditions", "Constellation", "MiReport", "RngStream", "TrainingSchedule",
    "load", "mi_mismatched_gaussian", "normalize_power", "save", "square_qam", "train",
]
