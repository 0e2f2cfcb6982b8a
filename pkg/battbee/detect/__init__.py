from . import observer, statespace, synthesis, thresholds
from .detector import Detector, DetectorConfig

__all__ = [
    "observer",
    "statespace",
    "synthesis",
    "thresholds",
    "Detector",
    "DetectorConfig",
]
