from . import consts, model, reduction
from .model import ElectrodeParams, SpmParams, SpmState
from .reduction import compare_with_battbee, reduce_to_battbee

__all__ = [
    "consts",
    "model",
    "reduction",
    "ElectrodeParams",
    "SpmParams",
    "SpmState",
    "compare_with_battbee",
    "reduce_to_battbee",
]
