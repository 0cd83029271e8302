"""UAV chain-network link simulator and correlation-based anomaly detection toolkit."""

from .pipeline import DetectParams, run_detection
from .simulate import AnomalyEvent, ScenarioConfig, run_simulation

__version__ = "0.1.0"

__all__ = [
    "AnomalyEvent",
    "DetectParams",
    "ScenarioConfig",
    "run_detection",
    "run_simulation",
    "__version__",
]
