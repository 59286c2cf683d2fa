"""Detection worker for the scenelab examination server.

Connects to a running server as a remote detection backend, registers a
label set, and answers forwarded classify requests. Talks the public wire
protocol only; shares no code with the server.
"""

from .detector import InvalidImageError, PixelDetection, run_model
from .labels import COCO_CLASSES
from .worker import DetectionWorker, backoff_delay

__version__ = "0.1.0"

__all__ = [
    "COCO_CLASSES",
    "DetectionWorker",
    "InvalidImageError",
    "PixelDetection",
    "backoff_delay",
    "run_model",
]
