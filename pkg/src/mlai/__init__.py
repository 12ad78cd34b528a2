"""Multi-sensor tracking and two-way re-identification handover toolkit."""
from .errors import MlaiError

__version__ = "0.1.0"
