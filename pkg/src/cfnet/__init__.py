"""CFNet change detection on a small numpy autodiff engine."""
from .model import CFNet, ForwardResult, ModelConfig

__version__ = "0.1.0"

__all__ = ["CFNet", "ForwardResult", "ModelConfig", "__version__"]
