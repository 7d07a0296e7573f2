"""Multi-aspect target chip sequence recognition.

Pipeline: construct aspect-ordered image sequences, extract a
multi-orientation Gabor + three-patch-LBP descriptor per chip, reduce it
with a trained single-hidden-layer network, and classify every step of the
sequence with stacked bidirectional peephole-LSTM layers under independent
per-step softmax decisions.
"""

from ._kernels import active_backend
from .config import PipelineConfig
from .pipeline import (EvalReport, ModelBundle, evaluate, load_model,
                       save_model, single_image_report, train_pipeline)

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "ModelBundle",
    "EvalReport",
    "train_pipeline",
    "evaluate",
    "single_image_report",
    "save_model",
    "load_model",
    "active_backend",
    "__version__",
]
