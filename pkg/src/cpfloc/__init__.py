"""Cascaded 2D-3D match filtering for image-based localization with binary signatures."""

from .camera import CameraPose
from .container import memory_report, read_model, write_model
from .embedding import CompressedModel, HammingEmbedding, Vocabulary, compress_model
from .evaluation import EvaluationReport, evaluate
from .feature_filter import Query
from .params import PipelineParams
from .pipeline import CascadedLocalizer, LocalizationResult, localize
from .synthetic import SyntheticSceneConfig, generate_scene

__version__ = "0.1.0"

__all__ = [
    "CameraPose",
    "CascadedLocalizer",
    "CompressedModel",
    "EvaluationReport",
    "HammingEmbedding",
    "LocalizationResult",
    "PipelineParams",
    "Query",
    "SyntheticSceneConfig",
    "Vocabulary",
    "compress_model",
    "evaluate",
    "generate_scene",
    "localize",
    "memory_report",
    "read_model",
    "write_model",
]
