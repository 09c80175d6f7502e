"""Character-based neural morphological tagging with a from-scratch
numpy backend."""

from .data import EmbeddingTable, Sentence, Vocabularies
from .encoders import EncoderConfig
from .model import ModelConfig, TaggerNetwork
from .tagger import MorphTagger
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "EmbeddingTable",
    "EncoderConfig",
    "ModelConfig",
    "MorphTagger",
    "Sentence",
    "TaggerNetwork",
    "TrainConfig",
    "Vocabularies",
    "__version__",
]
