"""Topic-aware mixture-of-experts captioning for activities unseen in training."""

from .model import ModelConfig, TAMoEModel
from .text import Vocabulary, build_vocab, load_embeddings, tokenize
from .topic import TopicCorpus, topic_embedding

__all__ = ["ModelConfig", "TAMoEModel", "Vocabulary", "build_vocab", "load_embeddings",
           "tokenize", "TopicCorpus", "topic_embedding"]
__version__ = "0.1.0"
