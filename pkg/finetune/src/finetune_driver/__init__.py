"""Fine-tuning driver: prompt corpora in, prediction CSVs out."""

__version__ = "0.1.0"

from .data import CorpusExample, load_corpus  # noqa: F401
from .driver import FinetuneConfig, FinetuneResult, fine_tune  # noqa: F401
from .model import ModelSpec, TinyCausalClassifier  # noqa: F401
from .tokenizer import WordTokenizer, extend_tokenizer  # noqa: F401
