"""conlink: metric-learning concept normalization.

Train mention/concept-name embeddings with a triplet objective, link free-text
mentions to concept identifiers by exact nearest-neighbor search over a cached
terminology index, and reject out-of-KB mentions with fitted distance
thresholds.
"""

from .corpus import Corpus, MentionRecord, load_corpus, normalize, refine, split_composite
from .encoder import NGramEncoder
from .errors import (
    ConlinkError,
    FingerprintMismatch,
    NotFoundError,
    ParseError,
    SkipRecord,
    TrainingError,
    ValidationError,
)
from .evaluate import EvalConfig, EvalReport, acc_at_k, evaluate_pipeline
from .index import LinkResult, VectorIndex, build_index, link, link_batch
from .metric import DistanceKind, TripletLossParams, distance, triplet_grad, triplet_loss
from .nilgate import NilThreshold, ThresholdStrategy, apply_gate, fit_threshold
from .sampler import SamplingStrategy, TripletBatch, mine_resampling, sample_random
from .terminology import ConceptName, Terminology, load_terminology
from .trainer import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "ConceptName",
    "ConlinkError",
    "Corpus",
    "DistanceKind",
    "EvalConfig",
    "EvalReport",
    "FingerprintMismatch",
    "LinkResult",
    "MentionRecord",
    "NGramEncoder",
    "NilThreshold",
    "NotFoundError",
    "ParseError",
    "SamplingStrategy",
    "SkipRecord",
    "Terminology",
    "ThresholdStrategy",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "TripletBatch",
    "TripletLossParams",
    "ValidationError",
    "VectorIndex",
    "acc_at_k",
    "apply_gate",
    "build_index",
    "distance",
    "evaluate_pipeline",
    "fit_threshold",
    "link",
    "link_batch",
    "load_corpus",
    "load_terminology",
    "mine_resampling",
    "normalize",
    "refine",
    "sample_random",
    "split_composite",
    "train",
    "triplet_grad",
    "triplet_loss",
]
