"""caprank: concept-aware reranking of image-caption k-best lists.

A caption generator emits k candidate sentences per image, each with a
confidence score.  This package detects visual concepts for the image
(either by neighbor voting over a tagged image collection, or by
hierarchical semantic embedding against a word-vector space), scores each
candidate by how well it covers the detected concepts, and reorders the
k-best list by a weighted blend of concept coverage and generator
confidence.  A simplified METEOR-style metric, a dataset splitter, and a
grid tuner for the blend weight round out the toolkit.
"""

__version__ = "0.1.0"

from caprank.core import (
    CandidateSentence,
    ConceptScore,
    CoverageError,
    FeatureVector,
    ImageRecord,
    InputError,
    KBestList,
    RerankConfig,
    TagDocument,
    normalize_sentence_scores,
    tokenize,
)
from caprank.rerank import ScoredCandidate, conc_score, fuse, match_concepts, rerank

__all__ = [
    "CandidateSentence",
    "ConceptScore",
    "CoverageError",
    "FeatureVector",
    "ImageRecord",
    "InputError",
    "KBestList",
    "RerankConfig",
    "ScoredCandidate",
    "TagDocument",
    "conc_score",
    "fuse",
    "match_concepts",
    "normalize_sentence_scores",
    "rerank",
    "tokenize",
]
