"""Shared domain types, tokenization, and score normalization.

Everything downstream (concept detection, reranking, evaluation) speaks in
terms of the types defined here.  All types are immutable after
construction and validate their invariants eagerly, so a constructed
object can be handed to any number of concurrent workers without locking.
"""

from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_MODES = ("min_max", "none")


class InputError(ValueError):
    """Invalid or inconsistent input data (bad file, bad schema, violated precondition)."""


class CoverageError(InputError):
    """No embeddable term was available for a concept or an image."""


def tokenize(text: str) -> list[str]:
    """Split a sentence into lowercase tokens.

    Splits on whitespace, then strips punctuation from both ends of each
    chunk (any leading/trailing character that is not alphanumeric).
    Interior characters are kept as-is, so "sky-blue" and "don't" survive
    intact.  Chunks that are punctuation-only disappear.

    >>> tokenize("A plane, flying.")
    ['a', 'plane', 'flying']
    """
    tokens = []
    for chunk in text.lower().split():
        start = 0
        end = len(chunk)
        while start < end and not chunk[start].isalnum():
            start += 1
        while end > start and not chunk[end - 1].isalnum():
            end -= 1
        if end > start:
            tokens.append(chunk[start:end])
    return tokens


def normalize_sentence_scores(scores: list[float], mode: str = "min_max") -> list[float]:
    """Map raw generator confidences into [0, 1].

    mode="min_max" applies (s - min) / (max - min); a degenerate list where
    every score is equal maps to all 1.0, so a single-candidate list keeps
    full generator confidence.  mode="none" returns the scores unchanged
    but insists they already lie in [0, 1].
    """
    if mode not in NORMALIZATION_MODES:
        raise InputError(f"unknown normalization mode {mode!r}; expected one of {NORMALIZATION_MODES}")
    if not scores:
        raise InputError("cannot normalize an empty score list")
    for i, s in enumerate(scores):
        if not np.isfinite(s):
            raise InputError(f"non-finite sentence score {s!r} at index {i}")
    if mode == "none":
        for i, s in enumerate(scores):
            if not 0.0 <= s <= 1.0:
                raise InputError(
                    f"normalization 'none' requires scores in [0, 1], but index {i} has {s!r}"
                )
        return [float(s) for s in scores]
    lo = min(scores)
    hi = max(scores)
    if hi == lo:
        return [1.0] * len(scores)
    span = hi - lo
    return [(s - lo) / span for s in scores]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Dense real-valued image feature (e.g. a CNN activation vector)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InputError(f"feature vector must be a nonempty 1-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("feature vector contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """An image identifier paired with its feature vector."""

    image_id: str
    feature: FeatureVector

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be nonempty")


@dataclass(frozen=True)
class TagDocument:
    """The set of user tags attached to one image, lowercased and deduplicated."""

    image_id: str
    tags: frozenset[str]

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be nonempty")
        lowered = frozenset(t.lower() for t in self.tags)
        if any(not t for t in lowered):
            raise InputError(f"tag document {self.image_id!r} contains an empty tag")
        object.__setattr__(self, "tags", lowered)


@dataclass(frozen=True)
class CandidateSentence:
    """A hypothesis sentence with its generator confidence.

    `tokens` is always exactly `tokenize(text)`; it is derived at
    construction and cannot drift from the raw text.
    """

    text: str
    sent_score: float
    tokens: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if not np.isfinite(self.sent_score):
            raise InputError(f"candidate {self.text!r} has non-finite score {self.sent_score!r}")
        object.__setattr__(self, "tokens", tuple(tokenize(self.text)))


@dataclass(frozen=True)
class KBestList:
    """The ordered k-best candidate list for one image.

    Candidates must arrive sorted by sent_score descending; an out-of-order
    list is rejected rather than silently reordered, because the original
    rank is meaningful downstream.
    """

    image_id: str
    candidates: tuple[CandidateSentence, ...]

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be nonempty")
        cands = tuple(self.candidates)
        if not cands:
            raise InputError(f"k-best list for {self.image_id!r} has no candidates")
        for prev, cur in zip(cands, cands[1:]):
            if cur.sent_score > prev.sent_score:
                raise InputError(
                    f"k-best list for {self.image_id!r} is not sorted by score descending "
                    f"({prev.sent_score!r} precedes {cur.sent_score!r})"
                )
        object.__setattr__(self, "candidates", cands)

    @property
    def k(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class ConceptScore:
    """A detected concept term with a confidence in [0, 1]."""

    term: str
    confidence: float

    def __post_init__(self):
        if not self.term:
            raise InputError("concept term must be nonempty")
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"concept {self.term!r} has confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class RerankConfig:
    """Knobs for the rerank stage.

    theta is the trade-off weight between concept coverage and generator
    confidence (0 keeps the generator order, 1 ranks purely by concepts).
    `stem` opts in to suffix-stripped concept matching; exact token
    matching is the default.
    """

    theta: float
    m: int = 10
    n_neighbors: int = 100
    normalization: str = "min_max"
    stem: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise InputError(f"theta must be in [0, 1], got {self.theta!r}")
        if self.m < 1:
            raise InputError(f"m must be >= 1, got {self.m!r}")
        if self.n_neighbors < 1:
            raise InputError(f"n_neighbors must be >= 1, got {self.n_neighbors!r}")
        if self.normalization not in NORMALIZATION_MODES:
            raise InputError(
                f"unknown normalization mode {self.normalization!r}; expected one of {NORMALIZATION_MODES}"
            )
