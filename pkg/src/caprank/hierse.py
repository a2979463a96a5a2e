"""Concept detection by hierarchical semantic embedding.

Concepts and images are placed in one word-vector space.  A concept's
vector is a convex combination of its own embedding and those of its
ancestors (geometric decay up the parent chain, so the concept itself
dominates); an image's vector is a convex combination of its top
classifier labels, each label embedded the same way.  Relevance is the
cosine between the two unit vectors, mapped to [0, 1] so both detectors
emit comparable confidences.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from caprank.core import ConceptScore, CoverageError, InputError

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.5
MAX_LABELS = 10


class EmbeddingTable:
    """Case-insensitive term -> unit-vector lookup.

    Raw vectors are normalized to unit Euclidean length at construction,
    so any uniform rescaling of the source vectors is invisible
    downstream.  Immutable once built.
    """

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        if not vectors:
            raise InputError("embedding table is empty")
        self._vectors: dict[str, np.ndarray] = {}
        self._dim = 0
        for term, raw in vectors.items():
            key = term.lower()
            if not key:
                raise InputError("embedding table contains an empty term")
            arr = np.asarray(raw, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise InputError(f"embedding for {term!r} must be a nonempty 1-D array, got shape {arr.shape}")
            if not self._dim:
                self._dim = int(arr.shape[0])
            if arr.shape[0] != self._dim:
                raise InputError(f"embedding for {term!r} has dim {arr.shape[0]}, expected {self._dim}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"embedding for {term!r} has a non-finite value")
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise InputError(f"embedding for {term!r} is the zero vector")
            if key in self._vectors:
                raise InputError(f"duplicate term {term!r} in embedding table")
            unit = arr / norm
            unit.flags.writeable = False
            self._vectors[key] = unit

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, term: str) -> bool:
        return term.lower() in self._vectors

    def get(self, term: str) -> np.ndarray | None:
        return self._vectors.get(term.lower())


@dataclass(frozen=True)
class ConceptHierarchy:
    """Single-parent term taxonomy; roots simply have no entry."""

    parent: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(
            self, "parent", {c.lower(): p.lower() for c, p in self.parent.items()}
        )


@dataclass(frozen=True)
class LabelDistribution:
    """Top classifier labels for one image, sorted by probability descending.

    At most the 10 strongest labels are kept; the constructor sorts and
    truncates.
    """

    image_id: str
    labels: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be nonempty")
        pairs = []
        for term, prob in self.labels:
            if not term:
                raise InputError(f"label distribution {self.image_id!r} contains an empty term")
            if not np.isfinite(prob) or prob < 0.0:
                raise InputError(
                    f"label {term!r} of {self.image_id!r} has invalid probability {prob!r}"
                )
            pairs.append((term.lower(), float(prob)))
        pairs.sort(key=lambda p: -p[1])
        object.__setattr__(self, "labels", tuple(pairs[:MAX_LABELS]))


def ancestor_chain(term: str, hierarchy: ConceptHierarchy) -> list[str]:
    """Walk parent links from a term up to its root.

    Returns [term, parent, grandparent, ..., root]; a term absent from the
    hierarchy is its own chain.  A parent loop is an error, not an
    infinite walk.
    """
    node = term.lower()
    chain = [node]
    seen = {node}
    while node in hierarchy.parent:
        node = hierarchy.parent[node]
        if node in seen:
            raise InputError(f"hierarchy contains a cycle through {node!r}")
        seen.add(node)
        chain.append(node)
    return chain


def concept_weights(
    term: str,
    hierarchy: ConceptHierarchy,
    table: EmbeddingTable,
    beta: float = DEFAULT_BETA,
) -> list[tuple[str, float]]:
    """Convex-combination weights over the embeddable part of a concept's chain.

    Position i in the full ancestor chain gets raw weight beta**i (i=0 is
    the concept itself); positions without an embedding are dropped and
    the remaining weights renormalize to sum to 1.
    """
    if not 0.0 < beta <= 1.0:
        raise InputError(f"beta must be in (0, 1], got {beta!r}")
    chain = ancestor_chain(term, hierarchy)
    kept = [(node, beta**i) for i, node in enumerate(chain) if node in table]
    if not kept:
        raise CoverageError(f"no term in the ancestor chain of {term!r} has an embedding")
    total = sum(w for _, w in kept)
    return [(node, w / total) for node, w in kept]


def embed_concept(
    term: str,
    hierarchy: ConceptHierarchy,
    table: EmbeddingTable,
    beta: float = DEFAULT_BETA,
) -> np.ndarray:
    """Embed a concept as the unit-normalized convex combination of its chain."""
    weighted = concept_weights(term, hierarchy, table, beta)
    vec = np.zeros(table.dim, dtype=np.float64)
    for node, w in weighted:
        vec += w * table.get(node)
    return _unit(vec, f"concept {term!r}")


def embed_image(
    dist: LabelDistribution,
    hierarchy: ConceptHierarchy,
    table: EmbeddingTable,
    beta: float = DEFAULT_BETA,
) -> np.ndarray:
    """Embed an image via its predicted labels.

    Each label is embedded like a concept; label probabilities, restricted
    to the labels that could be embedded, renormalize into convex weights.
    """
    embedded: list[tuple[float, np.ndarray]] = []
    for label, prob in dist.labels:
        try:
            vec = embed_concept(label, hierarchy, table, beta)
        except CoverageError:
            continue
        embedded.append((prob, vec))
    total = sum(p for p, _ in embedded)
    if not embedded or total == 0.0:
        raise CoverageError(f"image {dist.image_id!r} has no embeddable label with positive weight")
    out = np.zeros(table.dim, dtype=np.float64)
    for prob, vec in embedded:
        out += (prob / total) * vec
    return _unit(out, f"image {dist.image_id!r}")


def relevance(image_vec: np.ndarray, concept_vec: np.ndarray) -> float:
    """Cosine relevance of two unit vectors (their dot product)."""
    if image_vec.shape != concept_vec.shape:
        raise InputError(
            f"vector shapes differ: {image_vec.shape} vs {concept_vec.shape}"
        )
    return float(image_vec @ concept_vec)


def embed_vocabulary(
    vocabulary: Sequence[str],
    hierarchy: ConceptHierarchy,
    table: EmbeddingTable,
    beta: float = DEFAULT_BETA,
) -> dict[str, np.ndarray]:
    """Precompute concept vectors for a vocabulary, dropping uncovered terms.

    Terms with no embeddable chain member are removed (with a logged
    count) rather than silently scored zero.  Order-preserving and
    deduplicating.
    """
    vectors: dict[str, np.ndarray] = {}
    dropped = 0
    for term in vocabulary:
        key = term.lower()
        if key in vectors:
            continue
        try:
            vectors[key] = embed_concept(key, hierarchy, table, beta)
        except CoverageError:
            dropped += 1
    if dropped:
        logger.warning("embed_vocabulary: dropped %d of %d terms with no embedding coverage",
                       dropped, len(vocabulary))
    if not vectors:
        raise CoverageError("no vocabulary term has embedding coverage")
    return vectors


def detect_concepts_hierse(
    dist: LabelDistribution,
    vocabulary: Sequence[str],
    hierarchy: ConceptHierarchy,
    table: EmbeddingTable,
    beta: float = DEFAULT_BETA,
    m: int = 10,
    concept_vectors: Mapping[str, np.ndarray] | None = None,
) -> list[ConceptScore]:
    """Rank a concept vocabulary against one image.

    Cosine relevance maps to confidence via (cos + 1) / 2 so the output is
    a ConceptScore in [0, 1] like the voting detector's.  Sorted by
    confidence descending, ties lexicographic by term, truncated to m.
    `concept_vectors` may carry vectors precomputed by embed_vocabulary;
    otherwise each vocabulary term is embedded on the fly.
    """
    if m < 1:
        raise InputError(f"m must be >= 1, got {m!r}")
    if not vocabulary:
        raise InputError("vocabulary must be nonempty")
    if concept_vectors is None:
        concept_vectors = embed_vocabulary(vocabulary, hierarchy, table, beta)
    image_vec = embed_image(dist, hierarchy, table, beta)
    scored = []
    for term in dict.fromkeys(t.lower() for t in vocabulary):
        vec = concept_vectors.get(term)
        if vec is None:
            continue
        cos = relevance(image_vec, vec)
        scored.append((term, (cos + 1.0) / 2.0))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [ConceptScore(term, min(max(conf, 0.0), 1.0)) for term, conf in scored[:m]]


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise CoverageError(f"{what} embeds to the zero vector")
    out = vec / norm
    out.flags.writeable = False
    return out
