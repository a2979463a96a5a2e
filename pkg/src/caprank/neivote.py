"""Neighbor-voting concept detection.

Retrieval is an exact blocked scan over a dense feature matrix: squared
Euclidean distances come from the expansion ||x - q||^2 = ||x||^2 -
2*x.q + ||q||^2 with per-record squared norms precomputed at build time.
Exact search keeps every downstream number deterministic; approximate
structures (HNSW, LSH) are deliberately out of scope.

Voting then counts, over the retrieved neighbors, how many neighbor tag
sets contain each term.  Confidence is that count divided by the number
of hits, which lands in (0, 1] and is directly comparable to the
embedding detector's output.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from caprank.core import ConceptScore, FeatureVector, ImageRecord, InputError, TagDocument

logger = logging.getLogger(__name__)

INDEX_MAGIC = "NVIDX"

# Rows of the feature matrix processed per scan step; bounds the size of
# the temporary dot-product buffer, not the index itself.
_SCAN_BLOCK_ROWS = 65536


@dataclass(frozen=True)
class NeighborHit:
    """One retrieved neighbor: its id and Euclidean distance to the query."""

    image_id: str
    distance: float


class NeighborIndex:
    """Immutable dense-vector index answering exact nearest-neighbor queries.

    Built once (single writer), then safe for any number of concurrent
    query threads.
    """

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise InputError(f"index matrix must be 2-D, got shape {matrix.shape}")
        if len(ids) != matrix.shape[0]:
            raise InputError(f"{len(ids)} ids for {matrix.shape[0]} matrix rows")
        if matrix.shape[0] == 0 or matrix.shape[1] == 0:
            raise InputError("index must contain at least one record with at least one dimension")
        if not np.all(np.isfinite(matrix)):
            bad = int(np.flatnonzero(~np.isfinite(matrix).all(axis=1))[0])
            raise InputError(f"record {ids[bad]!r} has a non-finite feature value")
        seen: set[str] = set()
        for image_id in ids:
            if not image_id:
                raise InputError("index contains an empty image_id")
            if image_id in seen:
                raise InputError(f"duplicate image_id {image_id!r} in index")
            seen.add(image_id)
        self._ids = list(ids)
        self._matrix = matrix
        self._matrix.flags.writeable = False
        self._sq_norms = np.einsum("ij,ij->i", matrix, matrix)
        self._sq_norms.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def save(self, path) -> None:
        """Write the index as text: a header line, then one record per line.

        Vectors are written with shortest round-trip float formatting, so
        a saved and reloaded index answers queries identically to the
        in-memory original.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{INDEX_MAGIC} {self.dim} {self.size}\n")
            for image_id, row in zip(self._ids, self._matrix):
                fh.write(image_id)
                fh.write("\t")
                fh.write(" ".join(repr(float(v)) for v in row))
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "NeighborIndex":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 3 or header[0] != INDEX_MAGIC:
                raise InputError(f"{path}, line 1: expected header '{INDEX_MAGIC} <dim> <count>'")
            try:
                dim, count = int(header[1]), int(header[2])
            except ValueError:
                raise InputError(f"{path}, line 1: malformed header {' '.join(header)!r}") from None
            ids: list[str] = []
            matrix = np.empty((count, dim), dtype=np.float64)
            for row, line in enumerate(fh):
                if row >= count:
                    raise InputError(f"{path}: more than the {count} records announced in the header")
                lineno = row + 2
                image_id, sep, rest = line.rstrip("\n").partition("\t")
                if not sep or not image_id:
                    raise InputError(f"{path}, line {lineno}: expected 'image_id<TAB>v1 ... vD'")
                parts = rest.split()
                if len(parts) != dim:
                    raise InputError(f"{path}, line {lineno}: {len(parts)} values, expected {dim}")
                try:
                    matrix[row] = [float(p) for p in parts]
                except ValueError:
                    raise InputError(f"{path}, line {lineno}: could not parse a feature value") from None
                ids.append(image_id)
            if len(ids) != count:
                raise InputError(f"{path}: header announced {count} records but file has {len(ids)}")
        return cls(ids, matrix)


def build_index(records: Iterable[ImageRecord]) -> NeighborIndex:
    """Assemble an exact-search index from image records.

    Rejects empty input, inconsistent dimensionality (naming the offending
    record), and duplicate ids.
    """
    records = list(records)
    if not records:
        raise InputError("cannot build an index from zero records")
    dim = records[0].feature.dim
    for rec in records:
        if rec.feature.dim != dim:
            raise InputError(
                f"record {rec.image_id!r} has dim {rec.feature.dim}, expected {dim} "
                f"(set by record {records[0].image_id!r})"
            )
    matrix = np.stack([rec.feature.values for rec in records])
    return NeighborIndex([rec.image_id for rec in records], matrix)


def query_neighbors(index: NeighborIndex, query: FeatureVector, n: int) -> list[NeighborHit]:
    """Return the min(n, index size) records closest to the query.

    Ascending by Euclidean distance; exact distance ties break
    lexicographically by image_id.  The scan is exact, so results match a
    naive all-distances computation.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n!r}")
    if query.dim != index.dim:
        raise InputError(f"query dim {query.dim} does not match index dim {index.dim}")
    q = query.values
    q_sq = float(q @ q)
    matrix = index._matrix
    size = index.size
    d2 = np.empty(size, dtype=np.float64)
    for start in range(0, size, _SCAN_BLOCK_ROWS):
        stop = min(start + _SCAN_BLOCK_ROWS, size)
        d2[start:stop] = index._sq_norms[start:stop] - 2.0 * (matrix[start:stop] @ q) + q_sq

    n_out = min(n, size)
    if n_out < size:
        kth = np.partition(d2, n_out - 1)[n_out - 1]
        candidates = np.flatnonzero(d2 <= kth)  # keep every boundary tie for the id tie-break
    else:
        candidates = np.arange(size)
    ids = index._ids
    order = sorted(candidates.tolist(), key=lambda i: (d2[i], ids[i]))[:n_out]
    return [NeighborHit(ids[i], float(np.sqrt(max(d2[i], 0.0)))) for i in order]


def vote_concepts(
    hits: Sequence[NeighborHit],
    tags: Mapping[str, TagDocument],
    m: int,
) -> list[ConceptScore]:
    """Score concepts by how many retrieved neighbors carry them as tags.

    confidence(term) = (neighbors whose tag set contains term) / len(hits).
    Neighbors without a tag document are skipped but still count in the
    denominator, so confidence stays a fraction of the retrieved evidence.
    Result is sorted by confidence descending, ties lexicographic by term,
    truncated to the top m.
    """
    if m < 1:
        raise InputError(f"m must be >= 1, got {m!r}")
    if not hits:
        return []
    counts: Counter[str] = Counter()
    missing = 0
    for hit in hits:
        doc = tags.get(hit.image_id)
        if doc is None:
            missing += 1
            continue
        counts.update(doc.tags)
    if missing:
        logger.warning("vote_concepts: %d of %d neighbors had no tag document", missing, len(hits))
    denom = len(hits)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [ConceptScore(term, count / denom) for term, count in ranked[:m]]
