"""Pipeline stages behind the CLI and service commands.

Each run_* function loads and validates every input up front, computes in
memory, and only then writes its outputs (atomically), so a failing run
never leaves partial files behind.  All stages emit records sorted by
image_id, which keeps repeated runs byte-identical.  Each returns a small
summary dataclass; warnings go to the module logger, never into output
files.
"""

import logging
import time
from dataclasses import dataclass

from caprank import formats
from caprank.core import InputError, RerankConfig
from caprank.evaluation import (
    MeteorParams,
    per_image_scores,
    split_dataset,
    tune_theta,
)
from caprank.hierse import (
    DEFAULT_BETA,
    CoverageError,
    detect_concepts_hierse,
    embed_vocabulary,
)
from caprank.neivote import NeighborIndex, build_index, query_neighbors, vote_concepts
from caprank.rerank import rerank

logger = logging.getLogger(__name__)

DETECT_MODES = ("neivote", "hierse")


@dataclass(frozen=True)
class IndexSummary:
    records: int
    dim: int
    out_path: str
    seconds: float


@dataclass(frozen=True)
class DetectSummary:
    mode: str
    images: int
    skipped: tuple[str, ...]  # hierse images with zero embedding coverage
    dropped_vocabulary: int
    out_path: str
    seconds: float


@dataclass(frozen=True)
class RerankSummary:
    images: int
    theta: float
    missing_concepts: tuple[str, ...]
    top1_only: bool
    out_path: str
    seconds: float


@dataclass(frozen=True)
class TuneSummary:
    theta_star: float
    best_score: float
    points: int
    out_path: str
    seconds: float


@dataclass(frozen=True)
class EvalSummary:
    images: int
    corpus: float
    missing_predictions: tuple[str, ...]
    greedy_alignments: int
    out_path: str
    seconds: float


@dataclass(frozen=True)
class SplitSummary:
    sizes: tuple[int, int, int]
    out_paths: tuple[str, str, str]
    seed: int
    seconds: float


def run_index(features_path, out_path) -> IndexSummary:
    """Build an exact-search index from a feature file and persist it."""
    started = time.perf_counter()
    records = formats.load_features(features_path)
    index = build_index(records)
    index.save(out_path)
    return IndexSummary(index.size, index.dim, str(out_path), time.perf_counter() - started)


def run_detect_neivote(
    index_path,
    queries_path,
    tags_path,
    out_path,
    m: int = 10,
    n_neighbors: int = 100,
) -> DetectSummary:
    """Detect concepts for each query image by voting over its neighbors' tags."""
    started = time.perf_counter()
    index = NeighborIndex.load(index_path)
    queries = formats.load_features(queries_path)
    tags = formats.load_tags(tags_path)
    entries = []
    for rec in sorted(queries, key=lambda r: r.image_id):
        hits = query_neighbors(index, rec.feature, n_neighbors)
        entries.append((rec.image_id, vote_concepts(hits, tags, m)))
    formats.write_concepts(out_path, entries)
    return DetectSummary(
        "neivote", len(entries), (), 0, str(out_path), time.perf_counter() - started
    )


def run_detect_hierse(
    labels_path,
    embeddings_path,
    hierarchy_path,
    vocabulary_path,
    out_path,
    m: int = 10,
    beta: float = DEFAULT_BETA,
) -> DetectSummary:
    """Detect concepts by cosine relevance in the shared embedding space."""
    started = time.perf_counter()
    labels = formats.load_labels(labels_path)
    table = formats.load_embedding_table(embeddings_path)
    hierarchy = formats.load_hierarchy(hierarchy_path)
    vocabulary = formats.load_vocabulary(vocabulary_path)
    concept_vectors = embed_vocabulary(vocabulary, hierarchy, table, beta)
    dropped = len(vocabulary) - len(concept_vectors)
    entries = []
    skipped = []
    for dist in sorted(labels, key=lambda d: d.image_id):
        try:
            concepts = detect_concepts_hierse(
                dist,
                vocabulary,
                hierarchy,
                table,
                beta=beta,
                m=m,
                concept_vectors=concept_vectors,
            )
        except CoverageError:
            skipped.append(dist.image_id)
            continue
        entries.append((dist.image_id, concepts))
    if skipped:
        logger.warning(
            "hierse: skipped %d image(s) with no embeddable labels: %s",
            len(skipped),
            ", ".join(skipped),
        )
    if not entries:
        raise InputError("no image had any embeddable label; nothing to write")
    formats.write_concepts(out_path, entries)
    return DetectSummary(
        "hierse",
        len(entries),
        tuple(skipped),
        dropped,
        str(out_path),
        time.perf_counter() - started,
    )


def run_rerank(
    kbest_path,
    concepts_path,
    theta: float,
    out_path,
    top1_only: bool = False,
    stem: bool = False,
    normalization: str = "min_max",
) -> RerankSummary:
    """Re-order every k-best list by the fused concept/sentence score.

    Images with no concepts record keep their order (concept score 0 for
    every candidate) and are reported in the summary.
    """
    started = time.perf_counter()
    kbest = formats.load_kbest(kbest_path)
    concepts = formats.load_concepts(concepts_path)
    config = RerankConfig(theta=theta, normalization=normalization, stem=stem)
    missing = []
    results = []
    for kb in sorted(kbest, key=lambda k: k.image_id):
        image_concepts = concepts.get(kb.image_id)
        if image_concepts is None:
            missing.append(kb.image_id)
            image_concepts = []
        results.append((kb.image_id, rerank(kb, image_concepts, config)))
    if missing:
        logger.warning(
            "rerank: %d image(s) had no concepts record, order kept: %s",
            len(missing),
            ", ".join(missing),
        )
    if top1_only:
        formats.write_predictions(
            out_path, [(image_id, scored[0].candidate.text) for image_id, scored in results]
        )
    else:
        formats.write_reranked(out_path, results)
    return RerankSummary(
        len(results),
        theta,
        tuple(missing),
        top1_only,
        str(out_path),
        time.perf_counter() - started,
    )


def run_tune(
    kbest_path,
    concepts_path,
    references_path,
    out_path,
    grid_step: float = 0.05,
    stem: bool = False,
    normalization: str = "min_max",
) -> TuneSummary:
    """Sweep theta on a validation split and persist the score curve."""
    started = time.perf_counter()
    kbest = formats.load_kbest(kbest_path)
    concepts = formats.load_concepts(concepts_path)
    gold = formats.load_references(references_path)
    uncovered = sorted(kb.image_id for kb in kbest if kb.image_id not in gold)
    if uncovered:
        raise InputError(
            f"{references_path}: no references for {len(uncovered)} k-best image(s), "
            f"first missing: {uncovered[0]!r}"
        )
    params = MeteorParams(stem=stem)
    config = RerankConfig(theta=0.0, normalization=normalization, stem=stem)
    result = tune_theta(kbest, concepts, gold, grid_step, params, config)
    formats.atomic_write_text(out_path, formats.render_theta_curve(result, params, grid_step))
    best = dict(result.curve)[result.theta_star]
    return TuneSummary(
        result.theta_star, best, len(result.curve), str(out_path), time.perf_counter() - started
    )


def run_eval(
    predictions_path,
    references_path,
    out_path,
    stem: bool = False,
) -> EvalSummary:
    """Score predictions against references and persist a per-image report."""
    started = time.perf_counter()
    predictions = formats.load_predictions(predictions_path)
    gold = formats.load_references(references_path)
    params = MeteorParams(stem=stem)
    per_image = per_image_scores(predictions, gold, params)
    # same arithmetic as corpus_score, without re-aligning every caption
    corpus = sum(cs.score for cs in per_image.values()) / len(per_image)
    missing = sorted(set(gold) - set(predictions))
    if missing:
        logger.warning(
            "eval: %d gold image(s) had no prediction and scored 0: %s",
            len(missing),
            ", ".join(missing),
        )
    greedy = sum(1 for cs in per_image.values() if not cs.exact_search)
    formats.atomic_write_text(
        out_path, formats.render_eval_report(per_image, corpus, params, missing)
    )
    return EvalSummary(
        len(per_image),
        corpus,
        tuple(missing),
        greedy,
        str(out_path),
        time.perf_counter() - started,
    )


def run_split(
    ids_path,
    sizes: tuple[int, int, int],
    seed: int,
    out_paths: tuple[str, str, str],
) -> SplitSummary:
    """Shuffle an id list with the given seed and cut it into three files."""
    started = time.perf_counter()
    ids = formats.load_id_list(ids_path)
    parts = split_dataset(ids, tuple(sizes), seed)
    for path, part in zip(out_paths, parts):
        formats.write_id_list(path, part)
    return SplitSummary(
        tuple(sizes),
        tuple(str(p) for p in out_paths),
        seed,
        time.perf_counter() - started,
    )
