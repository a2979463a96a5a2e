"""METEOR-style caption scoring, corpus aggregation, splitting, and theta tuning.

The metric here is a simplified, self-contained METEOR variant: unigram
alignment with exact (optionally suffix-stemmed) matching, the classic
F-mean F = P*R / (alpha*P + (1-alpha)*R), and the fragmentation penalty
gamma * (chunks / matches) ** beta.  It ships no stem/synonym/paraphrase
resources, so absolute values are NOT comparable to official METEOR
scores; only relative comparisons within this toolkit are meaningful.
Every report this package emits repeats that caveat in its header.

Alignment finds a maximum one-to-one unigram matching and, among all
maximum matchings, the minimum number of contiguous aligned runs
(chunks).  The chunk minimum is searched exhaustively for sentences up to
20 tokens; longer sentences fall back to a greedy left-to-right aligner
that still attains the maximum match count but may overcount chunks, and
results carry an `exact_search=False` flag so reports can mark them.
"""

import logging
import random
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from caprank.core import InputError, KBestList, RerankConfig
from caprank.rerank import _stem, rerank

logger = logging.getLogger(__name__)

EXACT_ALIGN_LIMIT = 20


@dataclass(frozen=True)
class ReferenceSet:
    """The gold captions for one image, as token lists."""

    image_id: str
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be nonempty")
        refs = tuple(tuple(r) for r in self.references)
        if not refs:
            raise InputError(f"reference set for {self.image_id!r} is empty")
        object.__setattr__(self, "references", refs)


@dataclass(frozen=True)
class MeteorParams:
    """Metric parameters: F-mean precision weight, penalty shape, match stages."""

    alpha: float = 0.9
    beta: float = 3.0
    gamma: float = 0.5
    stem: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not value > 0.0:
                raise InputError(f"{name} must be positive, got {value!r}")


class Alignment(NamedTuple):
    matches: int
    chunks: int
    exact_search: bool


class CaptionScore(NamedTuple):
    score: float
    exact_search: bool


class TuneResult(NamedTuple):
    theta_star: float
    curve: list[tuple[float, float]]


def align(hyp: Sequence[str], ref: Sequence[str], stem: bool = False) -> Alignment:
    """Count matched unigrams and the fewest chunks any maximum matching allows.

    Tokens match when equal (or stem-equal with stem=True).  A chunk is a
    maximal run of matched pairs contiguous and in order in both
    sentences.
    """
    h = [_stem(t) for t in hyp] if stem else list(hyp)
    r = [_stem(t) for t in ref] if stem else list(ref)
    matches = sum((Counter(h) & Counter(r)).values())
    if matches == 0:
        return Alignment(0, 0, True)
    if len(h) <= EXACT_ALIGN_LIMIT and len(r) <= EXACT_ALIGN_LIMIT:
        return Alignment(matches, _min_chunks_exact(h, r, matches), True)
    return Alignment(matches, _greedy_chunks(h, r), False)


def _ref_positions(r: Sequence[str]) -> dict[str, list[int]]:
    pos: dict[str, list[int]] = {}
    for j, c in enumerate(r):
        pos.setdefault(c, []).append(j)
    return pos


def _min_chunks_exact(h: list[str], r: list[str], matches: int) -> int:
    """Minimum chunk count over all maximum matchings, by iterative deepening.

    Tries chunk budgets 1, 2, ... and asks whether `matches` pairs can be
    covered by that many common blocks, disjoint in both sentences.
    Pruned by the longest common block and a per-state count bound; failed
    (position, used-refs, budget) states are memoized.
    """
    ref_pos = _ref_positions(r)
    n_h, n_r = len(h), len(r)

    best_block = 0
    prev = [0] * (n_r + 1)
    for a in range(n_h):
        cur = [0] * (n_r + 1)
        for b in range(n_r):
            if h[a] == r[b]:
                cur[b + 1] = prev[b] + 1
                if cur[b + 1] > best_block:
                    best_block = cur[b + 1]
        prev = cur

    failed: set[tuple[int, int, int]] = set()

    def rest_bound(i: int, mask: int) -> int:
        counts = Counter(h[i:])
        total = 0
        for c, n in counts.items():
            avail = sum(1 for j in ref_pos.get(c, ()) if not mask >> j & 1)
            total += min(n, avail)
        return total

    def dfs(i: int, mask: int, need: int, budget: int) -> bool:
        if need == 0:
            return True
        if budget * best_block < need:
            return False
        key = (i, mask, budget)
        if key in failed:
            return False
        if rest_bound(i, mask) < need:
            failed.add(key)
            return False
        for a in range(i, n_h):
            for b in ref_pos.get(h[a], ()):
                if mask >> b & 1:
                    continue
                length = 0
                while (
                    a + length < n_h
                    and b + length < n_r
                    and h[a + length] == r[b + length]
                    and not mask >> (b + length) & 1
                ):
                    length += 1
                for take in range(length, 0, -1):
                    take_mask = ((1 << take) - 1) << b
                    if dfs(a + take, mask | take_mask, need - take, budget - 1):
                        return True
        failed.add(key)
        return False

    for budget in range(1, matches + 1):
        if dfs(0, 0, matches, budget):
            return budget
    return matches


def _greedy_chunks(h: list[str], r: list[str]) -> int:
    """Left-to-right aligner taking the longest available block at each step.

    Always attains the maximum match count (a token is skipped only when
    its class is exhausted on the reference side) but may use more chunks
    than the optimum.
    """
    ref_pos = _ref_positions(r)
    used = bytearray(len(r))
    chunks = 0
    i = 0
    while i < len(h):
        best_len = 0
        best_b = -1
        for b in ref_pos.get(h[i], ()):
            if used[b]:
                continue
            length = 0
            while (
                i + length < len(h)
                and b + length < len(r)
                and h[i + length] == r[b + length]
                and not used[b + length]
            ):
                length += 1
            if length > best_len:
                best_len, best_b = length, b
        if best_len:
            for t in range(best_len):
                used[best_b + t] = 1
            chunks += 1
            i += best_len
        else:
            i += 1
    return chunks


def score_caption(
    hyp: Sequence[str],
    refs: Sequence[Sequence[str]],
    params: MeteorParams = MeteorParams(),
) -> CaptionScore:
    """Score one hypothesis against its references; best reference wins.

    Per reference: P = matches/|hyp|, R = matches/|ref|,
    F = P*R / (alpha*P + (1-alpha)*R), penalty = gamma*(chunks/matches)**beta,
    score = F * (1 - penalty); zero when nothing matches.  The
    exact_search flag goes False if any alignment used the greedy path.
    """
    if not refs:
        raise InputError("at least one reference is required")
    if not hyp:
        return CaptionScore(0.0, True)
    best = 0.0
    exact = True
    for ref in refs:
        if not ref:
            continue
        aligned = align(hyp, ref, stem=params.stem)
        exact = exact and aligned.exact_search
        if aligned.matches == 0:
            continue
        p = aligned.matches / len(hyp)
        r = aligned.matches / len(ref)
        f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r)
        penalty = params.gamma * (aligned.chunks / aligned.matches) ** params.beta
        best = max(best, f_mean * (1.0 - penalty))
    return CaptionScore(best, exact)


def meteor_lite(
    hyp: Sequence[str],
    refs: Sequence[Sequence[str]],
    params: MeteorParams = MeteorParams(),
) -> float:
    """Simplified METEOR score in [0, 1] (see module docstring for caveats)."""
    return score_caption(hyp, refs, params).score


def per_image_scores(
    predictions: Mapping[str, Sequence[str]],
    gold: Mapping[str, ReferenceSet],
    params: MeteorParams = MeteorParams(),
) -> dict[str, CaptionScore]:
    """Score every gold image; a missing prediction scores 0 but is counted.

    A prediction for an image absent from the gold set is an error, not
    silently dropped.
    """
    for image_id in predictions:
        if image_id not in gold:
            raise InputError(f"prediction for {image_id!r} has no reference set")
    scores: dict[str, CaptionScore] = {}
    for image_id in sorted(gold):
        hyp = predictions.get(image_id, ())
        scores[image_id] = score_caption(hyp, gold[image_id].references, params)
    return scores


def corpus_score(
    predictions: Mapping[str, Sequence[str]],
    gold: Mapping[str, ReferenceSet],
    params: MeteorParams = MeteorParams(),
) -> float:
    """Unweighted mean of per-image scores over the gold image set."""
    if not gold:
        raise InputError("gold reference map is empty")
    scores = per_image_scores(predictions, gold, params)
    return sum(s.score for s in scores.values()) / len(scores)


def split_dataset(
    ids: Sequence[str],
    sizes: tuple[int, int, int],
    seed: int,
) -> tuple[list[str], list[str], list[str]]:
    """Deterministically shuffle ids and cut them into three disjoint parts.

    The shuffle runs on a sorted copy, so the partition depends only on
    the id set, the sizes, and the seed, never on input file order.
    """
    if len(set(ids)) != len(ids):
        raise InputError("id list contains duplicates")
    n_train, n_val, n_test = sizes
    if min(sizes) < 0:
        raise InputError(f"split sizes must be nonnegative, got {sizes}")
    if n_train + n_val + n_test != len(ids):
        raise InputError(
            f"split sizes {sizes} sum to {n_train + n_val + n_test}, but there are {len(ids)} ids"
        )
    shuffled = sorted(ids)
    random.Random(seed).shuffle(shuffled)
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def tune_theta(
    val_kbest: Sequence[KBestList],
    val_concepts: Mapping[str, Sequence],
    val_gold: Mapping[str, ReferenceSet],
    grid_step: float = 0.05,
    params: MeteorParams = MeteorParams(),
    config: RerankConfig = RerankConfig(theta=0.0),
) -> TuneResult:
    """Sweep theta over a grid and pick the corpus-score maximizer.

    For each theta in {0, step, ..., 1}, every validation list is
    reranked, the top-1 sentences are scored against the gold references,
    and the resulting (theta, score) curve is returned along with the
    argmax.  Ties go to the smallest theta.  `config` supplies the
    non-theta rerank settings (normalization, stemming); its own theta is
    ignored.
    """
    if not val_kbest:
        raise InputError("validation set is empty")
    if not 0.0 < grid_step <= 1.0:
        raise InputError(f"grid_step must be in (0, 1], got {grid_step!r}")
    steps = round(1.0 / grid_step)
    if steps < 1 or abs(steps * grid_step - 1.0) > 1e-9:
        raise InputError(f"grid_step {grid_step!r} does not divide 1 evenly")
    lists = sorted(val_kbest, key=lambda kb: kb.image_id)
    missing = [kb.image_id for kb in lists if kb.image_id not in val_concepts]
    if missing:
        logger.warning("tune_theta: no concepts for %d of %d images", len(missing), len(lists))

    curve: list[tuple[float, float]] = []
    theta_star = 0.0
    best_score = float("-inf")
    for i in range(steps + 1):
        theta = i / steps
        cfg = RerankConfig(
            theta=theta,
            m=config.m,
            n_neighbors=config.n_neighbors,
            normalization=config.normalization,
            stem=config.stem,
        )
        predictions = {
            kb.image_id: rerank(kb, list(val_concepts.get(kb.image_id, ())), cfg)[0].candidate.tokens
            for kb in lists
        }
        score = corpus_score(predictions, val_gold, params)
        curve.append((theta, score))
        if score > best_score:
            best_score = score
            theta_star = theta
    return TuneResult(theta_star, curve)
