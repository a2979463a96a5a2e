"""Reorder a k-best caption list by blending concept coverage with generator confidence.

A detected concept "matches" a candidate when its token sequence occurs
contiguously in the candidate's tokens.  Each candidate's concept score is
the mean confidence of its matched concepts (zero when nothing matches),
and its final score is the linear blend

    new_score = theta * conc_score + (1 - theta) * sent_score_norm

Sorting by new_score is stable, so ties keep the generator's original
order and theta sweeps are reproducible.
"""

from dataclasses import dataclass
from typing import Sequence

from caprank.core import (
    CandidateSentence,
    ConceptScore,
    InputError,
    KBestList,
    RerankConfig,
    normalize_sentence_scores,
    tokenize,
)


@dataclass(frozen=True)
class ScoredCandidate:
    """One candidate after scoring, with its audit trail."""

    candidate: CandidateSentence
    sent_score_norm: float
    matched: tuple[ConceptScore, ...]
    conc_score: float
    new_score: float
    original_rank: int


def _stem(token: str) -> str:
    """Strip a common English suffix (ing/ed/es/s); crude but deterministic."""
    if len(token) > 4 and token.endswith("ing"):
        return token[:-3]
    if len(token) > 3 and token.endswith("ed"):
        return token[:-2]
    if len(token) > 3 and token.endswith("es"):
        return token[:-2]
    if len(token) > 2 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def _contains_contiguous(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and list(haystack[i : i + n]) == list(needle):
            return True
    return False


def match_concepts(
    tokens: Sequence[str],
    concepts: Sequence[ConceptScore],
    stem: bool = False,
) -> list[ConceptScore]:
    """Select the detected concepts whose term appears in the sentence.

    A multi-word term matches only as a contiguous token run.  Each
    detected concept contributes at most once no matter how often it
    occurs, and the output keeps the detector's order.  With stem=True,
    comparison happens on suffix-stripped tokens.
    """
    if stem:
        tokens = [_stem(t) for t in tokens]
    matched = []
    for concept in concepts:
        needle = tokenize(concept.term)
        if stem:
            needle = [_stem(t) for t in needle]
        if _contains_contiguous(tokens, needle):
            matched.append(concept)
    return matched


def conc_score(matched: Sequence[ConceptScore]) -> float:
    """Mean confidence of the matched concepts; 0.0 when nothing matched."""
    if not matched:
        return 0.0
    return sum(c.confidence for c in matched) / len(matched)


def fuse(conc: float, sent: float, theta: float) -> float:
    """Blend concept and sentence scores: theta*conc + (1-theta)*sent.

    theta=0 returns sent exactly and theta=1 returns conc exactly.
    """
    if not 0.0 <= conc <= 1.0:
        raise InputError(f"conc score {conc!r} outside [0, 1]")
    if not 0.0 <= sent <= 1.0:
        raise InputError(f"sent score {sent!r} outside [0, 1]")
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"theta {theta!r} outside [0, 1]")
    return theta * conc + (1.0 - theta) * sent


def rerank(
    kbest: KBestList,
    concepts: Sequence[ConceptScore],
    config: RerankConfig,
) -> list[ScoredCandidate]:
    """Score and reorder one k-best list.

    Sentence scores are normalized per config, every candidate gets its
    matched concepts / conc_score / new_score, and the list is sorted by
    new_score descending with a stable sort: candidates with equal scores
    stay in generator order.  The output is a permutation of the input,
    with original_rank recorded for audit.
    """
    norms = normalize_sentence_scores(
        [c.sent_score for c in kbest.candidates], config.normalization
    )
    scored = []
    for rank, (candidate, sent_norm) in enumerate(zip(kbest.candidates, norms)):
        matched = match_concepts(candidate.tokens, concepts, stem=config.stem)
        conc = conc_score(matched)
        scored.append(
            ScoredCandidate(
                candidate=candidate,
                sent_score_norm=sent_norm,
                matched=tuple(matched),
                conc_score=conc,
                new_score=fuse(conc, sent_norm, config.theta),
                original_rank=rank,
            )
        )
    scored.sort(key=lambda sc: sc.new_score, reverse=True)
    return scored
