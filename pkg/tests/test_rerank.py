import random

import numpy as np
import pytest

from caprank.core import (
    CandidateSentence,
    ConceptScore,
    InputError,
    KBestList,
    RerankConfig,
    normalize_sentence_scores,
)
from caprank.rerank import _stem, conc_score, fuse, match_concepts, rerank


def _kbest(pairs, image_id="img"):
    return KBestList(image_id, tuple(CandidateSentence(t, s) for t, s in pairs))


def test_stem_strips_common_suffixes():
    assert _stem("running") == "runn"
    assert _stem("walked") == "walk"
    assert _stem("boxes") == "box"
    assert _stem("dogs") == "dog"
    assert _stem("glass") == "glass"  # -ss is not a plural
    assert _stem("king") == "king"  # too short for -ing
    assert _stem("is") == "is"


def test_match_concepts_single_and_multiword():
    concepts = [
        ConceptScore("traffic light", 0.9),
        ConceptScore("dog", 0.8),
        ConceptScore("light", 0.7),
    ]
    tokens = ("a", "traffic", "light", "at", "night")
    matched = match_concepts(tokens, concepts)
    assert [c.term for c in matched] == ["traffic light", "light"]


def test_match_concepts_requires_contiguity():
    concepts = [ConceptScore("red car", 0.5)]
    assert match_concepts(("red", "old", "car"), concepts) == []
    assert match_concepts(("the", "red", "car"), concepts) == concepts


def test_match_concepts_counts_each_concept_once():
    concepts = [ConceptScore("dog", 1.0)]
    matched = match_concepts(("dog", "meets", "dog"), concepts)
    assert matched == concepts


def test_match_concepts_keeps_detector_order():
    concepts = [ConceptScore("b", 0.1), ConceptScore("a", 0.9)]
    matched = match_concepts(("a", "b"), concepts)
    assert [c.term for c in matched] == ["b", "a"]


def test_match_concepts_stem_mode():
    concepts = [ConceptScore("dog", 0.8)]
    assert match_concepts(("two", "dogs"), concepts) == []
    assert match_concepts(("two", "dogs"), concepts, stem=True) == concepts


def test_conc_score_mean_and_empty():
    assert conc_score([]) == 0.0
    assert conc_score([ConceptScore("a", 0.5)]) == 0.5
    assert conc_score([ConceptScore("a", 0.25), ConceptScore("b", 0.75)]) == 0.5


def test_fuse_endpoint_identities_are_exact():
    rng = np.random.default_rng(3)
    for _ in range(500):
        conc = float(rng.random())
        sent = float(rng.random())
        assert fuse(conc, sent, 0.0) == sent
        assert fuse(conc, sent, 1.0) == conc


def test_fuse_midpoint_value():
    assert fuse(0.75, 0.5, 0.5) == 0.625


def test_fuse_rejects_out_of_range():
    for bad in (-0.01, 1.01):
        with pytest.raises(InputError):
            fuse(bad, 0.5, 0.5)
        with pytest.raises(InputError):
            fuse(0.5, bad, 0.5)
        with pytest.raises(InputError):
            fuse(0.5, 0.5, bad)


def test_rerank_theta_zero_preserves_order():
    kb = _kbest([("first cat", -1.0), ("second dog", -1.5), ("third dog", -3.0)])
    concepts = [ConceptScore("dog", 1.0)]
    out = rerank(kb, concepts, RerankConfig(theta=0.0))
    assert [sc.candidate.text for sc in out] == ["first cat", "second dog", "third dog"]
    assert [sc.original_rank for sc in out] == [0, 1, 2]


def test_rerank_theta_one_ranks_purely_by_concepts():
    kb = _kbest([("plain words", -1.0), ("a dog here", -2.0), ("dog and beach", -3.0)])
    concepts = [ConceptScore("dog", 0.8), ConceptScore("beach", 0.6)]
    out = rerank(kb, concepts, RerankConfig(theta=1.0))
    assert [sc.candidate.text for sc in out] == ["a dog here", "dog and beach", "plain words"]
    assert out[0].new_score == 0.8
    assert out[1].new_score == pytest.approx(0.7)
    assert out[2].new_score == 0.0


def test_rerank_promotes_concept_match_at_high_theta():
    # top candidate has no detected concept, the runner-up matches two
    kb = _kbest([("people at an event", -0.5), ("a dog on the beach", -0.9)])
    concepts = [ConceptScore("dog", 1.0), ConceptScore("beach", 0.5)]
    out = rerank(kb, concepts, RerankConfig(theta=0.9))
    assert out[0].candidate.text == "a dog on the beach"
    assert [c.term for c in out[0].matched] == ["dog", "beach"]
    assert out[0].conc_score == 0.75


def test_rerank_ties_keep_generator_order():
    kb = _kbest([("alpha", -1.0), ("beta", -1.0), ("gamma", -1.0)])
    out = rerank(kb, [], RerankConfig(theta=0.7))
    assert [sc.candidate.text for sc in out] == ["alpha", "beta", "gamma"]
    assert len({sc.new_score for sc in out}) == 1


def test_rerank_is_permutation_with_audit_fields():
    kb = _kbest([("a dog", -0.2), ("a cat", -0.4), ("a fish", -0.6)])
    concepts = [ConceptScore("cat", 0.9)]
    out = rerank(kb, concepts, RerankConfig(theta=0.5))
    assert sorted(sc.original_rank for sc in out) == [0, 1, 2]
    assert sorted(sc.candidate.text for sc in out) == ["a cat", "a dog", "a fish"]
    for sc in out:
        assert sc.new_score == fuse(sc.conc_score, sc.sent_score_norm, 0.5)


def test_rerank_normalization_none_uses_raw_scores():
    kb = _kbest([("one", 0.9), ("two", 0.1)])
    out = rerank(kb, [], RerankConfig(theta=0.0, normalization="none"))
    assert [sc.sent_score_norm for sc in out] == [0.9, 0.1]
    with pytest.raises(InputError):
        rerank(_kbest([("one", 2.0)]), [], RerankConfig(theta=0.0, normalization="none"))


def test_rerank_matches_independent_rescoring_oracle():
    rng = random.Random(17)
    vocab = ["dog", "cat", "beach", "park", "ball", "tree", "car", "bird"]
    for _ in range(200):
        k = rng.randint(1, 8)
        texts = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6))) for _ in range(k)]
        scores = sorted((round(rng.uniform(-5, 0), 3) for _ in range(k)), reverse=True)
        kb = _kbest(list(zip(texts, scores)))
        concepts = [
            ConceptScore(t, round(rng.uniform(0.05, 1.0), 3))
            for t in rng.sample(vocab, rng.randint(0, 4))
        ]
        theta = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0])

        norms = normalize_sentence_scores([c.sent_score for c in kb.candidates])
        expected = []
        for i, cand in enumerate(kb.candidates):
            hit = [c.confidence for c in concepts if c.term in cand.tokens]
            conc = sum(hit) / len(hit) if hit else 0.0
            expected.append((i, theta * conc + (1 - theta) * norms[i]))
        expected.sort(key=lambda pair: -pair[1])  # python sort is stable

        got = rerank(kb, concepts, RerankConfig(theta=theta))
        assert [sc.original_rank for sc in got] == [i for i, _ in expected]
        assert [sc.new_score for sc in got] == [s for _, s in expected]
