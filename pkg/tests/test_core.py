import numpy as np
import pytest

from caprank.core import (
    CandidateSentence,
    ConceptScore,
    FeatureVector,
    ImageRecord,
    InputError,
    KBestList,
    RerankConfig,
    TagDocument,
    normalize_sentence_scores,
    tokenize,
)


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("A plane, flying.") == ["a", "plane", "flying"]
    assert tokenize("  The  DOG!  ") == ["the", "dog"]
    assert tokenize('"Hello," she said...') == ["hello", "she", "said"]


def test_tokenize_keeps_interior_punctuation():
    assert tokenize("sky-blue don't 3.5") == ["sky-blue", "don't", "3.5"]


def test_tokenize_drops_punctuation_only_chunks():
    assert tokenize("wait - what ?!") == ["wait", "what"]
    assert tokenize("...") == []
    assert tokenize("") == []


def test_normalize_min_max_maps_endpoints_exactly():
    out = normalize_sentence_scores([-2.0, -3.5, -9.0])
    assert out[0] == 1.0
    assert out[-1] == 0.0
    assert out == sorted(out, reverse=True)


def test_normalize_min_max_matches_manual_formula():
    scores = [0.3, -1.2, 4.5, 0.0]
    lo, hi = min(scores), max(scores)
    expected = [(s - lo) / (hi - lo) for s in scores]
    assert normalize_sentence_scores(scores) == expected


def test_normalize_degenerate_list_maps_to_one():
    assert normalize_sentence_scores([-4.2, -4.2, -4.2]) == [1.0, 1.0, 1.0]
    assert normalize_sentence_scores([7.0]) == [1.0]


def test_normalize_none_passes_through_unit_interval():
    assert normalize_sentence_scores([0.0, 0.5, 1.0], mode="none") == [0.0, 0.5, 1.0]


def test_normalize_none_rejects_out_of_range_naming_index():
    with pytest.raises(InputError, match="index 1"):
        normalize_sentence_scores([0.5, 1.5], mode="none")


def test_normalize_rejects_unknown_mode_and_bad_input():
    with pytest.raises(InputError, match="zscore"):
        normalize_sentence_scores([0.5], mode="zscore")
    with pytest.raises(InputError, match="empty"):
        normalize_sentence_scores([])
    with pytest.raises(InputError, match="non-finite"):
        normalize_sentence_scores([0.5, float("nan")])


def test_normalize_min_max_properties():
    rng = np.random.default_rng(7)
    for _ in range(200):
        scores = list(rng.normal(scale=5.0, size=rng.integers(2, 12)))
        out = normalize_sentence_scores(scores)
        assert all(0.0 <= v <= 1.0 for v in out)
        order = sorted(range(len(scores)), key=lambda i: scores[i])
        assert [out[i] for i in order] == sorted(out)


def test_feature_vector_validates_and_freezes():
    fv = FeatureVector(np.array([1.0, 2.0]))
    assert fv.dim == 2
    with pytest.raises(ValueError):
        fv.values[0] = 9.0
    with pytest.raises(InputError):
        FeatureVector(np.array([[1.0]]))
    with pytest.raises(InputError):
        FeatureVector(np.array([1.0, float("inf")]))


def test_image_record_requires_id():
    with pytest.raises(InputError):
        ImageRecord("", FeatureVector(np.array([1.0])))


def test_tag_document_lowercases_and_rejects_empty_tags():
    doc = TagDocument("img1", frozenset({"Dog", "PARK"}))
    assert doc.tags == frozenset({"dog", "park"})
    with pytest.raises(InputError):
        TagDocument("img1", frozenset({""}))


def test_candidate_sentence_derives_tokens():
    cand = CandidateSentence("A dog, running!", -1.5)
    assert cand.tokens == ("a", "dog", "running")


def test_kbest_list_enforces_descending_scores():
    a = CandidateSentence("first", -1.0)
    b = CandidateSentence("second", -2.0)
    kb = KBestList("img1", (a, b))
    assert kb.k == 2
    with pytest.raises(InputError, match="not sorted"):
        KBestList("img1", (b, a))


def test_kbest_list_allows_score_ties():
    a = CandidateSentence("first", -1.0)
    b = CandidateSentence("also first", -1.0)
    assert KBestList("img1", (a, b)).k == 2


def test_kbest_list_rejects_empty():
    with pytest.raises(InputError):
        KBestList("img1", ())


def test_concept_score_bounds():
    assert ConceptScore("dog", 1.0).confidence == 1.0
    with pytest.raises(InputError):
        ConceptScore("dog", 1.01)
    with pytest.raises(InputError):
        ConceptScore("dog", -0.01)
    with pytest.raises(InputError):
        ConceptScore("", 0.5)


def test_rerank_config_validation():
    cfg = RerankConfig(theta=0.3)
    assert cfg.m == 10
    assert cfg.n_neighbors == 100
    assert cfg.normalization == "min_max"
    with pytest.raises(InputError):
        RerankConfig(theta=-0.1)
    with pytest.raises(InputError):
        RerankConfig(theta=1.1)
    with pytest.raises(InputError):
        RerankConfig(theta=0.5, m=0)
    with pytest.raises(InputError):
        RerankConfig(theta=0.5, n_neighbors=0)
    with pytest.raises(InputError):
        RerankConfig(theta=0.5, normalization="softmax")
