import json

import pytest

from caprank import pipeline
from caprank.core import InputError


def _lines(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_run_index_reports_and_persists(tiny_corpus, tmp_path):
    out = tmp_path / "idx"
    summary = pipeline.run_index(tiny_corpus["collection"], out)
    assert (summary.records, summary.dim) == (4, 3)
    assert out.read_text().splitlines()[0] == "NVIDX 3 4"
    assert summary.seconds >= 0.0


def test_run_detect_neivote_hand_checked(tiny_corpus, tmp_path):
    index = tmp_path / "idx"
    out = tmp_path / "conc.jsonl"
    pipeline.run_index(tiny_corpus["collection"], index)
    summary = pipeline.run_detect_neivote(
        index, tiny_corpus["queries"], tiny_corpus["tags"], out, m=3, n_neighbors=3
    )
    assert summary.mode == "neivote"
    assert summary.images == 2
    rows = _lines(out)
    # q1 neighbors are c1/c2/c3: dog on 2 of 3, ties break lexicographically
    assert rows[0] == {
        "image_id": "q1",
        "concepts": [
            {"term": "dog", "confidence": 2 / 3},
            {"term": "ball", "confidence": 1 / 3},
            {"term": "cat", "confidence": 1 / 3},
        ],
    }
    assert rows[1]["image_id"] == "q2"
    assert rows[1]["concepts"][0] == {"term": "dog", "confidence": 2 / 3}


def test_run_detect_neivote_is_deterministic(tiny_corpus, tmp_path):
    index = tmp_path / "idx"
    pipeline.run_index(tiny_corpus["collection"], index)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        pipeline.run_detect_neivote(
            index, tiny_corpus["queries"], tiny_corpus["tags"], out, m=3, n_neighbors=3
        )
    assert a.read_bytes() == b.read_bytes()


@pytest.fixture
def hierse_inputs(tmp_path):
    (tmp_path / "emb.txt").write_text(
        "4 3\ndog 1 0 0\nanimal 0 1 0\nentity 0 0 1\nbeach 0 3 4\n"
    )
    (tmp_path / "hier.tsv").write_text("dog\tanimal\nanimal\tentity\n")
    (tmp_path / "vocab.txt").write_text("dog\nbeach\nentity\nspaceship\n")
    (tmp_path / "labels.jsonl").write_text(
        '{"image_id":"h1","labels":[{"term":"dog","prob":0.9}]}\n'
        '{"image_id":"h2","labels":[{"term":"unknown","prob":1.0}]}\n'
    )
    return tmp_path


def test_run_detect_hierse_skips_uncovered_images(hierse_inputs):
    out = hierse_inputs / "conc.jsonl"
    summary = pipeline.run_detect_hierse(
        hierse_inputs / "labels.jsonl",
        hierse_inputs / "emb.txt",
        hierse_inputs / "hier.tsv",
        hierse_inputs / "vocab.txt",
        out,
        m=2,
    )
    assert summary.mode == "hierse"
    assert summary.images == 1
    assert summary.skipped == ("h2",)
    assert summary.dropped_vocabulary == 1
    rows = _lines(out)
    assert [r["image_id"] for r in rows] == ["h1"]
    assert rows[0]["concepts"][0]["term"] == "dog"
    assert all(0.0 <= c["confidence"] <= 1.0 for c in rows[0]["concepts"])


def test_run_detect_hierse_all_uncovered_fails(hierse_inputs):
    (hierse_inputs / "labels.jsonl").write_text(
        '{"image_id":"h2","labels":[{"term":"unknown","prob":1.0}]}\n'
    )
    with pytest.raises(InputError, match="no image"):
        pipeline.run_detect_hierse(
            hierse_inputs / "labels.jsonl",
            hierse_inputs / "emb.txt",
            hierse_inputs / "hier.tsv",
            hierse_inputs / "vocab.txt",
            hierse_inputs / "never-written.jsonl",
        )
    assert not (hierse_inputs / "never-written.jsonl").exists()


def _concepts_file(tmp_path):
    path = tmp_path / "concepts.jsonl"
    path.write_text(
        '{"image_id":"q1","concepts":[{"term":"dog","confidence":1.0}]}\n'
        '{"image_id":"q2","concepts":[{"term":"beach","confidence":0.5}]}\n'
    )
    return path


def test_run_rerank_full_output_and_missing_records(tiny_corpus, tmp_path, caplog):
    concepts = tmp_path / "partial.jsonl"
    concepts.write_text('{"image_id":"q1","concepts":[{"term":"dog","confidence":1.0}]}\n')
    out = tmp_path / "rr.jsonl"
    with caplog.at_level("WARNING", logger="caprank.pipeline"):
        summary = pipeline.run_rerank(tiny_corpus["kbest"], concepts, 0.8, out)
    assert summary.images == 2
    assert summary.missing_concepts == ("q2",)
    assert "q2" in caplog.text
    rows = _lines(out)
    assert [r["image_id"] for r in rows] == ["q1", "q2"]
    # q1: the dog candidate is promoted at theta 0.8
    assert rows[0]["candidates"][0]["text"] == "A dog runs in the park."
    assert rows[0]["candidates"][0]["old_rank"] == 1
    assert rows[0]["candidates"][0]["matched"] == ["dog"]
    # q2 had no concepts record: original order kept
    assert [c["old_rank"] for c in rows[1]["candidates"]] == [0, 1]


def test_run_rerank_top1_only_writes_predictions(tiny_corpus, tmp_path):
    out = tmp_path / "top1.jsonl"
    summary = pipeline.run_rerank(
        tiny_corpus["kbest"], _concepts_file(tmp_path), 1.0, out, top1_only=True
    )
    assert summary.top1_only
    rows = _lines(out)
    assert rows == [
        {"image_id": "q1", "text": "A dog runs in the park."},
        {"image_id": "q2", "text": "A dog on the beach."},
    ]


def test_run_rerank_fail_fast_leaves_no_output(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    out = tmp_path / "never.jsonl"
    with pytest.raises(InputError, match="line 1"):
        pipeline.run_rerank(bad, _concepts_file(tmp_path), 0.5, out)
    assert not out.exists()


def test_run_tune_writes_curve(tiny_corpus, tmp_path):
    out = tmp_path / "curve.txt"
    summary = pipeline.run_tune(
        tiny_corpus["kbest"],
        _concepts_file(tmp_path),
        tiny_corpus["references"],
        out,
        grid_step=0.5,
    )
    assert summary.points == 3
    assert 0.0 <= summary.theta_star <= 1.0
    text = out.read_text()
    assert f"theta_star = {summary.theta_star:.4f}" in text
    assert text.count("\t") == 3  # three curve rows


def test_run_tune_requires_references_for_every_image(tiny_corpus, tmp_path):
    refs = tmp_path / "partial-refs.jsonl"
    refs.write_text('{"image_id":"q1","references":["a dog"]}\n')
    with pytest.raises(InputError, match="q2"):
        pipeline.run_tune(
            tiny_corpus["kbest"], _concepts_file(tmp_path), refs, tmp_path / "never.txt"
        )
    assert not (tmp_path / "never.txt").exists()


def test_run_eval_scores_and_reports_missing(tiny_corpus, tmp_path):
    preds = tmp_path / "preds.jsonl"
    preds.write_text('{"image_id":"q1","text":"a dog runs in the park"}\n')
    out = tmp_path / "report.txt"
    summary = pipeline.run_eval(preds, tiny_corpus["references"], out)
    assert summary.images == 2
    assert summary.missing_predictions == ("q2",)
    per_image = dict(
        line.split("\t")[:2]
        for line in out.read_text().splitlines()
        if line.startswith("q")
    )
    # 6-token exact match: F=1, penalty = 0.5 * (1/6)**3
    assert per_image["q1"] == "0.997685"
    assert per_image["q2"] == "0.000000"
    assert summary.corpus == pytest.approx((1 - 0.5 / 216) / 2, abs=1e-12)


def test_run_split_writes_three_files(tmp_path):
    ids = tmp_path / "ids.txt"
    ids.write_text("".join(f"i{k}\n" for k in range(10)))
    outs = (tmp_path / "train.txt", tmp_path / "val.txt", tmp_path / "test.txt")
    summary = pipeline.run_split(ids, (6, 2, 2), seed=7, out_paths=outs)
    assert summary.sizes == (6, 2, 2)
    parts = [p.read_text().split() for p in outs]
    assert [len(p) for p in parts] == [6, 2, 2]
    assert sorted(sum(parts, [])) == sorted(f"i{k}" for k in range(10))
    again = tmp_path / "again.txt"
    pipeline.run_split(ids, (6, 2, 2), seed=7, out_paths=(again, tmp_path / "x", tmp_path / "y"))
    assert again.read_bytes() == outs[0].read_bytes()


def test_fixture50_theta_zero_matches_golden(data_dir, tmp_path):
    out = tmp_path / "rr.jsonl"
    pipeline.run_rerank(
        data_dir / "fixture50" / "kbest.jsonl",
        data_dir / "fixture50" / "concepts.jsonl",
        0.0,
        out,
    )
    golden = data_dir / "golden" / "fixture50_rerank_theta0.jsonl"
    assert out.read_bytes() == golden.read_bytes()
