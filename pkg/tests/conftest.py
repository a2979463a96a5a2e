import json
import pathlib

import pytest

DATA_DIR = pathlib.Path(__file__).resolve().parent / "data"


@pytest.fixture
def data_dir() -> pathlib.Path:
    return DATA_DIR


@pytest.fixture
def run_cli():
    """Invoke the CLI in-process and return its exit code."""

    def run(*argv: str) -> int:
        from caprank.cli import main

        try:
            return main(list(argv))
        except SystemExit as exc:
            return int(exc.code or 0)

    return run


@pytest.fixture
def tiny_corpus(tmp_path):
    """A four-image collection with two query images, end-to-end usable.

    Query q1 sits nearest c1/c2/c3 (tags: dog dominant), q2 nearest c4
    (beach).  Each k-best list holds one concept-bearing candidate below a
    concept-free one, so positive theta changes the top-1.
    """
    paths = {
        "collection": tmp_path / "coll.tsv",
        "queries": tmp_path / "q.tsv",
        "tags": tmp_path / "tags.jsonl",
        "kbest": tmp_path / "kbest.jsonl",
        "references": tmp_path / "refs.jsonl",
        "dir": tmp_path,
    }
    paths["collection"].write_text(
        "c1\t0 0 0\n"
        "c2\t1 0 0\n"
        "c3\t0 2 0\n"
        "c4\t5 5 5\n"
    )
    paths["queries"].write_text("q1\t0 0 1\nq2\t4 4 4\n")
    rows = [
        {"image_id": "c1", "tags": ["dog", "park"]},
        {"image_id": "c2", "tags": ["dog", "ball"]},
        {"image_id": "c3", "tags": ["cat"]},
        {"image_id": "c4", "tags": ["beach", "dog"]},
    ]
    paths["tags"].write_text("".join(json.dumps(r) + "\n" for r in rows))
    rows = [
        {
            "image_id": "q1",
            "candidates": [
                {"text": "A cat sits.", "score": -1.0},
                {"text": "A dog runs in the park.", "score": -2.0},
            ],
        },
        {
            "image_id": "q2",
            "candidates": [
                {"text": "Waves crash.", "score": -0.5},
                {"text": "A dog on the beach.", "score": -0.9},
            ],
        },
    ]
    paths["kbest"].write_text("".join(json.dumps(r) + "\n" for r in rows))
    rows = [
        {"image_id": "q1", "references": ["a dog runs in the park"]},
        {"image_id": "q2", "references": ["a dog on the beach"]},
    ]
    paths["references"].write_text("".join(json.dumps(r) + "\n" for r in rows))
    return paths
