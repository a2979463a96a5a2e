"""File formats and report rendering.

Record files are line-delimited JSON, one object per image, with a fixed
field order so repeated runs are byte-identical.  Schemas:

    k-best      {"image_id", "candidates": [{"text", "score"}]}
    concepts    {"image_id", "concepts": [{"term", "confidence"}]}
    references  {"image_id", "references": ["caption", ...]}
    tags        {"image_id", "tags": ["term", ...]}
    labels      {"image_id", "labels": [{"term", "prob"}]}
    reranked    {"image_id", "candidates": [{"text", "old_rank", "new_rank",
                 "sent_score", "sent_score_norm", "conc_score", "new_score",
                 "matched": ["term", ...]}]}
    predictions {"image_id", "text"}

Feature vectors travel as plain text, one image per line:
"image_id<TAB>v1 v2 ... vD".  The embedding table uses the common
word-vector text layout ("<vocab_size> <dim>" header, then "term v1 ...
vD" lines); the hierarchy is "child<TAB>parent" pairs; vocabularies and
id lists are one entry per line.

Every loader reports the offending path and line number on bad input, and
all writers go through an atomic replace so a failed run never leaves a
partial output file.
"""

import json
import os
import tempfile
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from caprank.core import (
    CandidateSentence,
    ConceptScore,
    FeatureVector,
    ImageRecord,
    InputError,
    KBestList,
    TagDocument,
    tokenize,
)
from caprank.evaluation import CaptionScore, MeteorParams, ReferenceSet, TuneResult
from caprank.hierse import ConceptHierarchy, EmbeddingTable, LabelDistribution
from caprank.rerank import ScoredCandidate

METRIC_CAVEAT = (
    "metric: meteor-lite, a simplified exact-match variant; scores are NOT "
    "comparable to official METEOR numbers, only to other runs of this tool"
)


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file + rename, so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".caprank-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _read_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}, line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise InputError(f"{path}, line {lineno}: expected a JSON object")
            yield lineno, obj


def _field(obj: dict, key: str, kind, path, lineno):
    value = obj.get(key)
    if not isinstance(value, kind):
        want = kind[0].__name__ if isinstance(kind, tuple) else kind.__name__
        raise InputError(f"{path}, line {lineno}: missing or invalid {key!r} (expected {want})")
    return value


def _number(obj: dict, key: str, path, lineno) -> float:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{path}, line {lineno}: missing or invalid {key!r} (expected number)")
    return float(value)


def _annotate(exc: InputError, path, lineno) -> InputError:
    # _field/_number errors already carry the location; constructor errors do not.
    msg = str(exc)
    if msg.startswith(f"{path},") or msg.startswith(f"{path}:"):
        return InputError(msg)
    return InputError(f"{path}, line {lineno}: {msg}")


# --------------------------------------------------------------------------
# feature vectors (plain text)

def load_features(path) -> list[ImageRecord]:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            image_id, sep, rest = line.partition("\t")
            if not sep or not image_id:
                raise InputError(f"{path}, line {lineno}: expected 'image_id<TAB>v1 v2 ... vD'")
            parts = rest.split()
            if not parts:
                raise InputError(f"{path}, line {lineno}: record {image_id!r} has no feature values")
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise InputError(f"{path}, line {lineno}: could not parse a feature value") from None
            if image_id in seen:
                raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            try:
                records.append(ImageRecord(image_id, FeatureVector(np.asarray(values))))
            except InputError as exc:
                raise InputError(f"{path}, line {lineno}: {exc}") from None
    if not records:
        raise InputError(f"{path}: no feature records")
    return records


def write_features(path, records: Iterable[ImageRecord]) -> None:
    lines = []
    for rec in records:
        values = " ".join(repr(float(v)) for v in rec.feature.values)
        lines.append(f"{rec.image_id}\t{values}\n")
    atomic_write_text(path, "".join(lines))


# --------------------------------------------------------------------------
# JSONL record files

def load_kbest(path) -> list[KBestList]:
    lists = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        raw_cands = _field(obj, "candidates", list, path, lineno)
        try:
            candidates = tuple(
                CandidateSentence(
                    text=_field(c, "text", str, path, lineno),
                    sent_score=_number(c, "score", path, lineno),
                )
                for c in raw_cands
                if isinstance(c, dict) or _bad_entry(path, lineno, "candidates")
            )
            kb = KBestList(image_id, candidates)
        except InputError as exc:
            raise _annotate(exc, path, lineno) from None
        if image_id in seen:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        lists.append(kb)
    if not lists:
        raise InputError(f"{path}: no k-best records")
    return lists


def _bad_entry(path, lineno, key):
    raise InputError(f"{path}, line {lineno}: {key!r} entries must be JSON objects")


def write_kbest(path, lists: Iterable[KBestList]) -> None:
    lines = []
    for kb in lists:
        obj = {
            "image_id": kb.image_id,
            "candidates": [{"text": c.text, "score": c.sent_score} for c in kb.candidates],
        }
        lines.append(_dumps(obj) + "\n")
    atomic_write_text(path, "".join(lines))


def load_concepts(path) -> dict[str, list[ConceptScore]]:
    out: dict[str, list[ConceptScore]] = {}
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        raw = _field(obj, "concepts", list, path, lineno)
        if image_id in out:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        try:
            out[image_id] = [
                ConceptScore(
                    term=_field(c, "term", str, path, lineno),
                    confidence=_number(c, "confidence", path, lineno),
                )
                for c in raw
                if isinstance(c, dict) or _bad_entry(path, lineno, "concepts")
            ]
        except InputError as exc:
            raise _annotate(exc, path, lineno) from None
    if not out:
        raise InputError(f"{path}: no concept records")
    return out


def write_concepts(path, entries: Iterable[tuple[str, Sequence[ConceptScore]]]) -> None:
    lines = []
    for image_id, concepts in entries:
        obj = {
            "image_id": image_id,
            "concepts": [{"term": c.term, "confidence": c.confidence} for c in concepts],
        }
        lines.append(_dumps(obj) + "\n")
    atomic_write_text(path, "".join(lines))


def load_references(path) -> dict[str, ReferenceSet]:
    out: dict[str, ReferenceSet] = {}
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        raw = _field(obj, "references", list, path, lineno)
        if image_id in out:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        if not all(isinstance(r, str) for r in raw):
            raise InputError(f"{path}, line {lineno}: references must be strings")
        try:
            out[image_id] = ReferenceSet(image_id, tuple(tuple(tokenize(r)) for r in raw))
        except InputError as exc:
            raise InputError(f"{path}, line {lineno}: {exc}") from None
    if not out:
        raise InputError(f"{path}: no reference records")
    return out


def write_references(path, entries: Iterable[tuple[str, Sequence[str]]]) -> None:
    lines = []
    for image_id, refs in entries:
        lines.append(_dumps({"image_id": image_id, "references": list(refs)}) + "\n")
    atomic_write_text(path, "".join(lines))


def load_tags(path) -> dict[str, TagDocument]:
    out: dict[str, TagDocument] = {}
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        raw = _field(obj, "tags", list, path, lineno)
        if image_id in out:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        if not all(isinstance(t, str) for t in raw):
            raise InputError(f"{path}, line {lineno}: tags must be strings")
        try:
            out[image_id] = TagDocument(image_id, frozenset(raw))
        except InputError as exc:
            raise InputError(f"{path}, line {lineno}: {exc}") from None
    if not out:
        raise InputError(f"{path}: no tag records")
    return out


def write_tags(path, entries: Iterable[tuple[str, Sequence[str]]]) -> None:
    lines = []
    for image_id, tags in entries:
        lines.append(_dumps({"image_id": image_id, "tags": sorted(tags)}) + "\n")
    atomic_write_text(path, "".join(lines))


def load_labels(path) -> list[LabelDistribution]:
    out = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        raw = _field(obj, "labels", list, path, lineno)
        if image_id in seen:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        try:
            out.append(
                LabelDistribution(
                    image_id,
                    tuple(
                        (_field(l, "term", str, path, lineno), _number(l, "prob", path, lineno))
                        for l in raw
                        if isinstance(l, dict) or _bad_entry(path, lineno, "labels")
                    ),
                )
            )
        except InputError as exc:
            raise _annotate(exc, path, lineno) from None
    if not out:
        raise InputError(f"{path}: no label records")
    return out


def write_labels(path, entries: Iterable[tuple[str, Sequence[tuple[str, float]]]]) -> None:
    lines = []
    for image_id, labels in entries:
        obj = {
            "image_id": image_id,
            "labels": [{"term": t, "prob": p} for t, p in labels],
        }
        lines.append(_dumps(obj) + "\n")
    atomic_write_text(path, "".join(lines))


def write_reranked(path, entries: Iterable[tuple[str, Sequence[ScoredCandidate]]]) -> None:
    lines = []
    for image_id, scored in entries:
        obj = {
            "image_id": image_id,
            "candidates": [
                {
                    "text": sc.candidate.text,
                    "old_rank": sc.original_rank,
                    "new_rank": new_rank,
                    "sent_score": sc.candidate.sent_score,
                    "sent_score_norm": sc.sent_score_norm,
                    "conc_score": sc.conc_score,
                    "new_score": sc.new_score,
                    "matched": [c.term for c in sc.matched],
                }
                for new_rank, sc in enumerate(scored)
            ],
        }
        lines.append(_dumps(obj) + "\n")
    atomic_write_text(path, "".join(lines))


def write_predictions(path, entries: Iterable[tuple[str, str]]) -> None:
    lines = [_dumps({"image_id": image_id, "text": text}) + "\n" for image_id, text in entries]
    atomic_write_text(path, "".join(lines))


def load_predictions(path) -> dict[str, list[str]]:
    """Read predicted captions, tokenized.

    Accepts either prediction records ({"image_id", "text"}) or k-best /
    reranked records, in which case the first listed candidate is taken.
    """
    out: dict[str, list[str]] = {}
    for lineno, obj in _read_jsonl(path):
        image_id = _field(obj, "image_id", str, path, lineno)
        if image_id in out:
            raise InputError(f"{path}, line {lineno}: duplicate image_id {image_id!r}")
        if isinstance(obj.get("text"), str):
            text = obj["text"]
        else:
            cands = obj.get("candidates")
            if not isinstance(cands, list) or not cands or not isinstance(cands[0], dict) \
                    or not isinstance(cands[0].get("text"), str):
                raise InputError(
                    f"{path}, line {lineno}: expected a 'text' field or a nonempty 'candidates' list"
                )
            text = cands[0]["text"]
        out[image_id] = tokenize(text)
    if not out:
        raise InputError(f"{path}: no prediction records")
    return out


# --------------------------------------------------------------------------
# embeddings, hierarchy, vocabulary, id lists

def load_embedding_table(path) -> EmbeddingTable:
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InputError(f"{path}, line 1: expected header '<vocab_size> <dim>'")
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError:
            raise InputError(f"{path}, line 1: malformed header {' '.join(header)!r}") from None
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise InputError(
                    f"{path}, line {lineno}: expected a term and {dim} values, got {len(parts)} fields"
                )
            term = parts[0]
            try:
                values = np.asarray([float(p) for p in parts[1:]])
            except ValueError:
                raise InputError(f"{path}, line {lineno}: could not parse an embedding value") from None
            if term.lower() in vectors:
                raise InputError(f"{path}, line {lineno}: duplicate term {term!r}")
            vectors[term.lower()] = values
    if len(vectors) != vocab_size:
        raise InputError(
            f"{path}: header announced {vocab_size} terms but file has {len(vectors)}"
        )
    try:
        return EmbeddingTable(vectors)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_embedding_table(path, vectors: Mapping[str, Sequence[float]]) -> None:
    first = next(iter(vectors.values()), None)
    dim = 0 if first is None else len(first)
    lines = [f"{len(vectors)} {dim}\n"]
    for term, values in vectors.items():
        lines.append(term + " " + " ".join(repr(float(v)) for v in values) + "\n")
    atomic_write_text(path, "".join(lines))


def load_hierarchy(path) -> ConceptHierarchy:
    parent: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            child, sep, par = line.partition("\t")
            child = child.strip().lower()
            par = par.strip().lower()
            if not sep or not child or not par:
                raise InputError(f"{path}, line {lineno}: expected 'child<TAB>parent'")
            if child == par:
                raise InputError(f"{path}, line {lineno}: {child!r} is its own parent")
            if child in parent:
                raise InputError(f"{path}, line {lineno}: duplicate child {child!r}")
            parent[child] = par
    return ConceptHierarchy(parent)


def write_hierarchy(path, parent: Mapping[str, str]) -> None:
    lines = [f"{child}\t{par}\n" for child, par in parent.items()]
    atomic_write_text(path, "".join(lines))


def load_vocabulary(path) -> list[str]:
    terms: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            term = raw.strip().lower()
            if not term or term in seen:
                continue
            seen.add(term)
            terms.append(term)
    if not terms:
        raise InputError(f"{path}: no vocabulary terms")
    return terms


def write_vocabulary(path, terms: Iterable[str]) -> None:
    atomic_write_text(path, "".join(f"{t}\n" for t in terms))


def load_id_list(path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            entry = raw.strip()
            if entry:
                ids.append(entry)
    if not ids:
        raise InputError(f"{path}: no ids")
    return ids


def write_id_list(path, ids: Iterable[str]) -> None:
    atomic_write_text(path, "".join(f"{i}\n" for i in ids))


# --------------------------------------------------------------------------
# reports

def _params_block(params: MeteorParams) -> list[str]:
    return [
        "[params]",
        f"alpha = {params.alpha!r}",
        f"beta = {params.beta!r}",
        f"gamma = {params.gamma!r}",
        f"stem = {'on' if params.stem else 'off'}",
    ]


def render_eval_report(
    per_image: Mapping[str, CaptionScore],
    corpus: float,
    params: MeteorParams,
    missing: Sequence[str] = (),
) -> str:
    """Structured text report: parameter block, per-image scores, corpus mean."""
    missing_set = set(missing)
    lines = ["# caprank evaluation report", f"# {METRIC_CAVEAT}"]
    lines.extend(_params_block(params))
    lines.append("[per-image]")
    greedy = 0
    for image_id in sorted(per_image):
        cs = per_image[image_id]
        flags = []
        if image_id in missing_set:
            flags.append("missing-prediction")
        if not cs.exact_search:
            flags.append("greedy-alignment")
            greedy += 1
        suffix = ("\t" + "\t".join(flags)) if flags else ""
        lines.append(f"{image_id}\t{cs.score:.6f}{suffix}")
    lines.append("[corpus]")
    lines.append(f"images = {len(per_image)}")
    lines.append(f"missing_predictions = {len(missing_set)}")
    lines.append(f"greedy_alignments = {greedy}")
    lines.append(f"corpus_score = {corpus:.6f}")
    return "\n".join(lines) + "\n"


def render_theta_curve(result: TuneResult, params: MeteorParams, grid_step: float) -> str:
    """Tuning report: parameter block, winning theta, and the full curve."""
    lines = ["# caprank theta tuning report", f"# {METRIC_CAVEAT}"]
    lines.extend(_params_block(params))
    lines.append(f"grid_step = {grid_step!r}")
    lines.append(f"theta_star = {result.theta_star:.4f}")
    lines.append("[curve]")
    for theta, score in result.curve:
        lines.append(f"{theta:.4f}\t{score:.6f}")
    return "\n".join(lines) + "\n"
