"""Request and response bodies for the HTTP service.

Pipeline endpoints exchange file paths (the server reads and writes on
its own filesystem); the online endpoints carry candidate lists and
captions inline.  Field names match the pipeline summary dataclasses so
responses can be built straight from them.
"""

from typing import Literal

from pydantic import BaseModel, Field

Normalization = Literal["min_max", "none"]


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str


class ErrorDetail(BaseModel):
    kind: Literal["validation", "runtime"]
    message: str


class IndexRequest(BaseModel):
    features_path: str
    out_path: str


class IndexResponse(BaseModel):
    records: int
    dim: int
    out_path: str
    seconds: float


class DetectNeivoteRequest(BaseModel):
    index_path: str
    queries_path: str
    tags_path: str
    out_path: str
    m: int = Field(default=10, ge=1)
    n_neighbors: int = Field(default=100, ge=1)


class DetectHierseRequest(BaseModel):
    labels_path: str
    embeddings_path: str
    hierarchy_path: str
    vocabulary_path: str
    out_path: str
    m: int = Field(default=10, ge=1)
    beta: float = Field(default=0.5, gt=0.0, le=1.0)


class DetectResponse(BaseModel):
    mode: str
    images: int
    skipped: list[str]
    dropped_vocabulary: int
    out_path: str
    seconds: float


class RerankFileRequest(BaseModel):
    kbest_path: str
    concepts_path: str
    theta: float = Field(ge=0.0, le=1.0)
    out_path: str
    top1_only: bool = False
    stem: bool = False
    normalization: Normalization = "min_max"


class RerankFileResponse(BaseModel):
    images: int
    theta: float
    missing_concepts: list[str]
    top1_only: bool
    out_path: str
    seconds: float


class TuneRequest(BaseModel):
    kbest_path: str
    concepts_path: str
    references_path: str
    out_path: str
    grid_step: float = Field(default=0.05, gt=0.0, le=1.0)
    stem: bool = False
    normalization: Normalization = "min_max"


class TuneResponse(BaseModel):
    theta_star: float
    best_score: float
    points: int
    out_path: str
    seconds: float


class EvalRequest(BaseModel):
    predictions_path: str
    references_path: str
    out_path: str
    stem: bool = False


class EvalResponse(BaseModel):
    images: int
    corpus: float
    missing_predictions: list[str]
    greedy_alignments: int
    out_path: str
    seconds: float


class SplitRequest(BaseModel):
    ids_path: str
    sizes: tuple[int, int, int]
    seed: int
    out_paths: tuple[str, str, str]


class SplitResponse(BaseModel):
    sizes: tuple[int, int, int]
    out_paths: tuple[str, str, str]
    seed: int
    seconds: float


class CandidateIn(BaseModel):
    text: str
    score: float


class ConceptIn(BaseModel):
    term: str
    confidence: float = Field(ge=0.0, le=1.0)


class RerankOnlineRequest(BaseModel):
    candidates: list[CandidateIn] = Field(min_length=1)
    concepts: list[ConceptIn] = []
    theta: float = Field(ge=0.0, le=1.0)
    stem: bool = False
    normalization: Normalization = "min_max"


class RankedCandidate(BaseModel):
    text: str
    old_rank: int
    new_rank: int
    sent_score: float
    sent_score_norm: float
    conc_score: float
    new_score: float
    matched: list[str]


class RerankOnlineResponse(BaseModel):
    candidates: list[RankedCandidate]


class ScoreRequest(BaseModel):
    hypothesis: str
    references: list[str] = Field(min_length=1)
    stem: bool = False


class ScoreResponse(BaseModel):
    score: float
    exact_search: bool
