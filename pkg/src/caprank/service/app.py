"""FastAPI application: pipeline stages plus online rerank/score endpoints.

Every handler translates failures into a two-kind error envelope:
validation problems (bad input data or unreadable paths) become HTTP 400
with detail {"kind": "validation", ...}; anything unexpected becomes HTTP
500 with {"kind": "runtime", ...}.  The CLI maps those onto its exit
codes.  Handlers are plain functions, so FastAPI runs them on worker
threads and a slow pipeline call never blocks the event loop.
"""

import dataclasses

from fastapi import FastAPI, HTTPException

import caprank
from caprank import pipeline
from caprank.core import (
    CandidateSentence,
    ConceptScore,
    InputError,
    KBestList,
    RerankConfig,
    tokenize,
)
from caprank.evaluation import MeteorParams, score_caption
from caprank.rerank import rerank
from caprank.service import schemas


def _guard(fn, *args, **kwargs):
    """Run one operation, converting exceptions to the error envelope."""
    try:
        return fn(*args, **kwargs)
    except InputError as exc:
        raise HTTPException(
            status_code=400, detail={"kind": "validation", "message": str(exc)}
        ) from exc
    except OSError as exc:
        raise HTTPException(
            status_code=400, detail={"kind": "validation", "message": str(exc)}
        ) from exc
    except HTTPException:
        raise
    except Exception as exc:
        raise HTTPException(
            status_code=500,
            detail={"kind": "runtime", "message": f"{type(exc).__name__}: {exc}"},
        ) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="caprank",
        version=caprank.__version__,
        description="Concept-based reranking for image caption k-best lists.",
    )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=caprank.__version__)

    @app.post("/pipeline/index", response_model=schemas.IndexResponse)
    def pipeline_index(req: schemas.IndexRequest):
        summary = _guard(pipeline.run_index, req.features_path, req.out_path)
        return schemas.IndexResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/detect/neivote", response_model=schemas.DetectResponse)
    def pipeline_detect_neivote(req: schemas.DetectNeivoteRequest):
        summary = _guard(
            pipeline.run_detect_neivote,
            req.index_path,
            req.queries_path,
            req.tags_path,
            req.out_path,
            m=req.m,
            n_neighbors=req.n_neighbors,
        )
        return schemas.DetectResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/detect/hierse", response_model=schemas.DetectResponse)
    def pipeline_detect_hierse(req: schemas.DetectHierseRequest):
        summary = _guard(
            pipeline.run_detect_hierse,
            req.labels_path,
            req.embeddings_path,
            req.hierarchy_path,
            req.vocabulary_path,
            req.out_path,
            m=req.m,
            beta=req.beta,
        )
        return schemas.DetectResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/rerank", response_model=schemas.RerankFileResponse)
    def pipeline_rerank(req: schemas.RerankFileRequest):
        summary = _guard(
            pipeline.run_rerank,
            req.kbest_path,
            req.concepts_path,
            req.theta,
            req.out_path,
            top1_only=req.top1_only,
            stem=req.stem,
            normalization=req.normalization,
        )
        return schemas.RerankFileResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/tune", response_model=schemas.TuneResponse)
    def pipeline_tune(req: schemas.TuneRequest):
        summary = _guard(
            pipeline.run_tune,
            req.kbest_path,
            req.concepts_path,
            req.references_path,
            req.out_path,
            grid_step=req.grid_step,
            stem=req.stem,
            normalization=req.normalization,
        )
        return schemas.TuneResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/eval", response_model=schemas.EvalResponse)
    def pipeline_eval(req: schemas.EvalRequest):
        summary = _guard(
            pipeline.run_eval,
            req.predictions_path,
            req.references_path,
            req.out_path,
            stem=req.stem,
        )
        return schemas.EvalResponse(**dataclasses.asdict(summary))

    @app.post("/pipeline/split", response_model=schemas.SplitResponse)
    def pipeline_split(req: schemas.SplitRequest):
        summary = _guard(
            pipeline.run_split, req.ids_path, tuple(req.sizes), req.seed, tuple(req.out_paths)
        )
        return schemas.SplitResponse(**dataclasses.asdict(summary))

    @app.post("/rerank", response_model=schemas.RerankOnlineResponse)
    def rerank_online(req: schemas.RerankOnlineRequest):
        def compute():
            kbest = KBestList(
                "request",
                tuple(CandidateSentence(text=c.text, sent_score=c.score) for c in req.candidates),
            )
            concepts = [ConceptScore(c.term, c.confidence) for c in req.concepts]
            config = RerankConfig(theta=req.theta, normalization=req.normalization, stem=req.stem)
            return rerank(kbest, concepts, config)

        scored = _guard(compute)
        return schemas.RerankOnlineResponse(
            candidates=[
                schemas.RankedCandidate(
                    text=sc.candidate.text,
                    old_rank=sc.original_rank,
                    new_rank=new_rank,
                    sent_score=sc.candidate.sent_score,
                    sent_score_norm=sc.sent_score_norm,
                    conc_score=sc.conc_score,
                    new_score=sc.new_score,
                    matched=[c.term for c in sc.matched],
                )
                for new_rank, sc in enumerate(scored)
            ]
        )

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        def compute():
            refs = [tuple(tokenize(r)) for r in req.references]
            params = MeteorParams(stem=req.stem)
            return score_caption(tokenize(req.hypothesis), refs, params)

        result = _guard(compute)
        return schemas.ScoreResponse(score=result.score, exact_search=result.exact_search)

    return app


app = create_app()
