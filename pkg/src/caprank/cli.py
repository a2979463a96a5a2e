"""Command-line client for the reranking service.

Every subcommand issues one HTTP request against the FastAPI application.
By default the app is mounted in-process, so no server needs to be
running; with --server the same request goes to a live instance started
via `caprank serve`.

Exit codes: 0 success, 1 validation error (bad flags, unreadable or
malformed inputs), 2 runtime error (unexpected failure, unreachable
server).
"""

import argparse
import asyncio
import sys

import httpx

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; bad flags are validation errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


async def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=None) as client:
            return await client.post(path, json=payload)
    from caprank.service.app import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://caprank.internal", timeout=None
    ) as client:
        return await client.post(path, json=payload)


def _error_parts(response: httpx.Response) -> tuple[str, str]:
    try:
        detail = response.json().get("detail")
    except ValueError:
        return "runtime", response.text or f"HTTP {response.status_code}"
    if isinstance(detail, dict):
        return detail.get("kind", "runtime"), detail.get("message", str(detail))
    if isinstance(detail, list):
        # request-body validation failures arrive as a list of field errors
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", ()) if p != "body")
            msg = item.get("msg", "invalid value")
            parts.append(f"{loc}: {msg}" if loc else msg)
        return "validation", "; ".join(parts)
    return "runtime", str(detail)


def _call(server: str | None, path: str, payload: dict) -> dict:
    try:
        response = asyncio.run(_post(server, path, payload))
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME) from None
    if response.status_code == 200:
        return response.json()
    kind, message = _error_parts(response)
    print(f"error ({kind}): {message}", file=sys.stderr)
    if response.status_code in (400, 422):
        raise SystemExit(EXIT_VALIDATION)
    raise SystemExit(EXIT_RUNTIME)


def _note(text: str) -> None:
    print(f"note: {text}", file=sys.stderr)


def _cmd_index(args) -> int:
    body = _call(
        args.server,
        "/pipeline/index",
        {"features_path": args.features, "out_path": args.out},
    )
    print(
        f"indexed {body['records']} record(s), dim {body['dim']} -> "
        f"{body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_detect_neivote(args) -> int:
    body = _call(
        args.server,
        "/pipeline/detect/neivote",
        {
            "index_path": args.index,
            "queries_path": args.queries,
            "tags_path": args.tags,
            "out_path": args.out,
            "m": args.m,
            "n_neighbors": args.neighbors,
        },
    )
    print(
        f"detected concepts for {body['images']} image(s) -> "
        f"{body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_detect_hierse(args) -> int:
    body = _call(
        args.server,
        "/pipeline/detect/hierse",
        {
            "labels_path": args.labels,
            "embeddings_path": args.embeddings,
            "hierarchy_path": args.hierarchy,
            "vocabulary_path": args.vocabulary,
            "out_path": args.out,
            "m": args.m,
            "beta": args.beta,
        },
    )
    if body["dropped_vocabulary"]:
        _note(f"{body['dropped_vocabulary']} vocabulary term(s) had no embedding coverage")
    if body["skipped"]:
        _note(
            f"skipped {len(body['skipped'])} image(s) with no embeddable labels: "
            + ", ".join(body["skipped"])
        )
    print(
        f"detected concepts for {body['images']} image(s) -> "
        f"{body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_rerank(args) -> int:
    body = _call(
        args.server,
        "/pipeline/rerank",
        {
            "kbest_path": args.kbest,
            "concepts_path": args.concepts,
            "theta": args.theta,
            "out_path": args.out,
            "top1_only": args.top1_only,
            "stem": args.stem,
            "normalization": args.normalization,
        },
    )
    if body["missing_concepts"]:
        _note(
            f"{len(body['missing_concepts'])} image(s) had no concepts record, "
            "order kept: " + ", ".join(body["missing_concepts"])
        )
    print(
        f"reranked {body['images']} image(s) at theta={body['theta']} -> "
        f"{body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_tune(args) -> int:
    body = _call(
        args.server,
        "/pipeline/tune",
        {
            "kbest_path": args.kbest,
            "concepts_path": args.concepts,
            "references_path": args.references,
            "out_path": args.out,
            "grid_step": args.grid_step,
            "stem": args.stem,
            "normalization": args.normalization,
        },
    )
    print(
        f"theta_star={body['theta_star']} best_score={body['best_score']:.6f} "
        f"over {body['points']} grid point(s) -> {body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    body = _call(
        args.server,
        "/pipeline/eval",
        {
            "predictions_path": args.predictions,
            "references_path": args.references,
            "out_path": args.out,
            "stem": args.stem,
        },
    )
    if body["missing_predictions"]:
        _note(
            f"{len(body['missing_predictions'])} gold image(s) had no prediction "
            "and scored 0"
        )
    if body["greedy_alignments"]:
        _note(f"{body['greedy_alignments']} caption(s) used the greedy long-sentence aligner")
    print(
        f"corpus_score={body['corpus']:.6f} over {body['images']} image(s) -> "
        f"{body['out_path']} ({body['seconds']:.2f}s)"
    )
    return EXIT_OK


def _cmd_split(args) -> int:
    body = _call(
        args.server,
        "/pipeline/split",
        {
            "ids_path": args.ids,
            "sizes": args.sizes,
            "seed": args.seed,
            "out_paths": args.out,
        },
    )
    sizes = "/".join(str(s) for s in body["sizes"])
    paths = ", ".join(body["out_paths"])
    print(f"split {sum(body['sizes'])} id(s) into {sizes} -> {paths} ({body['seconds']:.2f}s)")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("caprank.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="caprank", description=__doc__)
    client = _Parser(add_help=False)
    client.add_argument(
        "--server",
        default=None,
        metavar="URL",
        help="send requests to a running service instead of executing in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", parents=[client], help="build an exact-search feature index")
    p.add_argument("--features", required=True, help="feature file: image_id<TAB>v1 v2 ... vD")
    p.add_argument("--out", required=True, help="index output path")
    p.set_defaults(func=_cmd_index)

    detect = sub.add_parser("detect", help="detect concepts for query images")
    modes = detect.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    p = modes.add_parser("neivote", parents=[client], help="vote over nearest neighbors' tags")
    p.add_argument("--index", required=True, help="index built by `caprank index`")
    p.add_argument("--queries", required=True, help="feature file for the query images")
    p.add_argument("--tags", required=True, help="tag records for the indexed images")
    p.add_argument("--out", required=True, help="concepts output path")
    p.add_argument("--m", type=int, default=10, help="concepts kept per image (default 10)")
    p.add_argument(
        "--neighbors", type=int, default=100, help="neighbors retrieved per query (default 100)"
    )
    p.set_defaults(func=_cmd_detect_neivote)

    p = modes.add_parser(
        "hierse", parents=[client], help="rank a concept vocabulary by embedding relevance"
    )
    p.add_argument("--labels", required=True, help="predicted label records per image")
    p.add_argument("--embeddings", required=True, help="word embedding table")
    p.add_argument("--hierarchy", required=True, help="child<TAB>parent concept hierarchy")
    p.add_argument("--vocabulary", required=True, help="concept vocabulary, one term per line")
    p.add_argument("--out", required=True, help="concepts output path")
    p.add_argument("--m", type=int, default=10, help="concepts kept per image (default 10)")
    p.add_argument(
        "--beta",
        type=float,
        default=0.5,
        help="ancestor decay: weight of chain position i is beta**i (default 0.5)",
    )
    p.set_defaults(func=_cmd_detect_hierse)

    p = sub.add_parser("rerank", parents=[client], help="re-order k-best lists by fused score")
    p.add_argument("--kbest", required=True, help="k-best caption records")
    p.add_argument("--concepts", required=True, help="concept records from `caprank detect`")
    p.add_argument(
        "--theta", type=float, required=True, help="concept weight in [0, 1]; 0 keeps input order"
    )
    p.add_argument("--out", required=True, help="reranked output path")
    p.add_argument(
        "--top1-only", action="store_true", help="write only the top caption per image"
    )
    p.add_argument("--stem", action="store_true", help="suffix-stem tokens before matching")
    p.add_argument(
        "--normalization",
        choices=("min_max", "none"),
        default="min_max",
        help="sentence-score normalization (default min_max)",
    )
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("tune", parents=[client], help="pick theta on a validation split")
    p.add_argument("--kbest", required=True, help="validation k-best records")
    p.add_argument("--concepts", required=True, help="validation concept records")
    p.add_argument("--references", required=True, help="validation reference captions")
    p.add_argument("--out", required=True, help="theta curve output path")
    p.add_argument(
        "--grid-step", type=float, default=0.05, help="theta grid spacing (default 0.05)"
    )
    p.add_argument("--stem", action="store_true", help="suffix-stem tokens in matching and metric")
    p.add_argument(
        "--normalization",
        choices=("min_max", "none"),
        default="min_max",
        help="sentence-score normalization (default min_max)",
    )
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("eval", parents=[client], help="score predictions against references")
    p.add_argument(
        "--predictions",
        required=True,
        help="prediction records; k-best or reranked records are accepted (first candidate wins)",
    )
    p.add_argument("--references", required=True, help="reference caption records")
    p.add_argument("--out", required=True, help="evaluation report output path")
    p.add_argument("--stem", action="store_true", help="suffix-stem tokens before matching")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("split", parents=[client], help="split an id list into three parts")
    p.add_argument("--ids", required=True, help="id list, one per line")
    p.add_argument(
        "--sizes",
        type=int,
        nargs=3,
        required=True,
        metavar=("TRAIN", "VAL", "TEST"),
        help="part sizes; must sum to the id count",
    )
    p.add_argument("--seed", type=int, required=True, help="shuffle seed")
    p.add_argument(
        "--out",
        nargs=3,
        required=True,
        metavar=("TRAIN", "VAL", "TEST"),
        help="three output paths",
    )
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
