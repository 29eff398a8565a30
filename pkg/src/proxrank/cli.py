"""Command-line interface.

Every subcommand writes its artifacts under a fixed name inside --out,
plus a manifest.json describing the invocation.  Manifests carry no
timestamps and record input files by basename, so identical runs produce
byte-identical output trees wherever they execute.

Subcommands:

    ingest    validate a raw corpus and write its normalized form
    synth     generate a synthetic corpus with controllable signal
    train     fit aggregation weights (optionally plus a rank-cutoff decay)
    rank      score queries with a trained model or a fixed baseline
    eval      score a run file against judgments
    xval      cross-validated train/evaluate in one step
    compare   merge evaluation reports and mark significant differences
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from proxrank import __version__
from proxrank.aggregators import (
    AggregationError,
    AggregatorSpec,
    aggregate_score,
    balog2_score,
    petkova_score,
)
from proxrank.corpus import (
    BEST_PER_DOCUMENT,
    PER_MENTION,
    Context,
    CorpusError,
    CorpusIndex,
    Judgments,
    Query,
    RetrievalConfig,
    find_candidates,
    load_corpus,
    read_qrels,
    read_queries,
    write_corpus,
    write_qrels,
    write_queries,
)
from proxrank.evaluation import (
    EvalError,
    EvalReport,
    Ranking,
    compute_metrics,
    cross_validate,
    rank_entities,
    read_report,
    read_run,
    write_comparison,
    write_report,
    write_run,
)
from proxrank.features import Bm25Params, FeatureError, FeatureLayout, context_matrix
from proxrank.synth import SynthError, SynthParams, generate_synthetic
from proxrank.training import (
    Model,
    PreparedQuery,
    TrainConfig,
    TrainingError,
    load_model,
    model_scores,
    prepare_macdonald,
    prepare_queries,
    save_model,
    train_model,
    train_soft_cutoff,
)

__all__ = [
    "QueryCandidates",
    "baseline_ranker",
    "collect_candidates",
    "count_model",
    "main",
]

MANIFEST_NAME = "manifest.json"
TRAINED_SYSTEMS = ("features", "macdonald")
BASELINE_SYSTEMS = ("count", "balog2", "petkova")

_PATH_KEYS = {"corpus", "queries", "qrels", "catalog", "docs", "run", "model"}


@dataclass
class QueryCandidates:
    """One query's retrieved entities with raw supporting contexts."""

    query_id: str
    query: Query
    support: dict[str, list[Context]]


def collect_candidates(
    index: CorpusIndex, queries: Sequence[Query], retrieval: RetrievalConfig
) -> list[QueryCandidates]:
    out = []
    for query in queries:
        cand = find_candidates(index, query, retrieval)
        out.append(QueryCandidates(query.query_id, query, cand.support))
    return out


def count_model() -> Model:
    """Support-size ranker expressed in the standard aggregation form:
    a single always-one feature, counted once per context."""
    layout = FeatureLayout(families=("pad",))
    return Model(
        weights=np.ones(1),
        spec=AggregatorSpec.from_name("count"),
        layout=layout,
        meta={"system": "count"},
    )


def baseline_ranker(
    name: str,
    index: CorpusIndex,
    bm25: Bm25Params = Bm25Params(),
    lm_lambda: float = 0.5,
    kernel_width: float = 25.0,
) -> Callable[[QueryCandidates], Ranking]:
    """Ranker over raw candidate sets for the untrained reference systems."""
    if name == "count":
        model = count_model()

        def rank_count(qc: QueryCandidates) -> Ranking:
            scores = {
                eid: aggregate_score(
                    model.spec,
                    model.weights,
                    context_matrix(index, qc.query, qc.support[eid], model.layout, bm25),
                )
                for eid in sorted(qc.support)
            }
            return rank_entities(qc.query_id, scores)

        return rank_count
    if name == "balog2":

        def rank_balog(qc: QueryCandidates) -> Ranking:
            scores = {
                eid: balog2_score(index, qc.query, qc.support[eid], smoothing=lm_lambda)
                for eid in sorted(qc.support)
            }
            return rank_entities(qc.query_id, scores)

        return rank_balog
    if name == "petkova":

        def rank_petkova(qc: QueryCandidates) -> Ranking:
            scores = {
                eid: petkova_score(
                    index,
                    qc.query,
                    qc.support[eid],
                    kernel_width=kernel_width,
                    smoothing=lm_lambda,
                )
                for eid in sorted(qc.support)
            }
            return rank_entities(qc.query_id, scores)

        return rank_petkova
    raise EvalError(f"unknown baseline {name!r} (expected one of {BASELINE_SYSTEMS})")


# -- argument plumbing ---------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _layout_from_args(args: argparse.Namespace) -> FeatureLayout:
    kwargs = {"families": _names(args.families)}
    if args.distance_boundaries:
        kwargs["distance_boundaries"] = _ints(args.distance_boundaries)
    if args.idf_boundaries:
        kwargs["idf_fraction_boundaries"] = _floats(args.idf_boundaries)
    return FeatureLayout(**kwargs)


def _retrieval_from_args(args: argparse.Namespace) -> RetrievalConfig:
    return RetrievalConfig(window=args.window, granularity=args.granularity)


def _bm25_from_args(args: argparse.Namespace) -> Bm25Params:
    return Bm25Params(k1=args.k1, b=args.b)


def _train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        ridge_width=args.ridge,
        smooth_weight=args.smooth,
        max_iters=args.max_iters,
        tol=args.tol,
        pair_cap=args.pair_cap,
        seed=args.seed,
        folds=getattr(args, "folds", 5),
        ridge_ladder=_floats(args.ridge_grid) if args.ridge_grid else None,
    )


def _add_retrieval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=50, help="context window radius in tokens")
    p.add_argument(
        "--granularity",
        choices=(PER_MENTION, BEST_PER_DOCUMENT),
        default=PER_MENTION,
        help="keep every mention context or only the best one per document",
    )


def _add_feature_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--families",
        default="noprox,rectangle,pad",
        help="comma list of feature families (noprox, idfupto, grid, rectangle, pad)",
    )
    p.add_argument("--distance-boundaries", default=None, help="comma list of window splits")
    p.add_argument("--idf-boundaries", default=None, help="comma list of IDF-fraction splits")
    p.add_argument("--k1", type=float, default=1.2, help="BM25 k1")
    p.add_argument("--b", type=float, default=0.75, help="BM25 b")


def _add_train_args(p: argparse.ArgumentParser, systems: tuple[str, ...] = TRAINED_SYSTEMS) -> None:
    p.add_argument("--system", choices=systems, default="features")
    p.add_argument(
        "--aggregator",
        default="sum",
        help="sum, avg, softmax, softcount, or softor",
    )
    p.add_argument("--ridge", type=float, default=10.0, help="ridge width (weaker when larger)")
    p.add_argument("--smooth", type=float, default=1.0, help="grid smoothness multiplier")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--pair-cap", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--ridge-grid",
        default=None,
        help="comma list of ridge widths to select from by inner k-fold MAP",
    )
    p.add_argument(
        "--with-cutoff",
        type=float,
        default=None,
        metavar="RIDGE",
        help="additionally fit a rank-cutoff decay with this ridge",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxrank",
        description="Entity search: train, rank, and evaluate proximity-aware rankers.",
    )
    parser.add_argument("--version", action="version", version=f"proxrank {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="validate a corpus and write its normalized form")
    p.add_argument("--docs", required=True, help="raw corpus JSONL")
    p.add_argument("--catalog", default=None, help="entity catalog JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=16, dest="num_queries")
    p.add_argument("--docs", type=int, default=12, dest="num_docs")
    p.add_argument("--filler-docs", type=int, default=40)
    p.add_argument("--good", type=int, default=4)
    p.add_argument("--bad", type=int, default=4)
    p.add_argument("--terms", type=int, default=3)
    p.add_argument("--base-contexts", type=int, default=2)
    p.add_argument("--context-spread", type=int, default=2)
    p.add_argument("--count-boost", type=int, default=5)
    p.add_argument("--count-skew", type=float, default=0.0)
    p.add_argument("--rarity-skew", type=float, default=0.0)
    p.add_argument("--proximity-skew", type=float, default=0.0)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--max-distance", type=int, default=25)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit aggregation weights")
    p.add_argument("--corpus", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", required=True)
    _add_retrieval_args(p)
    _add_feature_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank candidates for a query set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", default=None, help="model.json from train")
    source.add_argument("--baseline", choices=BASELINE_SYSTEMS, default=None)
    p.add_argument("--lm-lambda", type=float, default=0.5, help="language-model smoothing")
    p.add_argument("--kernel-width", type=float, default=25.0, help="positional kernel width")
    p.add_argument("--tag", default="proxrank", help="run tag written to the run file")
    _add_retrieval_args(p)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="score a run file against judgments")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--system", default="run", help="system name recorded in the report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xval", help="cross-validated train and evaluate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--protocol", choices=("loocv", "kfold"), default="loocv")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--name", default=None, help="system name in the report (defaults to system)")
    p.add_argument("--lm-lambda", type=float, default=0.5)
    p.add_argument("--kernel-width", type=float, default=25.0)
    _add_retrieval_args(p)
    _add_feature_args(p)
    _add_train_args(p, systems=TRAINED_SYSTEMS + BASELINE_SYSTEMS)
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("compare", help="merge reports and mark significant gaps")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def _config_dict(args: argparse.Namespace) -> dict:
    config = {}
    for key, value in vars(args).items():
        if key in ("func", "command", "out"):
            continue
        if key in _PATH_KEYS and isinstance(value, str):
            value = os.path.basename(value)
        if key == "reports":
            value = [os.path.basename(v) for v in value]
        config[key] = value
    return config


def write_manifest(
    out_dir: str,
    command: str,
    config: dict,
    artifacts: Sequence[str],
    status: str,
    error: str | None = None,
) -> None:
    manifest = {
        "tool": "proxrank",
        "version": __version__,
        "command": command,
        "config": config,
        "status": status,
        "artifacts": sorted(artifacts),
    }
    if error is not None:
        manifest["error"] = error
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- command handlers ----------------------------------------------------------


def cmd_ingest(args: argparse.Namespace, stage: dict) -> list[str]:
    stage["name"] = "load-corpus"
    index = load_corpus(args.docs, args.catalog)
    stage["name"] = "write-artifacts"
    docs = [index.documents[d] for d in sorted(index.documents)]
    write_corpus(docs, os.path.join(args.out, "corpus.jsonl"))
    return ["corpus.jsonl"]


def cmd_synth(args: argparse.Namespace, stage: dict) -> list[str]:
    stage["name"] = "generate"
    params = SynthParams(
        num_queries=args.num_queries,
        num_docs=args.num_docs,
        num_filler_docs=args.filler_docs,
        terms_per_query=args.terms,
        num_good=args.good,
        num_bad=args.bad,
        base_contexts=args.base_contexts,
        context_spread=args.context_spread,
        count_boost=args.count_boost,
        count_skew=args.count_skew,
        rarity_skew=args.rarity_skew,
        proximity_skew=args.proximity_skew,
        window=args.window,
        max_distance=args.max_distance,
    )
    documents, queries, judgments = generate_synthetic(params, seed=args.seed)
    stage["name"] = "write-artifacts"
    write_corpus(documents, os.path.join(args.out, "corpus.jsonl"))
    write_queries(queries, os.path.join(args.out, "queries.jsonl"))
    write_qrels(judgments, os.path.join(args.out, "qrels.txt"))
    return ["corpus.jsonl", "queries.jsonl", "qrels.txt"]


def _load_training_inputs(
    args: argparse.Namespace, stage: dict
) -> tuple[CorpusIndex, list[Query], Judgments]:
    stage["name"] = "load-corpus"
    index = load_corpus(args.corpus, args.catalog)
    stage["name"] = "load-queries"
    queries = read_queries(args.queries)
    stage["name"] = "load-qrels"
    judgments = read_qrels(args.qrels)
    return index, queries, judgments


def _prepare_system(
    args: argparse.Namespace,
    stage: dict,
    index: CorpusIndex,
    queries: Sequence[Query],
    judgments: Judgments,
) -> tuple[list[PreparedQuery], FeatureLayout | None, AggregatorSpec]:
    stage["name"] = "featurize"
    retrieval = _retrieval_from_args(args)
    bm25 = _bm25_from_args(args)
    if args.system == "macdonald":
        prepared = prepare_macdonald(index, queries, judgments, retrieval, bm25)
        return prepared, None, AggregatorSpec.from_name("sum")
    layout = _layout_from_args(args)
    prepared = prepare_queries(index, queries, judgments, layout, retrieval, bm25)
    return prepared, layout, AggregatorSpec.from_name(args.aggregator)


def _fit_with_optional_cutoff(
    prepared: Sequence[PreparedQuery],
    spec: AggregatorSpec,
    layout: FeatureLayout | None,
    config: TrainConfig,
    cutoff_ridge: float | None,
) -> Model:
    model = train_model(prepared, spec, layout, config)
    if cutoff_ridge is not None:
        cutoff = train_soft_cutoff(model, prepared, ridge=cutoff_ridge, config=config)
        model = Model(
            weights=model.weights,
            spec=cutoff.spec(),
            layout=layout,
            meta={**model.meta, "cutoff_ridge": cutoff_ridge},
        )
    return model


def cmd_train(args: argparse.Namespace, stage: dict) -> list[str]:
    index, queries, judgments = _load_training_inputs(args, stage)
    prepared, layout, spec = _prepare_system(args, stage, index, queries, judgments)
    stage["name"] = "train"
    config = _train_config_from_args(args)
    model = _fit_with_optional_cutoff(prepared, spec, layout, config, args.with_cutoff)
    model.meta.update(
        {
            "system": args.system,
            "bm25": {"k1": args.k1, "b": args.b},
            "window": args.window,
            "granularity": args.granularity,
        }
    )
    stage["name"] = "write-artifacts"
    save_model(model, os.path.join(args.out, "model.json"))
    return ["model.json"]


def cmd_rank(args: argparse.Namespace, stage: dict) -> list[str]:
    stage["name"] = "load-corpus"
    index = load_corpus(args.corpus, args.catalog)
    stage["name"] = "load-queries"
    queries = read_queries(args.queries)
    stage["name"] = "rank"
    if args.model is not None:
        model = load_model(args.model)
        meta = model.meta
        retrieval = RetrievalConfig(
            window=int(meta.get("window", args.window)),
            granularity=meta.get("granularity", args.granularity),
        )
        bm25_meta = meta.get("bm25", {})
        bm25 = Bm25Params(
            k1=float(bm25_meta.get("k1", args.k1)), b=float(bm25_meta.get("b", args.b))
        )
        empty = Judgments()
        if meta.get("system") == "macdonald":
            prepared = prepare_macdonald(index, queries, empty, retrieval, bm25)
        else:
            if model.layout is None:
                raise TrainingError("model carries no feature layout and no known system")
            prepared = prepare_queries(index, queries, empty, model.layout, retrieval, bm25)
        rankings = [rank_entities(pq.query_id, model_scores(model, pq)) for pq in prepared]
    else:
        retrieval = _retrieval_from_args(args)
        candidates = collect_candidates(index, queries, retrieval)
        ranker = baseline_ranker(
            args.baseline,
            index,
            bm25=Bm25Params(k1=args.k1, b=args.b),
            lm_lambda=args.lm_lambda,
            kernel_width=args.kernel_width,
        )
        rankings = [ranker(qc) for qc in candidates]
    stage["name"] = "write-artifacts"
    write_run(rankings, os.path.join(args.out, "run.txt"), tag=args.tag)
    return ["run.txt"]


def cmd_eval(args: argparse.Namespace, stage: dict) -> list[str]:
    stage["name"] = "load-run"
    rankings = read_run(args.run)
    stage["name"] = "load-qrels"
    judgments = read_qrels(args.qrels)
    stage["name"] = "evaluate"
    by_qid = {r.query_id: r for r in rankings}
    per_query = {}
    for qid in judgments.query_ids():
        ranking = by_qid.get(qid, Ranking(query_id=qid, items=()))
        per_query[qid] = compute_metrics(
            ranking, judgments.good_for(qid), judgments.bad_for(qid)
        )
    report = EvalReport(system=args.system, per_query=per_query)
    stage["name"] = "write-artifacts"
    write_report(report, os.path.join(args.out, "report.tsv"))
    return ["report.tsv"]


def cmd_xval(args: argparse.Namespace, stage: dict) -> list[str]:
    index, queries, judgments = _load_training_inputs(args, stage)
    name = args.name or args.system
    stage["name"] = "featurize"
    if args.system in BASELINE_SYSTEMS:
        retrieval = _retrieval_from_args(args)
        items: Sequence = collect_candidates(index, queries, retrieval)
        ranker = baseline_ranker(
            args.system,
            index,
            bm25=_bm25_from_args(args),
            lm_lambda=args.lm_lambda,
            kernel_width=args.kernel_width,
        )

        def fit(_train: Sequence) -> Callable:
            return ranker

    else:
        prepared, layout, spec = _prepare_system(args, stage, index, queries, judgments)
        items = prepared
        config = _train_config_from_args(args)
        cutoff_ridge = args.with_cutoff

        def fit(train: Sequence) -> Callable:
            model = _fit_with_optional_cutoff(train, spec, layout, config, cutoff_ridge)
            return lambda pq: rank_entities(pq.query_id, model_scores(model, pq))

    stage["name"] = "cross-validate"
    report = cross_validate(
        items,
        judgments,
        fit,
        protocol=args.protocol,
        folds=args.folds,
        seed=args.seed,
        system=name,
    )
    stage["name"] = "write-artifacts"
    write_report(report, os.path.join(args.out, "report.tsv"))
    return ["report.tsv"]


def cmd_compare(args: argparse.Namespace, stage: dict) -> list[str]:
    stage["name"] = "load-reports"
    reports = [read_report(p) for p in args.reports]
    stage["name"] = "write-artifacts"
    write_comparison(reports, os.path.join(args.out, "comparison.tsv"))
    return ["comparison.tsv"]


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return 2

    stage = {"name": "startup"}
    config = _config_dict(args)
    try:
        os.makedirs(args.out, exist_ok=True)
        artifacts = args.func(args, stage)
    except (
        AggregationError,
        CorpusError,
        EvalError,
        FeatureError,
        SynthError,
        TrainingError,
        OSError,
        ValueError,
    ) as exc:
        print(f"proxrank {args.command}: {stage['name']}: {exc}", file=sys.stderr)
        try:
            write_manifest(args.out, args.command, config, [], "failed", str(exc))
        except OSError:
            pass
        return 1
    write_manifest(args.out, args.command, config, [*artifacts, MANIFEST_NAME], "ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
