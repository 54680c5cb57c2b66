"""Command-line pipeline: preprocess, train, score, estimate, evaluate.

Every stage is a pure function of its declared input files and flags and
writes plain files, so runs can be diffed and reproduced. ``train`` records a
manifest (resolved configuration, corpus digest, output digests) alongside
its artifacts. Exit codes: 0 success, 1 command-line usage error, 2 runtime
error; failures print a single ``error: ...`` line on stderr and remove
partially written outputs. Set TOPICEVAL_LOG=debug|info|warning to control
log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    EncodedCorpus,
    PreprocessConfig,
    load_stopwords,
    preprocess,
    read_jsonl,
    read_plaintext,
)
from .cooccurrence import (
    UNIT_DOCUMENT,
    UNIT_WINDOW,
    coherence_topic,
    count_units,
    npmi_topic,
    pmi_topic,
)
from .estimator import (
    CrossDomainResult,
    FeatureMatrix,
    cross_domain_fit_eval,
    merge_features,
    read_features_csv,
    train_svr,
    write_features_csv,
)
from .evaluation import (
    CorrelationTable,
    ablate,
    correlation_table,
    export_scatter,
    read_ratings_csv,
    write_scatter_csv,
)
from .posterior_metrics import (
    TopicScoreVector,
    mu_variability,
    sigma_variability,
    stability,
    variability,
)
from .sampler import (
    LdaConfig,
    PhiSampleStore,
    PosteriorSummary,
    build_topic_reports,
    run_chain,
)

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_RUNTIME = 2

MANIFEST_FORMAT = "topiceval-manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
POSTERIOR_NAME = "posterior.bin"
PHI_STORE_NAME = "phi_samples.bin"
TOP_WORDS_NAME = "top_words.json"

METRIC_KEYS = ("variability", "stability", "mu", "sigma", "pmi", "npmi", "coherence")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class _OutputGuard:
    """Tracks files written by the running command for cleanup on failure."""

    def __init__(self):
        self.paths = []

    def track(self, path):
        self.paths.append(Path(path))
        return path

    def discard(self):
        for path in self.paths:
            try:
                if path.exists():
                    os.unlink(path)
            except OSError:
                pass


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _setup_logging():
    level = os.environ.get("TOPICEVAL_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# ---------------------------------------------------------------- preprocess

def _cmd_preprocess(args, guard):
    docs = read_plaintext(args.input) if args.plain else read_jsonl(args.input)
    stopwords = load_stopwords(args.stopwords) if args.stopwords else None
    kwargs = {} if stopwords is None else {"stopwords": stopwords}
    config = PreprocessConfig(
        min_term_count=args.min_count,
        strip_digits=not args.keep_digits,
        strip_proper_nouns=not args.keep_proper_nouns,
        lowercase=not args.no_lowercase,
        **kwargs,
    )
    corpus = preprocess(docs, config)
    guard.track(args.out)
    corpus.save(args.out)
    logger.info(
        "wrote %s: %d documents, %d terms, %d tokens",
        args.out, corpus.num_docs, corpus.vocab_size, corpus.num_tokens,
    )


# --------------------------------------------------------------------- train

def _parse_alpha(text: str):
    if text == "auto":
        return None
    return float(text)


def _cmd_train(args, guard):
    corpus = EncodedCorpus.load(args.corpus)
    config = LdaConfig(
        num_topics=args.topics,
        alpha=_parse_alpha(args.alpha),
        beta=args.beta,
        total_iterations=args.iters,
        burn_in=args.burnin,
        thin=args.thin,
        seed=args.seed,
        top_n=args.top_n,
    )
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()

    phi_path = run_dir / PHI_STORE_NAME
    guard.track(phi_path)
    result = run_chain(corpus, config, phi_path, validate_counts=args.validate_counts)

    posterior_path = run_dir / POSTERIOR_NAME
    guard.track(posterior_path)
    result.summary.save(posterior_path)

    top_words_path = run_dir / TOP_WORDS_NAME
    guard.track(top_words_path)
    top_words_path.write_text(
        json.dumps({"topics": result.top_words}, indent=2), encoding="utf-8"
    )

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "tool_version": __version__,
        "command": "train",
        "created_utc": started,
        "completed_utc": _utcnow(),
        "corpus": {"path": str(Path(args.corpus).resolve()), "digest": corpus.digest()},
        "config": {
            "num_topics": config.num_topics,
            "alpha": config.resolved_alpha,
            "alpha_flag": args.alpha,
            "beta": config.beta,
            "total_iterations": config.total_iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "seed": config.seed,
            "top_n": config.top_n,
            "collected_samples": config.num_samples,
        },
        "outputs": {
            "posterior": {"path": POSTERIOR_NAME, "digest": _sha256(posterior_path)},
            "phi_store": {"path": PHI_STORE_NAME, "digest": _sha256(phi_path)},
            "top_words": {"path": TOP_WORDS_NAME, "digest": _sha256(top_words_path)},
        },
    }
    manifest_path = run_dir / MANIFEST_NAME
    guard.track(manifest_path)
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.info("run complete: %s (%d samples)", run_dir, config.num_samples)


def load_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise ValueError(f"{run_dir}: no {MANIFEST_NAME} (not a training run directory)")
    manifest = json.loads(path.read_text("utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a run manifest")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version {manifest.get('version')}")
    return manifest


# --------------------------------------------------------------------- score

def _load_reference_corpus(path) -> EncodedCorpus:
    """Accept either an encoded corpus file or raw JSON-lines documents.

    Raw documents get the default preprocessing with min_term_count=1 so no
    reference term is pruned before counting.
    """
    try:
        return EncodedCorpus.load(path)
    except (ValueError, json.JSONDecodeError):
        pass
    docs = read_jsonl(path)
    return preprocess(docs, PreprocessConfig(min_term_count=1))


def _term_ids(terms, vocabulary, next_sentinel):
    """Map terms into a counting vocabulary; unseen terms get unique negative
    ids so they behave as never-occurring words."""
    ids = []
    for term in terms:
        ref_id = vocabulary.index.get(term)
        if ref_id is None:
            ids.append(next_sentinel)
            next_sentinel -= 1
        else:
            ids.append(ref_id)
    return ids, next_sentinel


def _cmd_score(args, guard):
    run_dir = Path(args.run)
    manifest = load_manifest(run_dir)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRIC_KEYS]
    if unknown:
        raise ValueError(
            f"unknown metrics: {', '.join(unknown)} (choose from {', '.join(METRIC_KEYS)})"
        )
    if not metrics:
        raise ValueError("no metrics requested")

    top_words = json.loads((run_dir / manifest["outputs"]["top_words"]["path"]).read_text("utf-8"))[
        "topics"
    ]
    num_topics = len(top_words)
    dataset = args.dataset or Path(manifest["corpus"]["path"]).stem

    columns = {}
    if {"variability", "mu", "sigma"} & set(metrics):
        summary = PosteriorSummary.load(run_dir / manifest["outputs"]["posterior"]["path"])
        if "variability" in metrics:
            columns["variability"] = variability(summary).scores
        if "mu" in metrics:
            columns["mu_variability"] = mu_variability(summary).scores
        if "sigma" in metrics:
            columns["sigma_variability"] = sigma_variability(summary).scores
    if "stability" in metrics:
        store = PhiSampleStore.open(run_dir / manifest["outputs"]["phi_store"]["path"])
        columns["stability"] = stability(store).scores

    if {"pmi", "npmi", "coherence"} & set(metrics):
        train_corpus = EncodedCorpus.load(manifest["corpus"]["path"])
        if train_corpus.digest() != manifest["corpus"]["digest"]:
            raise ValueError(
                f"corpus file {manifest['corpus']['path']} changed since training"
            )
        if {"pmi", "npmi"} & set(metrics):
            pair_corpus = (
                _load_reference_corpus(args.ref_corpus) if args.ref_corpus else train_corpus
            )
            sentinel = -1
            topic_ids = []
            for words in top_words:
                ids, sentinel = _term_ids(words, pair_corpus.vocabulary, sentinel)
                topic_ids.append(ids)
            restrict = {i for ids in topic_ids for i in ids if i >= 0}
            unit_kind = UNIT_DOCUMENT if args.pmi_units == "document" else UNIT_WINDOW
            counts = count_units(
                pair_corpus, unit_kind, window=args.window, restrict_to=restrict
            )
            if "pmi" in metrics:
                columns["pmi"] = np.array([pmi_topic(ids, counts) for ids in topic_ids])
            if "npmi" in metrics:
                columns["npmi"] = np.array([npmi_topic(ids, counts) for ids in topic_ids])
        if "coherence" in metrics:
            sentinel = -1
            topic_ids = []
            for words in top_words:
                ids, sentinel = _term_ids(words, train_corpus.vocabulary, sentinel)
                topic_ids.append(ids)
            restrict = {i for ids in topic_ids for i in ids if i >= 0}
            doc_counts = count_units(train_corpus, UNIT_DOCUMENT, restrict_to=restrict)
            columns["coherence"] = np.array(
                [coherence_topic(ids, doc_counts) for ids in topic_ids]
            )

    column_name = {
        "variability": "variability", "stability": "stability",
        "mu": "mu_variability", "sigma": "sigma_variability",
        "pmi": "pmi", "npmi": "npmi", "coherence": "coherence",
    }
    names = [column_name[m] for m in metrics]
    vectors = [TopicScoreVector(n, columns[n]) for n in names]
    reports = build_topic_reports(top_words, vectors)
    features = FeatureMatrix(
        feature_names=names,
        rows=np.array([[r.scores[n] for n in names] for r in reports]),
        dataset_tags=[dataset] * num_topics,
        topic_ids=[r.topic_id for r in reports],
    )
    guard.track(args.out)
    write_features_csv(features, args.out)
    logger.info("wrote %s: %d topics, metrics %s", args.out, num_topics, ", ".join(names))


# ----------------------------------------------------------------- estimator

def _svr_kwargs(args) -> dict:
    gamma = None if args.gamma == "auto" else float(args.gamma)
    return {
        "kernel": args.kernel,
        "c": args.c,
        "epsilon": args.epsilon,
        "gamma": gamma,
    }


def _cmd_train_estimator(args, guard):
    tables = [read_features_csv(p) for p in args.features]
    merged = merge_features(tables)
    model = train_svr(merged, **_svr_kwargs(args))
    guard.track(args.out)
    model.save(args.out)
    logger.info(
        "wrote %s: %d support vectors, %d iterations",
        args.out, len(model.dual_coef), model.iterations,
    )


# ------------------------------------------------------------------ evaluate

def write_correlation_csv(table: CorrelationTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + table.datasets + ["mean"])
        for metric in table.metrics:
            row = [metric]
            for dataset in table.datasets:
                r = table.values[(metric, dataset)]
                row.append("" if r is None else repr(r))
            mean = table.means[metric]
            row.append("" if mean is None else repr(mean))
            writer.writerow(row)


def read_correlation_csv(path) -> CorrelationTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:1] != ["metric"] or header[-1:] != ["mean"]:
            raise ValueError(f"{path}: unexpected correlation header")
        datasets = header[1:-1]
        metrics, values, means = [], {}, {}
        for row in reader:
            metric = row[0]
            metrics.append(metric)
            for dataset, cell in zip(datasets, row[1:-1]):
                values[(metric, dataset)] = float(cell) if cell else None
            means[metric] = float(row[-1]) if row[-1] else None
    return CorrelationTable(metrics=metrics, datasets=datasets, values=values, means=means)


def _cmd_evaluate(args, guard):
    scores = read_features_csv(args.scores)
    ratings = read_ratings_csv(args.ratings)
    table = correlation_table(scores, ratings)
    guard.track(args.out)
    write_correlation_csv(table, args.out)


# ---------------------------------------------------------------- cross-eval

CROSS_EVAL_HEADER = ["mode", "kind", "train", "test", "pearson_r", "error"]


def write_cross_eval_csv(result: CrossDomainResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CROSS_EVAL_HEADER)
        for cell in result.cells:
            writer.writerow([
                result.mode, "cell", cell.train, cell.test,
                "" if cell.r is None else repr(cell.r),
                cell.error or "",
            ])
        for test, mean in result.means.items():
            writer.writerow([
                result.mode, "mean", "", test, "" if mean is None else repr(mean), "",
            ])


def read_cross_eval_csv(path) -> CrossDomainResult:
    from .estimator import SplitEval

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CROSS_EVAL_HEADER:
            raise ValueError(f"{path}: unexpected cross-eval header")
        mode = None
        cells, means = [], {}
        for row in reader:
            mode = row[0]
            if row[1] == "cell":
                cells.append(
                    SplitEval(
                        train=row[2],
                        test=row[3],
                        r=float(row[4]) if row[4] else None,
                        error=row[5] or None,
                    )
                )
            elif row[1] == "mean":
                means[row[3]] = float(row[4]) if row[4] else None
            else:
                raise ValueError(f"{path}: unknown row kind {row[1]!r}")
    return CrossDomainResult(mode=mode, cells=cells, means=means)


def _cmd_cross_eval(args, guard):
    tables = [read_features_csv(p) for p in args.features]
    mode = args.mode.replace("-", "_")
    result = cross_domain_fit_eval(tables, mode, **_svr_kwargs(args))
    guard.track(args.out)
    write_cross_eval_csv(result, args.out)


# -------------------------------------------------------------------- ablate

ABLATION_HEADER = ["removed_feature", "test", "pearson_r", "error"]


def write_ablation_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_HEADER)
        for row in rows:
            writer.writerow([
                row.removed_feature, row.test,
                "" if row.r is None else repr(row.r),
                row.error or "",
            ])


def read_ablation_csv(path) -> list:
    from .evaluation import AblationRow

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ABLATION_HEADER:
            raise ValueError(f"{path}: unexpected ablation header")
        return [
            AblationRow(
                removed_feature=row[0],
                test=row[1],
                r=float(row[2]) if row[2] else None,
                error=row[3] or None,
            )
            for row in reader
        ]


def _cmd_ablate(args, guard):
    tables = [read_features_csv(p) for p in args.features]
    rows = ablate(tables, **_svr_kwargs(args))
    guard.track(args.out)
    write_ablation_csv(rows, args.out)


# ------------------------------------------------------------ export-scatter

def _cmd_export_scatter(args, guard):
    scores = read_features_csv(args.scores)
    ratings = read_ratings_csv(args.ratings)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets = []
    for tag in scores.dataset_tags:
        if tag not in datasets:
            datasets.append(tag)
    for dataset in datasets:
        idx = [i for i, tag in enumerate(scores.dataset_tags) if tag == dataset]
        ids = [scores.topic_ids[i] for i in idx]
        for metric in scores.feature_names:
            table = export_scatter(
                ids, scores.column(metric)[idx], ratings, dataset=dataset, metric_name=metric
            )
            path = out_dir / f"{dataset}__{metric}.csv"
            guard.track(path)
            write_scatter_csv(table, path)


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topiceval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"topiceval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="tokenize, filter and encode raw documents")
    p.add_argument("--input", required=True, help="JSON-lines {'id','text'} records")
    p.add_argument("--plain", action="store_true", help="input is plain text, one doc per line")
    p.add_argument("--stopwords", help="stopword file (default: bundled English list)")
    p.add_argument("--min-count", type=int, default=3, dest="min_count")
    p.add_argument("--keep-digits", action="store_true")
    p.add_argument("--keep-proper-nouns", action="store_true")
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="run a collapsed Gibbs chain")
    p.add_argument("--corpus", required=True)
    p.add_argument("--topics", type=int, default=100)
    p.add_argument("--alpha", default="auto", help="'auto' = 50/K")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-n", type=int, default=10, dest="top_n")
    p.add_argument("--validate-counts", action="store_true",
                   help="check count conservation after every sweep")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score topics from a training run")
    p.add_argument("--run", required=True, help="run directory written by train")
    p.add_argument("--metrics", default=",".join(METRIC_KEYS))
    p.add_argument("--ref-corpus", dest="ref_corpus",
                   help="external corpus file for pmi/npmi counting")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--pmi-units", choices=["window", "document"], default="window",
                   dest="pmi_units")
    p.add_argument("--dataset", help="dataset tag for output rows (default: corpus stem)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    def add_svr_flags(p):
        p.add_argument("--kernel", choices=["rbf", "linear"], default="rbf")
        p.add_argument("--c", type=float, default=1.0)
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--gamma", default="auto", help="'auto' = 1/num_features")

    p = sub.add_parser("train-estimator", help="fit the SVR quality estimator")
    p.add_argument("--features", nargs="+", required=True)
    add_svr_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_estimator)

    p = sub.add_parser("evaluate", help="per-metric correlation with human ratings")
    p.add_argument("--scores", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("cross-eval", help="cross-domain estimator evaluation")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--mode", choices=["one-to-one", "two-to-one"], required=True)
    add_svr_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cross_eval)

    p = sub.add_parser("ablate", help="remove one feature at a time (two-to-one)")
    p.add_argument("--features", nargs="+", required=True)
    add_svr_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export-scatter", help="per-metric scatter data vs human means")
    p.add_argument("--scores", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_export_scatter)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    guard = _OutputGuard()
    try:
        args.func(args, guard)
        return 0
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError, KeyError) as exc:
        guard.discard()
        message = str(exc).replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
