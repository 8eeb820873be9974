"""Command line entry point: ``mshtm run | npmi | bench | synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cluster import HdbscanConfig
from .coherence import CooccurrenceStats, score_topic
from .corpus import CleaningConfig, SpeakerRole
from .embedder import EmbedderConfig
from .errors import ConfigurationError, MshtmError, PipelineError
from .pipeline import PipelineConfig, run_mshtm
from .report import load_json
from .vectorizer import VectorizerConfig, load_stopwords

log = logging.getLogger("mshtm")


def _df(value: str) -> float | int:
    return float(value) if any(c in value for c in ".eE") else int(value)


def _roles(value: str) -> frozenset[SpeakerRole]:
    try:
        return frozenset(SpeakerRole(v.strip()) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mshtm", description="Multi-scale hybrid topic modeling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline on a transcript corpus")
    run.add_argument("--input", nargs="+", required=True, help="files or directories")
    run.add_argument("--format", choices=("csv", "mediasum-json"), default="csv")
    run.add_argument("--topics", type=int, default=10)
    run.add_argument("--threshold-k", type=float, default=1.0)
    run.add_argument("--top-words", type=int, default=15)
    run.add_argument("--embedder", choices=("remote", "fallback"), default="fallback")
    run.add_argument("--endpoint", help="embedding service URL (remote embedder)")
    run.add_argument("--embedder-model", default="sentence-embedding")
    run.add_argument("--embedder-batch", type=int, default=64)
    run.add_argument("--embedder-concurrency", type=int, default=1)
    run.add_argument("--embedding-cache", help="directory for cached embeddings")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--hnmf-first-layer", action="store_true")
    run.add_argument("--hnmf-subtopics", type=int, default=2)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--speaker-filter", type=_roles, default=_roles("interviewee,unknown"))
    run.add_argument("--stopwords", choices=("custom", "shoah", "mediasum"), default="custom")
    run.add_argument("--max-df", type=float, default=0.8)
    run.add_argument("--min-df", type=_df, default=0.05)
    run.add_argument("--min-cluster-size", type=int, default=15)
    run.add_argument("--min-samples", type=int)
    run.add_argument("--reduce-dim", type=int, default=5)
    run.add_argument("--alpha-w", type=float, default=0.0)
    run.add_argument("--alpha-h", type=float, default=0.0)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--trace-memory", action="store_true")

    npmi = sub.add_parser("npmi", help="rescore topic coherence from a saved report")
    npmi.add_argument("--report", required=True)
    npmi.add_argument("--sentences", help="sentences.jsonl (default: next to the report)")

    bench = sub.add_parser("bench", help="hybrid vs monolithic clustering on a planted corpus")
    bench.add_argument("--sentences", type=int, default=50000)
    bench.add_argument("--topics", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--repeats", type=int, default=1, help="timing runs per path; the best is kept")

    synth = sub.add_parser("synth", help="write a planted synthetic transcript CSV")
    synth.add_argument("--sentences", type=int, default=6000)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    return p


def _config(args) -> PipelineConfig:
    embedder = EmbedderConfig(
        provider="remote" if args.embedder == "remote" else "hashed-fallback",
        endpoint=args.endpoint,
        model=args.embedder_model,
        batch_size=args.embedder_batch,
        max_concurrency=args.embedder_concurrency,
        cache_dir=args.embedding_cache,
    )
    return PipelineConfig(
        inputs=tuple(args.input),
        input_format=args.format,
        cleaning=CleaningConfig(speaker_filter=args.speaker_filter),
        vectorizer=VectorizerConfig(
            max_df=args.max_df, min_df=args.min_df, stopwords=load_stopwords(args.stopwords)
        ),
        n_topics=args.topics,
        alpha_W=args.alpha_w,
        alpha_H=args.alpha_h,
        threshold_k=args.threshold_k,
        n_words=args.top_words,
        embedder=embedder,
        reduce_dim=args.reduce_dim,
        cluster=HdbscanConfig(min_cluster_size=args.min_cluster_size, min_samples=args.min_samples),
        hnmf_first_layer=args.hnmf_first_layer,
        hnmf_subtopics=args.hnmf_subtopics,
        workers=args.workers,
        out_dir=args.out,
        seed=args.seed,
        trace_memory=args.trace_memory,
    )


def cmd_run(args) -> int:
    try:
        cfg = _config(args)
    except MshtmError as exc:
        raise PipelineError("config", exc) from exc
    report = run_mshtm(cfg)
    n_sub = len(report.subtopics)
    print(
        f"{report.corpus.documents} documents, {report.corpus.sentences} sentence documents, "
        f"{len(report.topics)} topics, {n_sub} subtopics, {len(report.unassigned)} unassigned"
    )
    for t in report.topics:
        npmi = "n/a" if t.npmi is None else f"{t.npmi:+.3f}"
        print(f"  topic {t.index:>2} [{t.status}] npmi {npmi}  {' '.join(t.keywords[:8])}")
    print(f"wrote {Path(args.out) / 'report.json'}")
    return 0


def cmd_npmi(args) -> int:
    try:
        report = load_json(args.report)
    except (OSError, ValueError) as exc:
        raise PipelineError("load-report", exc) from exc
    path = Path(args.sentences) if args.sentences else Path(args.report).with_name("sentences.jsonl")
    try:
        texts = [json.loads(line)["text"] for line in path.read_text(encoding="utf-8").splitlines() if line]
    except (OSError, ValueError, KeyError) as exc:
        raise PipelineError("load-sentences", exc) from exc
    vc = VectorizerConfig(ngram_range=tuple(report.config.get("ngram_range", (1, 1))))
    stats = CooccurrenceStats.from_token_sets(vc.analyze(t) for t in texts)

    def show(label: str, words: list[str]) -> None:
        try:
            scored = score_topic(words, stats)
        except ConfigurationError as exc:
            print(f"{label}\tn/a\t({exc})")
            return
        extra = f"\tskipped={','.join(scored.skipped)}" if scored.skipped else ""
        print(f"{label}\t{scored.score:.6f}{extra}")

    for t in report.topics:
        show(f"topic {t.index}", t.keywords)
        for s in report.subtopics_of(t.index):
            show(f"topic {t.index}/{s.cluster}", s.top_words)
    return 0


def cmd_bench(args) -> int:
    from .bench import compare_efficiency
    from .synthetic import planted_corpus

    corpus = planted_corpus(args.sentences, seed=args.seed)
    result = compare_efficiency(
        PipelineConfig(n_topics=args.topics, seed=args.seed), corpus.documents, repeats=args.repeats
    )
    print(json.dumps(result.as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    from .synthetic import planted_corpus, write_csv

    corpus = planted_corpus(args.sentences, seed=args.seed)
    write_csv(corpus, args.out)
    print(f"wrote {corpus.n_sentences} sentences in {len(corpus.documents)} documents to {args.out}")
    return 0


COMMANDS = {"run": cmd_run, "npmi": cmd_npmi, "bench": cmd_bench, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"mshtm: error: {exc}", file=sys.stderr)
        return 2
    except MshtmError as exc:
        print(f"mshtm: error: [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
