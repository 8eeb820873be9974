"""End-to-end run: broad NMF topics, threshold assignment, per-topic subtopics.

Stages, in order: ingest, vectorize, factorize, segment, encode-sentences,
assign, one subtopic pass per broad topic, coherence, report. Any failure is
re-raised as PipelineError tagged with the stage name.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import coherence, nmf, report as rpt
from .assigner import assign, assignment_mask, compute_thresholds, threshold_value, write_assignments_csv
from .cluster import NOISE, ClusterLabels, HdbscanConfig, hdbscan, reduce
from .corpus import CleanDocument, CleaningConfig, IngestTally, SpeakerRole, load_corpus
from .embedder import EmbedderConfig, make_embedder
from .errors import ConfigurationError, DegenerateInputError, PipelineError
from .instrument import Instrument
from .representation import ctfidf, top_word_scores, topic_linkage, write_top_words_csv
from .segmenter import SentenceDocument, split_corpus
from .vectorizer import VectorizerConfig, Vocabulary, build_vocabulary, load_stopwords, tfidf

logger = logging.getLogger(__name__)


def _default_vectorizer() -> VectorizerConfig:
    return VectorizerConfig(max_df=0.8, min_df=0.05, stopwords=load_stopwords("custom"))


@dataclass(frozen=True)
class PipelineConfig:
    inputs: tuple[str, ...] = ()
    input_format: str = "csv"
    cleaning: CleaningConfig = field(
        default_factory=lambda: CleaningConfig(
            speaker_filter=frozenset({SpeakerRole.INTERVIEWEE, SpeakerRole.UNKNOWN})
        )
    )
    vectorizer: VectorizerConfig = field(default_factory=_default_vectorizer)
    n_topics: int = 10
    nmf_max_iter: int = 400
    nmf_tol: float = 1e-4
    alpha_W: float = 0.0
    alpha_H: float = 0.0
    nmf_init: str = "nndsvd"
    threshold_k: float = 1.0
    n_words: int = 15
    max_chunk: int = 5
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    reduce_dim: int = 5
    reduce_method: str = "truncated-svd"
    cluster: HdbscanConfig = field(default_factory=HdbscanConfig)
    hnmf_first_layer: bool = False
    hnmf_subtopics: int = 2
    workers: int = 1
    out_dir: str | None = None
    seed: int = 0
    trace_memory: bool = False

    def __post_init__(self):
        if self.n_topics < 2:
            raise ConfigurationError("n_topics must be >= 2")
        if self.n_words < 1:
            raise ConfigurationError("n_words must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.hnmf_subtopics < 1:
            raise ConfigurationError("hnmf_subtopics must be >= 1")
        if self.input_format not in ("csv", "mediasum-json"):
            raise ConfigurationError(f"unknown input format {self.input_format!r}")
        if self.reduce_method == "truncated-svd" and self.reduce_dim > self.embedder.dim:
            raise ConfigurationError(
                f"reduce_dim {self.reduce_dim} exceeds embedding dim {self.embedder.dim}"
            )
        self.nmf_config(self.n_topics)

    def nmf_config(self, rank: int) -> nmf.NmfConfig:
        return nmf.NmfConfig(
            rank=rank,
            max_iter=self.nmf_max_iter,
            tol=self.nmf_tol,
            alpha_W=self.alpha_W,
            alpha_H=self.alpha_H,
            seed=self.seed,
            init=self.nmf_init,
        )

    def embedder_config(self) -> EmbedderConfig:
        # the run seed is mixed into the hashing key; remote providers ignore it
        return dataclasses.replace(self.embedder, seed=self.embedder.seed ^ self.seed)

    @property
    def min_topic_size(self) -> int:
        return max(self.cluster.min_cluster_size, self.cluster.k + 1)

    def describe(self) -> dict:
        """JSON-safe summary recorded in the report (no output paths)."""
        return {
            "inputs": list(self.inputs),
            "input_format": self.input_format,
            "speaker_filter": sorted(r.value for r in self.cleaning.speaker_filter),
            "max_df": self.vectorizer.max_df,
            "min_df": self.vectorizer.min_df,
            "ngram_range": list(self.vectorizer.ngram_range),
            "stopwords": len(self.vectorizer.stopwords),
            "n_topics": self.n_topics,
            "nmf": {
                "max_iter": self.nmf_max_iter,
                "tol": self.nmf_tol,
                "alpha_W": self.alpha_W,
                "alpha_H": self.alpha_H,
                "init": self.nmf_init,
            },
            "threshold_k": self.threshold_k,
            "n_words": self.n_words,
            "max_chunk": self.max_chunk,
            "embedder": {"provider": self.embedder.provider, "dim": self.embedder.dim, "model": self.embedder.model},
            "reduce": {"method": self.reduce_method, "dim": self.reduce_dim},
            "cluster": {
                "min_cluster_size": self.cluster.min_cluster_size,
                "min_samples": self.cluster.k,
                "metric": self.cluster.metric,
            },
            "hnmf_first_layer": self.hnmf_first_layer,
            "hnmf_subtopics": self.hnmf_subtopics,
            "seed": self.seed,
        }


@contextmanager
def _stage(inst: Instrument, name: str):
    with inst.stage(name):
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc


class SubtopicModel:
    """One embedder, reduction and clustering setup shared by every broad topic."""

    def __init__(self, cfg: PipelineConfig, inst: Instrument, **embedder_kwargs):
        inst.count("subtopic_model_constructions")
        self.cfg = cfg
        self.embedder = make_embedder(cfg.embedder_config(), **embedder_kwargs)
        self.cluster_cfg = cfg.cluster

    def cluster(self, texts: Sequence[str]) -> ClusterLabels:
        E = self.embedder.embed(texts)
        dim = min(self.cfg.reduce_dim, E.dim)
        R = reduce(E, dim, self.cfg.reduce_method)
        return hdbscan(R, self.cluster_cfg)


@dataclass(eq=False)
class TopicSubtopics:
    topic: int
    members: np.ndarray
    status: str
    labels: np.ndarray | None = None
    entries: list[rpt.SubtopicEntry] = field(default_factory=list)
    linkage: rpt.LinkageEntry | None = None


def _subtopics_for(
    topic: int,
    members: np.ndarray,
    sentences: list[SentenceDocument],
    model: SubtopicModel,
    cfg: PipelineConfig,
) -> TopicSubtopics:
    if members.size == 0:
        return TopicSubtopics(topic, members, "empty")
    if members.size < cfg.min_topic_size:
        return TopicSubtopics(topic, members, "too-small")
    texts = [sentences[j].text for j in members]
    labels = model.cluster(texts).labels
    if not np.any(labels != NOISE):
        return TopicSubtopics(topic, members, "all-noise", labels)

    groups: dict[int, list[str]] = {}
    for text, lab in zip(texts, labels.tolist()):
        if lab != NOISE:
            groups.setdefault(lab, []).append(text)
    local_vocab = build_vocabulary(
        texts,
        VectorizerConfig(ngram_range=cfg.vectorizer.ngram_range, stopwords=cfg.vectorizer.stopwords),
    )
    scores = ctfidf(groups, local_vocab)
    words = top_word_scores(scores, cfg.n_words)
    entries = []
    for c, size in zip(scores.cluster_ids, scores.sizes):
        ids = [sentences[j].sent_id for j in members[labels == c]]
        entries.append(
            rpt.SubtopicEntry(
                topic=topic,
                cluster=c,
                size=size,
                top_words=[w for w, _ in words[c]],
                word_scores=[s for _, s in words[c]],
                sentence_ids=ids,
            )
        )
    tree = topic_linkage(scores)
    linkage = rpt.LinkageEntry(
        topic=topic,
        leaves=list(tree.leaves),
        merges=[(int(a), int(b), float(d), int(n)) for a, b, d, n in tree.merges.tolist()],
    )
    return TopicSubtopics(topic, members, "clustered", labels, entries, linkage)


def _hnmf_dictionary(X, W, H, cfg: PipelineConfig) -> tuple[np.ndarray, list[int | None]]:
    """Refine each first-layer topic with a small NMF on its own documents."""
    blocks = nmf.hierarchical_split(X, H, nmf.mean_std_rule(cfg.threshold_k))
    columns, parents = [], []
    for block in blocks:
        sub = block.matrix.values
        rank = min(cfg.hnmf_subtopics, *sub.shape)
        if rank < 1 or sub.nnz == 0:
            columns.append(W[:, [block.topic]])
            parents.append(block.topic)
            continue
        child = nmf.factorize(sub, cfg.nmf_config(rank))
        columns.append(child.W)
        parents.extend([block.topic] * rank)
    return np.hstack(columns), parents


@dataclass(eq=False)
class RunResult:
    report: rpt.TopicHierarchyReport
    instrument: Instrument
    vocabulary: Vocabulary
    model: nmf.NmfModel
    W: np.ndarray
    sentences: list[SentenceDocument]
    H_sentence: np.ndarray
    subtopics: list[TopicSubtopics]


def run_mshtm(
    cfg: PipelineConfig,
    documents: Sequence[CleanDocument] | None = None,
    **embedder_kwargs,
) -> rpt.TopicHierarchyReport:
    return run_mshtm_detailed(cfg, documents, **embedder_kwargs).report


def run_mshtm_detailed(
    cfg: PipelineConfig,
    documents: Sequence[CleanDocument] | None = None,
    **embedder_kwargs,
) -> RunResult:
    inst = Instrument(trace_memory=cfg.trace_memory)
    try:
        return _run(cfg, documents, inst, embedder_kwargs)
    finally:
        inst.close()


def _run(cfg, documents, inst: Instrument, embedder_kwargs) -> RunResult:
    tally = IngestTally()
    with _stage(inst, "ingest"):
        if documents is None:
            if not cfg.inputs:
                raise ConfigurationError("no input paths given")
            documents = load_corpus(cfg.inputs, cfg.input_format, cfg.cleaning, tally=tally)
        documents = list(documents)
        if not documents:
            raise DegenerateInputError("corpus is empty after speaker filtering and cleaning")

    with _stage(inst, "vectorize"):
        doc_texts = [d.text for d in documents]
        vocab = build_vocabulary(doc_texts, cfg.vectorizer)
        X = tfidf(doc_texts, vocab)

    with _stage(inst, "factorize"):
        model = nmf.factorize(X.values, cfg.nmf_config(cfg.n_topics))
        W, H_doc = model.W, model.H
        parents: list[int | None] = [None] * W.shape[1]
        if cfg.hnmf_first_layer:
            W, parents = _hnmf_dictionary(X, model.W, model.H, cfg)
            H_doc = nmf.transform(W, X.values, cfg.nmf_config(W.shape[1]))
        keywords = nmf.top_keywords(W, vocab, cfg.n_words)
        r = W.shape[1]

    with _stage(inst, "segment"):
        sentences = split_corpus(documents, cfg.max_chunk)
        if not sentences:
            raise DegenerateInputError("segmentation produced no sentence documents")

    with _stage(inst, "encode-sentences"):
        sentence_terms = [cfg.vectorizer.analyze(s.text) for s in sentences]
        Xs = tfidf(sentence_terms, vocab)
        Hs = nmf.transform(W, Xs.values, cfg.nmf_config(r))

    with _stage(inst, "assign"):
        thresholds = compute_thresholds(Hs, cfg.threshold_k)
        assignments = assign(Hs, thresholds, [s.sent_id for s in sentences])
        mask = assignment_mask(Hs, thresholds)
        doc_counts = [
            int(np.count_nonzero(H_doc[t] >= threshold_value(H_doc[t], cfg.threshold_k))) for t in range(r)
        ]

    with _stage(inst, "subtopic-setup"):
        sub_model = SubtopicModel(cfg, inst, **embedder_kwargs)

    def one(t: int) -> TopicSubtopics:
        with _stage(inst, f"subtopics[{t}]"):
            return _subtopics_for(t, np.flatnonzero(mask[t]), sentences, sub_model, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_topic = list(pool.map(one, range(r)))
    else:
        per_topic = [one(t) for t in range(r)]

    with _stage(inst, "coherence"):
        stats = coherence.CooccurrenceStats.from_token_sets(sentence_terms)

        def npmi(words: Sequence[str]) -> tuple[float | None, list[str]]:
            try:
                scored = coherence.score_topic(words, stats)
            except ConfigurationError:
                return None, [w for w in words if not stats.occurs(w)]
            return scored.score, list(scored.skipped)

        topic_npmi = [npmi(kw) for kw in keywords]
        for block in per_topic:
            for entry in block.entries:
                entry.npmi = npmi(entry.top_words)[0]

    with _stage(inst, "report"):
        report = _assemble(
            cfg, documents, vocab, W, keywords, thresholds, doc_counts, parents, mask,
            sentences, assignments, per_topic, topic_npmi, tally, inst,
        )

    if cfg.out_dir:
        with _stage(inst, "write"):
            _write_outputs(cfg, report, assignments, sentences, per_topic, model, vocab, keywords)
    report.metrics = inst.summary()
    if cfg.out_dir:
        Path(cfg.out_dir, "runtime.json").write_text(
            json.dumps(report.metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return RunResult(report, inst, vocab, model, W, sentences, Hs, per_topic)


def _assemble(
    cfg, documents, vocab, W, keywords, thresholds, doc_counts, parents, mask,
    sentences, assignments, per_topic, topic_npmi, tally, inst,
) -> rpt.TopicHierarchyReport:
    topics = []
    for t, block in enumerate(per_topic):
        col = W[:, t]
        weights = [float(col[vocab.term_index[w]]) for w in keywords[t]]
        noise = []
        if block.labels is not None:
            noise = [sentences[j].sent_id for j in block.members[block.labels == NOISE]]
        th = thresholds[t]
        score, skipped = topic_npmi[t]
        topics.append(
            rpt.TopicEntry(
                index=t,
                keywords=keywords[t],
                keyword_weights=weights,
                document_count=doc_counts[t],
                sentence_count=int(mask[t].sum()),
                threshold=rpt.ThresholdEntry(mean=th.mean, std=th.std, k=th.k, value=th.threshold),
                status=block.status,
                parent=parents[t],
                npmi=score,
                npmi_skipped=skipped,
                noise=noise,
            )
        )
    return rpt.TopicHierarchyReport(
        config=cfg.describe(),
        corpus=rpt.CorpusSummary(
            documents=len(documents),
            sentences=len(sentences),
            vocabulary_size=len(vocab),
            vocabulary_sha256=vocab.digest(),
            skipped_records=tally.skipped_records,
            replaced_bytes=tally.replaced_bytes,
        ),
        topics=topics,
        subtopics=[e for block in per_topic for e in block.entries],
        linkages=[block.linkage for block in per_topic if block.linkage is not None],
        sentences=[
            rpt.SentenceEntry(
                sent_id=s.sent_id, doc_id=s.doc_id, timestamp=s.timestamp, topics=sorted(a.assigned_topics)
            )
            for s, a in zip(sentences, assignments)
        ],
        unassigned=[a.sent_id for a in assignments if not a.assigned_topics],
        counters=dict(sorted(inst.counters.items())),
        assignments_ref="assignments.csv" if cfg.out_dir else None,
        metrics_ref="runtime.json" if cfg.out_dir else None,
    )


def _write_outputs(cfg, report, assignments, sentences, per_topic, model, vocab, keywords) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    provenance = {s.sent_id: (s.doc_id, s.timestamp) for s in sentences}
    sub_labels = {}
    for block in per_topic:
        if block.labels is None:
            continue
        for j, lab in zip(block.members.tolist(), block.labels.tolist()):
            sub_labels[(sentences[j].sent_id, block.topic)] = lab
    write_assignments_csv(out / "assignments.csv", assignments, provenance, sub_labels)
    with open(out / "sentences.jsonl", "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(dataclasses.asdict(s), ensure_ascii=False, sort_keys=True) + "\n")
    write_top_words_csv(out / "top_words.csv", {f"topic_{t}": kw for t, kw in enumerate(keywords)}, cfg.n_words)
    nmf.save_model(model, out / "nmf_model.json", vocab)
    rpt.export_json(report, out / "report.json")
    rpt.export_html(report, out / "report.html")


# ------------------------------------------------------------ baseline


@dataclass(eq=False)
class BaselineResult:
    labels: ClusterLabels
    top_words: dict[int, list[str]]
    instrument: Instrument
    n_sentences: int


def run_baseline(
    cfg: PipelineConfig,
    documents: Sequence[CleanDocument],
    **embedder_kwargs,
) -> BaselineResult:
    """Cluster every sentence document at once with the same subtopic setup."""
    inst = Instrument(trace_memory=cfg.trace_memory)
    try:
        with _stage(inst, "segment"):
            sentences = split_corpus(documents, cfg.max_chunk)
            texts = [s.text for s in sentences]
        with _stage(inst, "subtopic-setup"):
            sub_model = SubtopicModel(cfg, inst, **embedder_kwargs)
        with _stage(inst, "cluster"):
            if len(texts) < cfg.min_topic_size:
                raise DegenerateInputError(f"{len(texts)} sentences is too few to cluster")
            labels = sub_model.cluster(texts)
        with _stage(inst, "represent"):
            groups: dict[int, list[str]] = {}
            for text, lab in zip(texts, labels.labels.tolist()):
                if lab != NOISE:
                    groups.setdefault(lab, []).append(text)
            words: dict[int, list[str]] = {}
            if groups:
                vocab = build_vocabulary(
                    texts,
                    VectorizerConfig(ngram_range=cfg.vectorizer.ngram_range, stopwords=cfg.vectorizer.stopwords),
                )
                words = {c: [w for w, _ in ws] for c, ws in top_word_scores(ctfidf(groups, vocab), cfg.n_words).items()}
    finally:
        inst.close()
    return BaselineResult(labels, words, inst, len(texts))
