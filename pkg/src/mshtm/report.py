"""Topic hierarchy report: pydantic schema, JSON round-trip, static HTML."""

from __future__ import annotations

import html
import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.cluster.hierarchy import dendrogram

SCHEMA_VERSION = 1

TopicStatus = Literal["clustered", "all-noise", "too-small", "empty"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ThresholdEntry(_Model):
    mean: float
    std: float
    k: float
    value: float


class TopicEntry(_Model):
    index: int
    keywords: list[str]
    keyword_weights: list[float]
    document_count: int
    sentence_count: int
    threshold: ThresholdEntry
    status: TopicStatus
    parent: int | None = None
    npmi: float | None = None
    npmi_skipped: list[str] = Field(default_factory=list)
    noise: list[str] = Field(default_factory=list)


class SubtopicEntry(_Model):
    topic: int
    cluster: int
    size: int
    top_words: list[str]
    word_scores: list[float]
    sentence_ids: list[str]
    npmi: float | None = None


class LinkageEntry(_Model):
    topic: int
    leaves: list[int]
    merges: list[tuple[int, int, float, int]]


class SentenceEntry(_Model):
    sent_id: str
    doc_id: str
    timestamp: str
    topics: list[int]


class CorpusSummary(_Model):
    documents: int
    sentences: int
    vocabulary_size: int
    vocabulary_sha256: str
    skipped_records: int = 0
    replaced_bytes: int = 0


class TopicHierarchyReport(_Model):
    schema_version: Literal[1] = SCHEMA_VERSION
    config: dict[str, Any]
    corpus: CorpusSummary
    topics: list[TopicEntry]
    subtopics: list[SubtopicEntry]
    linkages: list[LinkageEntry]
    sentences: list[SentenceEntry]
    unassigned: list[str]
    counters: dict[str, int] = Field(default_factory=dict)
    assignments_ref: str | None = None
    metrics_ref: str | None = None
    # run-dependent timings; kept out of report.json so reruns compare equal
    metrics: dict[str, Any] | None = None

    def subtopics_of(self, topic: int) -> list[SubtopicEntry]:
        return [s for s in self.subtopics if s.topic == topic]

    def sentence_index(self) -> dict[str, SentenceEntry]:
        return {s.sent_id: s for s in self.sentences}


def dumps(report: TopicHierarchyReport, include_metrics: bool = False) -> str:
    data = report.model_dump(mode="json", exclude=None if include_metrics else {"metrics"})
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def export_json(report: TopicHierarchyReport, path: str | Path, include_metrics: bool = False) -> Path:
    path = Path(path)
    path.write_text(dumps(report, include_metrics), encoding="utf-8")
    return path


def load_json(path: str | Path) -> TopicHierarchyReport:
    return TopicHierarchyReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- html

_CSS = """
body{font-family:system-ui,sans-serif;margin:2em;color:#222}
h2{border-bottom:1px solid #ccc;padding-bottom:.2em}
table{border-collapse:collapse;margin:.5em 0 1em}
td,th{border:1px solid #ccc;padding:.2em .6em;font-size:.9em}
th{background:#f3f3f3}
.muted{color:#777}
.placeholder{padding:1em;background:#fafafa;border:1px dashed #bbb}
svg{background:#fff}
"""


def _keyword_table(columns: dict[str, list[str]], n_rows: int) -> str:
    if not columns:
        return '<p class="muted">no keywords</p>'
    head = "".join(f"<th>{html.escape(k)}</th>" for k in columns)
    rows = []
    for r in range(n_rows):
        cells = "".join(
            f"<td>{html.escape(ws[r]) if r < len(ws) else ''}</td>" for ws in columns.values()
        )
        rows.append(f"<tr>{cells}</tr>")
    return f"<table><tr>{head}</tr>{''.join(rows)}</table>"


def dendrogram_svg(merges: np.ndarray, labels: list[str], width: int = 640, height: int = 260) -> str:
    """Inline SVG of a linkage tree, drawn from scipy's dendrogram layout."""
    Z = np.asarray(merges, dtype=np.float64)
    m = len(labels)
    if m < 2 or Z.size == 0:
        return '<p class="muted">single cluster, no hierarchy</p>'
    tree = dendrogram(Z, no_plot=True, labels=labels)
    top = max(max(max(d) for d in tree["dcoord"]), 1e-9)
    pad_top, pad_bottom, pad_side = 12, 90, 10
    plot_h = height - pad_top - pad_bottom

    def x(v: float) -> float:
        return pad_side + (v / (10.0 * m)) * (width - 2 * pad_side)

    def y(v: float) -> float:
        return pad_top + plot_h * (1.0 - v / top)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    for xs, ys in zip(tree["icoord"], tree["dcoord"]):
        pts = " ".join(f"{x(a):.2f},{y(b):.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#345" stroke-width="1.5"/>')
    for i, label in enumerate(tree["ivl"]):
        lx, ly = x(5.0 + 10.0 * i), y(0.0) + 6
        parts.append(
            f'<text x="{lx:.2f}" y="{ly:.2f}" font-size="10" text-anchor="end" '
            f'transform="rotate(-60 {lx:.2f} {ly:.2f})">{html.escape(str(label))}</text>'
        )
    parts.append(
        f'<text x="{pad_side}" y="{pad_top - 2}" font-size="9" fill="#777">cosine distance, max {top:.3f}</text>'
    )
    parts.append("</svg>")
    return "".join(parts)


def render_html(report: TopicHierarchyReport, n_rows: int | None = None) -> str:
    n_rows = n_rows or max([len(t.keywords) for t in report.topics] + [1])
    title = "Topic hierarchy report"
    out = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>{title}</title><style>{_CSS}</style></head><body>",
        f"<h1>{title}</h1>",
        f'<p class="muted">{report.corpus.documents} documents, {report.corpus.sentences} sentence documents, '
        f"{len(report.topics)} broad topics, {len(report.subtopics)} subtopics, "
        f"{len(report.unassigned)} unassigned</p>",
        "<h2>Broad topics</h2>",
        _keyword_table({f"Topic {t.index}": t.keywords for t in report.topics}, n_rows),
    ]
    linkages = {lk.topic: lk for lk in report.linkages}
    for t in report.topics:
        npmi = "n/a" if t.npmi is None else f"{t.npmi:.4f}"
        out.append(f'<h2 id="topic-{t.index}">Topic {t.index}</h2>')
        out.append(
            f'<p class="muted">{t.document_count} documents, {t.sentence_count} sentences, NPMI {npmi}'
            + (f", parent {t.parent}" if t.parent is not None else "")
            + "</p>"
        )
        subs = report.subtopics_of(t.index)
        if t.status in ("too-small", "empty"):
            why = "no sentence passed the threshold" if t.status == "empty" else "too few sentences to cluster"
            out.append(f'<div class="placeholder">too small: {why} ({t.sentence_count} sentences)</div>')
            continue
        if not subs:
            out.append(f'<div class="placeholder">no stable subtopic clusters; {len(t.noise)} sentences are noise</div>')
            continue
        out.append(_keyword_table({f"{s.cluster} (n={s.size})": s.top_words for s in subs}, n_rows))
        lk = linkages.get(t.index)
        if lk is not None:
            names = {s.cluster: f"{s.cluster}: {' '.join(s.top_words[:3])}" for s in subs}
            out.append(dendrogram_svg(np.array(lk.merges, dtype=np.float64).reshape(-1, 4), [names[c] for c in lk.leaves]))
    out.append("</body></html>")
    return "\n".join(out) + "\n"


def export_html(report: TopicHierarchyReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(render_html(report), encoding="utf-8")
    return path
