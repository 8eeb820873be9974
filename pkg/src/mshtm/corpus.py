"""Transcript ingestion and cleaning.

Two source layouts are supported: per-line CSV exports (one row per
transcript line, with file id, timestamp, speaker and text columns) and
MediaSum-style JSON records holding an id plus an ordered utterance list.
Only the roles in ``CleaningConfig.speaker_filter`` survive
:func:`filter_speakers`; every surviving turn keeps its source timestamp so
sentence chunks can be traced back to the original transcript position.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, CorpusParseError, IngestionError, SchemaError

logger = logging.getLogger(__name__)


class SpeakerRole(str, enum.Enum):
    INTERVIEWER = "interviewer"
    INTERVIEWEE = "interviewee"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class RawTurn:
    file_id: str
    timestamp: str
    speaker_role: SpeakerRole
    text: str

    def __post_init__(self):
        if not self.file_id:
            raise ValueError("RawTurn.file_id must be non-empty")


@dataclass(frozen=True)
class CleanTurn:
    timestamp: str
    text: str


@dataclass(frozen=True)
class CleanDocument:
    doc_id: str
    turns: tuple[CleanTurn, ...]

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.turns)


@dataclass(frozen=True)
class CleaningConfig:
    strip_bracket_annotations: bool = True
    join_comma_numbers: bool = True
    speaker_filter: frozenset[SpeakerRole] = frozenset({SpeakerRole.INTERVIEWEE})
    extra_drop_patterns: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.speaker_filter:
            raise ConfigurationError("speaker_filter must retain at least one role")
        object.__setattr__(
            self, "speaker_filter", frozenset(SpeakerRole(r) for r in self.speaker_filter)
        )


DEFAULT_ROLE_LABELS: dict[str, SpeakerRole] = {
    "interviewer": SpeakerRole.INTERVIEWER,
    "int": SpeakerRole.INTERVIEWER,
    "q": SpeakerRole.INTERVIEWER,
    "interviewee": SpeakerRole.INTERVIEWEE,
    "subject": SpeakerRole.INTERVIEWEE,
    "survivor": SpeakerRole.INTERVIEWEE,
    "a": SpeakerRole.INTERVIEWEE,
}


@dataclass(frozen=True)
class CsvSchema:
    """Column names for the CSV layout.

    ``speaker`` may be None when the export has no speaker column; every
    turn is then tagged ``unknown``. ``roles`` maps raw speaker cell values
    (case-insensitive) to roles; unmapped values become ``unknown``.
    """

    file_id: str = "file_num"
    timestamp: str = "time_stamp"
    speaker: str | None = "speaker"
    text: str = "text"
    roles: Mapping[str, SpeakerRole] = field(default_factory=lambda: dict(DEFAULT_ROLE_LABELS))

    def role_for(self, value: str | None) -> SpeakerRole:
        if value is None:
            return SpeakerRole.UNKNOWN
        return self.roles.get(value.strip().casefold(), SpeakerRole.UNKNOWN)


@dataclass
class IngestTally:
    """Warning counters accumulated while loading files."""

    skipped_records: int = 0
    replaced_bytes: int = 0
    files: int = 0

    def merge(self, other: "IngestTally") -> None:
        self.skipped_records += other.skipped_records
        self.replaced_bytes += other.replaced_bytes
        self.files += other.files


_SURROGATE = re.compile("[\udc80-\udcff]")


def _read_text(path: Path, tally: IngestTally | None) -> str:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    text = raw.decode("utf-8", errors="surrogateescape")
    text, n_bad = _SURROGATE.subn("\ufffd", text)
    if n_bad:
        logger.warning("%s: replaced %d undecodable bytes", path, n_bad)
    if tally is not None:
        tally.replaced_bytes += n_bad
        tally.files += 1
    return text.lstrip("\ufeff")


def load_transcript_csv(
    path: str | Path,
    schema: CsvSchema | None = None,
    tally: IngestTally | None = None,
) -> list[RawTurn]:
    """Read one CSV transcript export into turns, in file order."""
    schema = schema or CsvSchema()
    text = _read_text(Path(path), tally)
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header = reader.fieldnames
    if header is None:
        raise IngestionError(f"{path}: missing header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    required = [schema.file_id, schema.timestamp, schema.text]
    if schema.speaker is not None:
        required.append(schema.speaker)
    for col in required:
        if col not in header:
            raise SchemaError(col, str(path))

    turns = []
    for row in reader:
        file_id = (row.get(schema.file_id) or "").strip()
        if not file_id:
            if tally is not None:
                tally.skipped_records += 1
            logger.warning("%s: row %d has no file id, skipped", path, reader.line_num)
            continue
        speaker = row.get(schema.speaker) if schema.speaker is not None else None
        turns.append(
            RawTurn(
                file_id=file_id,
                timestamp=(row.get(schema.timestamp) or "").strip(),
                speaker_role=schema.role_for(speaker),
                text=row.get(schema.text) or "",
            )
        )
    return turns


MEDIASUM_HOST_MARKERS = ("host", "anchor")


def _mediasum_role(speaker) -> SpeakerRole:
    if not isinstance(speaker, str) or not speaker.strip():
        return SpeakerRole.UNKNOWN
    low = speaker.casefold()
    if any(m in low for m in MEDIASUM_HOST_MARKERS):
        return SpeakerRole.INTERVIEWER
    return SpeakerRole.INTERVIEWEE


def _mediasum_utterances(record: dict) -> list[tuple[object, str]] | None:
    if "interview" in record:
        out = []
        items = record["interview"]
        if not isinstance(items, list):
            return None
        for item in items:
            if isinstance(item, dict):
                utt = item.get("utterance", item.get("text"))
                out.append((item.get("speaker"), utt))
            elif isinstance(item, (list, tuple)) and len(item) == 2:
                out.append((item[0], item[1]))
            else:
                return None
        if not all(isinstance(u, str) for _, u in out):
            return None
        return out
    if "utt" in record:
        utts = record["utt"]
        speakers = record.get("speaker")
        if not isinstance(utts, list) or not all(isinstance(u, str) for u in utts):
            return None
        if not isinstance(speakers, list) or len(speakers) != len(utts):
            speakers = [None] * len(utts)
        return list(zip(speakers, utts))
    return None


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8", errors="surrogatepass"))


def _parse_records(text: str) -> list:
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"malformed JSON: {exc.msg}", _byte_offset(text, exc.pos)) from exc
        if not isinstance(data, list):
            raise CorpusParseError("expected a JSON array of records", 0)
        return data
    # newline-delimited records
    records = []
    pos = 0
    for line in text.splitlines(keepends=True):
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusParseError(
                    f"malformed JSON record: {exc.msg}", _byte_offset(text, pos + exc.pos)
                ) from exc
        pos += len(line)
    return records


def load_mediasum_json(path: str | Path, tally: IngestTally | None = None) -> list[RawTurn]:
    """Read MediaSum-style records.

    Accepts a JSON array or newline-delimited records. Each record needs an
    ``id`` and either ``interview`` (speaker/utterance pairs) or the
    parallel ``utt``/``speaker`` lists of the published dump. Records
    lacking an id or a usable utterance list are skipped and tallied.
    Timestamps are the utterance positions within the record.
    """
    text = _read_text(Path(path), tally)
    turns = []
    skipped = 0
    for record in _parse_records(text):
        rec_id = record.get("id") if isinstance(record, dict) else None
        utterances = _mediasum_utterances(record) if rec_id not in (None, "") else None
        if utterances is None:
            skipped += 1
            continue
        for i, (speaker, utt) in enumerate(utterances):
            turns.append(RawTurn(str(rec_id), str(i), _mediasum_role(speaker), utt))
    if skipped:
        logger.warning("%s: skipped %d malformed records", path, skipped)
    if tally is not None:
        tally.skipped_records += skipped
    return turns


_BRACKET_SPAN = re.compile(r"\[[^\]\n]*(?:\]|$)", re.MULTILINE)
_NUMBER_COMMA = re.compile(r"(?<=\d),(?=\d)")
_WHITESPACE = re.compile(r"\s+")


def _clean_once(text: str, cfg: CleaningConfig) -> str:
    if cfg.strip_bracket_annotations:
        text = _BRACKET_SPAN.sub(" ", text)
    for pattern in cfg.extra_drop_patterns:
        if pattern:
            text = text.replace(pattern, " ")
    text = _WHITESPACE.sub(" ", text).strip()
    if cfg.join_comma_numbers:
        text = _NUMBER_COMMA.sub("", text)
    return text


def clean_text(raw: str, cfg: CleaningConfig | None = None) -> str:
    """Strip annotations, join digit groups and normalize whitespace.

    The rules run to a fixpoint, so the function is idempotent.
    """
    cfg = cfg or CleaningConfig()
    text = raw
    while True:
        cleaned = _clean_once(text, cfg)
        if cleaned == text:
            return cleaned
        text = cleaned


def filter_speakers(
    turns: Iterable[RawTurn], cfg: CleaningConfig | None = None
) -> list[CleanDocument]:
    """Keep turns whose role is in the filter, clean them, group by file id.

    Filtering happens before cleaning. Turns that clean down to nothing are
    dropped; a file with no surviving turns is absent from the output.
    Documents are ordered by first appearance of their file id.
    """
    cfg = cfg or CleaningConfig()
    grouped: dict[str, list[CleanTurn]] = {}
    for turn in turns:
        if turn.speaker_role not in cfg.speaker_filter:
            continue
        text = clean_text(turn.text, cfg)
        if not text:
            continue
        grouped.setdefault(turn.file_id, []).append(CleanTurn(turn.timestamp, text))
    return [CleanDocument(doc_id, tuple(ts)) for doc_id, ts in grouped.items()]


def load_corpus(
    paths: Sequence[str | Path],
    fmt: str,
    cfg: CleaningConfig | None = None,
    schema: CsvSchema | None = None,
    tally: IngestTally | None = None,
) -> list[CleanDocument]:
    """Load many files of one format and return the cleaned documents.

    Directories are expanded to their ``*.csv`` / ``*.json*`` members.
    """
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            pattern = "*.csv" if fmt == "csv" else "*.json*"
            files.extend(sorted(p.glob(pattern)))
        else:
            files.append(p)
    turns: list[RawTurn] = []
    for f in files:
        if fmt == "csv":
            turns.extend(load_transcript_csv(f, schema, tally))
        elif fmt == "mediasum-json":
            turns.extend(load_mediasum_json(f, tally))
        else:
            raise ConfigurationError(f"unknown input format {fmt!r}")
    return filter_speakers(turns, cfg)
