"""Documents and QA samples loaded from JSON-lines files."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DuplicateId, EmptyAnswers, IoFailure, MalformedRecord, UnknownId

logger = logging.getLogger(__name__)

QUESTION_TYPES = frozenset(
    {
        "bridge",
        "comparison",
        "bridge_comparison",
        "compositional",
        "inference",
        "2hop",
        "3hop",
        "4hop",
        "unknown",
    }
)


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}


@dataclass(frozen=True)
class QASample:
    id: str
    question: str
    answers: tuple[str, ...]
    question_type: str = "unknown"
    gold_doc_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "answers": list(self.answers),
            "type": self.question_type,
            "gold_doc_ids": list(self.gold_doc_ids),
        }


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of documents keyed by id."""

    documents: tuple[Document, ...]
    index_by_id: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_documents(cls, documents: Iterable[Document]) -> "Corpus":
        docs = tuple(documents)
        index: dict[str, int] = {}
        for pos, doc in enumerate(docs):
            if doc.id in index:
                raise DuplicateId(doc.id)
            index[doc.id] = pos
        return cls(docs, index)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self.index_by_id

    def get(self, doc_id: str) -> Document:
        return get_document(self, doc_id)


def normalize_question_type(raw: str | None) -> str:
    if raw is None:
        return "unknown"
    key = "_".join(str(raw).strip().lower().split())
    if not key:
        return "unknown"
    if key not in QUESTION_TYPES:
        logger.warning("unrecognized question type %r, counted as unknown", raw)
        return "unknown"
    return key


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, object]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})", str(path)) from exc


def _require_str(record: dict, key: str, line_number: int, path: str) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise MalformedRecord(line_number, f"field {key!r} must be a string", path)
    return value


def load_corpus(path: str | Path) -> Corpus:
    docs: list[Document] = []
    seen: set[str] = set()
    for line_number, record in _iter_json_lines(path):
        if not isinstance(record, dict):
            raise MalformedRecord(line_number, "record is not a JSON object", str(path))
        doc_id = _require_str(record, "id", line_number, str(path))
        title = _require_str(record, "title", line_number, str(path))
        text = _require_str(record, "text", line_number, str(path))
        if not doc_id:
            raise MalformedRecord(line_number, "empty id", str(path))
        if not text.strip():
            raise MalformedRecord(line_number, "empty text", str(path))
        if doc_id in seen:
            raise DuplicateId(doc_id)
        seen.add(doc_id)
        docs.append(Document(doc_id, title, text))
    return Corpus.from_documents(docs)


def dump_corpus(corpus: Corpus | Sequence[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_dict(), ensure_ascii=False) + "\n")


def load_qa_dataset(path: str | Path) -> list[QASample]:
    samples: list[QASample] = []
    for line_number, record in _iter_json_lines(path):
        if not isinstance(record, dict):
            raise MalformedRecord(line_number, "record is not a JSON object", str(path))
        sample_id = record.get("id")
        if isinstance(sample_id, int) and not isinstance(sample_id, bool):
            sample_id = str(sample_id)
        if not isinstance(sample_id, str) or not sample_id:
            raise MalformedRecord(line_number, "field 'id' must be a non-empty string", str(path))
        question = _require_str(record, "question", line_number, str(path))
        answers = record.get("answers")
        if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
            raise MalformedRecord(line_number, "field 'answers' must be a list of strings", str(path))
        if not answers:
            raise EmptyAnswers(sample_id)
        gold = record.get("gold_doc_ids", [])
        if gold is None:
            gold = []
        if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
            raise MalformedRecord(line_number, "field 'gold_doc_ids' must be a list of strings", str(path))
        samples.append(
            QASample(
                id=sample_id,
                question=question,
                answers=tuple(answers),
                question_type=normalize_question_type(record.get("type")),
                gold_doc_ids=tuple(gold),
            )
        )
    return samples


def dump_qa_dataset(samples: Iterable[QASample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_dict(), ensure_ascii=False) + "\n")


def get_document(corpus: Corpus, doc_id: str) -> Document:
    try:
        return corpus.documents[corpus.index_by_id[doc_id]]
    except KeyError:
        raise UnknownId(doc_id) from None


def unresolved_gold_ids(samples: Iterable[QASample], corpus: Corpus) -> list[tuple[str, str]]:
    """Return ``(sample_id, doc_id)`` for every gold id absent from ``corpus``."""
    return [(s.id, g) for s in samples for g in s.gold_doc_ids if g not in corpus]
