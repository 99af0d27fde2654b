"""Retriever contract and the BM25 lexical reference backbone.

Any object with ``retrieve(query, k)`` and ``get_document(doc_id)`` can be
plugged into the engine.  Scores are used as-is by pool fusion, which takes a
max across the scores of different queries; a backbone whose scores are not
comparable across queries should rescale them before returning.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

from .corpus import Corpus, Document, get_document
from .errors import EmptyCorpus, IoFailure, RetrieverContractError

logger = logging.getLogger(__name__)

INDEX_FORMAT = "bdtr-lexical-index"
INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; no stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float


@dataclass(frozen=True)
class RetrieverConfig:
    k: int = 20
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.bm25_k1 > 0:
            raise ValueError("bm25_k1 must be > 0")
        if not 0 <= self.bm25_b <= 1:
            raise ValueError("bm25_b must be in [0, 1]")


@runtime_checkable
class Retriever(Protocol):
    """Anything that ranks documents for a query.

    ``retrieve`` returns at most ``k`` hits, sorted by score descending with
    ties broken by doc_id, with no duplicates.  Pool fusion takes the max of a
    document's scores across different queries, so an implementation's scores
    must be comparable between queries against the same corpus.
    """

    def retrieve(self, query: str, k: int) -> list[ScoredDoc]: ...

    def get_document(self, doc_id: str) -> Document: ...


def rank_key(item: ScoredDoc) -> tuple[float, str]:
    return (-item.score, item.doc_id)


class LexicalIndex:
    """Okapi BM25 over an in-memory inverted index.

    idf uses the non-negative form ``log(1 + (N - df + 0.5) / (df + 0.5))``
    and every query token occurrence contributes, so repeated query terms
    weigh more.  Documents sharing no token with the query are not returned.
    """

    def __init__(
        self,
        corpus: Corpus,
        config: RetrieverConfig,
        term_freqs: Sequence[Counter] | None = None,
    ) -> None:
        if len(corpus) == 0:
            raise EmptyCorpus("cannot index an empty corpus")
        self.corpus = corpus
        self.config = config
        if term_freqs is None:
            term_freqs = [Counter(tokenize(_index_text(d))) for d in corpus]
        self.term_freqs: tuple[Counter, ...] = tuple(term_freqs)
        self.doc_lengths: tuple[int, ...] = tuple(sum(tf.values()) for tf in self.term_freqs)
        self.avg_doc_length = sum(self.doc_lengths) / len(self.doc_lengths)
        postings: dict[str, list[tuple[int, int]]] = {}
        for pos, tf in enumerate(self.term_freqs):
            for term, count in tf.items():
                postings.setdefault(term, []).append((pos, count))
        self.postings = postings
        n = len(corpus)
        self.idf = {
            term: math.log(1.0 + (n - len(plist) + 0.5) / (len(plist) + 0.5))
            for term, plist in postings.items()
        }

    def __len__(self) -> int:
        return len(self.corpus)

    def get_document(self, doc_id: str) -> Document:
        return get_document(self.corpus, doc_id)

    def score_all(self, query: str) -> dict[int, float]:
        """BM25 score of every document that shares a token with ``query``."""
        k1, b = self.config.bm25_k1, self.config.bm25_b
        avg = self.avg_doc_length if self.avg_doc_length > 0 else 1.0
        scores: dict[int, float] = {}
        for term, qtf in Counter(tokenize(query)).items():
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf[term]
            for pos, tf in plist:
                norm = k1 * (1.0 - b + b * self.doc_lengths[pos] / avg)
                scores[pos] = scores.get(pos, 0.0) + qtf * idf * tf * (k1 + 1.0) / (tf + norm)
        return scores

    def retrieve(self, query: str, k: int | None = None) -> list[ScoredDoc]:
        k = self.config.k if k is None else k
        if k < 1:
            raise ValueError("k must be >= 1")
        if not tokenize(query):
            logger.warning("empty query after tokenization: %r", query)
            return []
        docs = self.corpus.documents
        hits = [ScoredDoc(docs[pos].id, s) for pos, s in self.score_all(query).items()]
        hits.sort(key=rank_key)
        return hits[:k]

    def save(self, path: str | Path) -> None:
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "k": self.config.k,
            "bm25_k1": self.config.bm25_k1,
            "bm25_b": self.config.bm25_b,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for doc, tf in zip(self.corpus, self.term_freqs):
                rec = doc.to_dict()
                rec["tf"] = dict(tf)
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LexicalIndex":
        try:
            with open(path, encoding="utf-8") as fh:
                header = json.loads(fh.readline())
                if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
                    raise IoFailure(f"{path}: unsupported index header {header!r}")
                docs, tfs = [], []
                for line in fh:
                    rec = json.loads(line)
                    docs.append(Document(rec["id"], rec["title"], rec["text"]))
                    tfs.append(Counter(rec["tf"]))
        except (OSError, ValueError, KeyError) as exc:
            raise IoFailure(f"cannot load index {path}: {exc}") from exc
        config = RetrieverConfig(header["k"], header["bm25_k1"], header["bm25_b"])
        return cls(Corpus.from_documents(docs), config, term_freqs=tfs)


def _index_text(doc: Document) -> str:
    return f"{doc.title} {doc.text}" if doc.title else doc.text


def build_index(corpus: Corpus, config: RetrieverConfig | None = None) -> LexicalIndex:
    return LexicalIndex(corpus, config or RetrieverConfig())


def retrieve(retriever: Retriever, query: str, k: int) -> list[ScoredDoc]:
    """Call ``retriever`` and enforce the ranked-list contract on its output."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = list(retriever.retrieve(query, k))
    if len(hits) > k:
        raise RetrieverContractError(f"retriever returned {len(hits)} > k={k} documents")
    seen: set[str] = set()
    for hit in hits:
        if not math.isfinite(hit.score):
            raise RetrieverContractError(f"non-finite score for {hit.doc_id!r}")
        if hit.doc_id in seen:
            raise RetrieverContractError(f"duplicate document {hit.doc_id!r} in one ranked list")
        seen.add(hit.doc_id)
    if any(rank_key(a) > rank_key(b) for a, b in zip(hits, hits[1:])):
        raise RetrieverContractError("ranked list is not sorted by (score desc, doc_id asc)")
    return hits
