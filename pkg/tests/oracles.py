"""Brute-force reference computations, written without the package's code paths."""

from __future__ import annotations

import math
from fractions import Fraction


def tokens(text: str) -> list[str]:
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def bm25_scores(docs: list[tuple[str, str]], query: str, k1: float = 1.2, b: float = 0.75) -> dict[str, float]:
    """Score every (doc_id, text) pair against ``query``; zero-overlap docs omitted."""
    toks = {doc_id: tokens(text) for doc_id, text in docs}
    n = len(docs)
    avgdl = sum(len(t) for t in toks.values()) / n
    result = {}
    for doc_id, doc_toks in toks.items():
        total, hit = 0.0, False
        for term in tokens(query):
            tf = doc_toks.count(term)
            if tf == 0:
                continue
            hit = True
            df = sum(1 for t in toks.values() if term in t)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc_toks) / avgdl))
        if hit:
            result[doc_id] = total
    return result


def ranked(scores: dict[str, float], k: int | None = None) -> list[tuple[str, float]]:
    items = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return items if k is None else items[:k]


def fuse(lists: list[list[tuple[str, float]]]) -> dict[str, float]:
    """Union of ranked lists with max score per document."""
    best: dict[str, float] = {}
    for lst in lists:
        for doc_id, score in lst:
            if doc_id not in best or score > best[doc_id]:
                best[doc_id] = score
    return best


def cutoff(ranking: list[str], scores: dict[str, float], promoted: list[str], window: int = 50, min_docs: int = 5):
    """Exact-rational mean + population std filter.

    Returns (mu, sigma, final_ids, passed_ids, safeguard_fired).  Whether a
    score clears the threshold is decided exactly: s >= mu + sigma iff
    s - mu >= 0 and (s - mu)^2 >= variance.
    """
    head = ranking[:window]
    vals = [Fraction(scores[d]) for d in head]
    mu = sum(vals, Fraction(0)) / len(vals)
    var = sum(((v - mu) ** 2 for v in vals), Fraction(0)) / len(vals)

    def passes(s: float) -> bool:
        diff = Fraction(s) - mu
        return diff >= 0 and diff * diff >= var

    final = []
    for d in promoted:
        if d not in final:
            final.append(d)
    passed = [d for d in ranking if d not in final and passes(scores[d])]
    final += passed
    need = min(min_docs, len(ranking))
    fired = len(final) < need
    for d in ranking:
        if len(final) >= need:
            break
        if d not in final:
            final.append(d)
    return float(mu), math.sqrt(var), final, passed, fired
