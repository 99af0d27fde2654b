"""Iterative retrieval loops: dual-thought retrieval with bridge-guided calibration, and single-thought baselines.

A query runs strictly sequentially.  The pool keeps every document ever
retrieved with its best score so far, ranked by ``(score desc, doc_id asc)``;
calibration then moves verifier-selected documents to the front and keeps the
documents scoring at least one standard deviation above the mean of the
leading window.
"""

from __future__ import annotations

import logging
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Sequence

from .corpus import Document, QASample
from .gateway import Gateway
from .generation import (
    SINGLE_THOUGHT_STRATEGIES,
    ThoughtPair,
    VerifierSelection,
    generate_answer,
    generate_dual_thoughts,
    generate_reasoning_chain,
    generate_single_thought,
    verify_bridge_docs,
)
from .prompts import PromptSet
from .retrieval import Retriever, ScoredDoc, retrieve
from .trace import CutoffStats, RoundRecord, RunTrace

logger = logging.getLogger(__name__)

BDTR_STRATEGIES = ("bdtr", "bdtr_dtr_only", "bdtr_bgec_only")
STRATEGIES = BDTR_STRATEGIES + SINGLE_THOUGHT_STRATEGIES


@dataclass(frozen=True)
class EngineConfig:
    rounds: int = 2
    retrieve_k: int = 20
    verifier_listing_m: int = 30
    cutoff_window: int = 50
    min_final_docs: int = 5
    strategy: str = "bdtr"
    thought_context_depth: int = 10
    verifier_char_budget: int | None = 600
    # diagnostic: replaces mean + std as the cutoff threshold when set
    force_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        for name in ("rounds", "retrieve_k", "verifier_listing_m", "cutoff_window", "min_final_docs", "thought_context_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cutoff_window < self.min_final_docs:
            raise ValueError("cutoff_window must be >= min_final_docs")

    def with_(self, **changes) -> "EngineConfig":
        return replace(self, **changes)


# -- pool --------------------------------------------------------------------


@dataclass(frozen=True)
class PoolEntry:
    score: float
    first_seen_round: int
    provenance: frozenset[str]


@dataclass
class ScoredPool:
    entries: dict[str, PoolEntry] = field(default_factory=dict)
    ranking: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self.entries

    def score(self, doc_id: str) -> float:
        return self.entries[doc_id].score

    def top(self, n: int) -> list[str]:
        return self.ranking[:n]

    def copy(self) -> "ScoredPool":
        return ScoredPool(dict(self.entries), list(self.ranking))

    def resort(self) -> None:
        self.ranking = sorted(self.entries, key=lambda d: (-self.entries[d].score, d))

    def scores(self) -> dict[str, float]:
        return {d: e.score for d, e in self.entries.items()}


def fuse_retrievals(
    pool: ScoredPool,
    retrievals: Sequence[tuple[str, Sequence[ScoredDoc]]],
    round: int,
) -> ScoredPool:
    """Union ranked lists into a copy of ``pool``, keeping each document's max score.

    ``retrievals`` pairs a provenance tag (``initial``, ``fast``, ``slow``,
    ``thought``) with the list that query returned.
    """
    out = pool.copy()
    for tag, hits in retrievals:
        for hit in hits:
            prev = out.entries.get(hit.doc_id)
            if prev is None:
                out.entries[hit.doc_id] = PoolEntry(hit.score, round, frozenset({tag}))
            else:
                out.entries[hit.doc_id] = PoolEntry(
                    max(prev.score, hit.score), prev.first_seen_round, prev.provenance | {tag}
                )
    out.resort()
    return out


def initialize_pool(retriever: Retriever, question: str, k: int) -> ScoredPool:
    return fuse_retrievals(ScoredPool(), [("initial", retrieve(retriever, question, k))], 0)


def iterate_dual(pool: ScoredPool, thoughts: ThoughtPair, retriever: Retriever, round: int, k: int) -> ScoredPool:
    if round < 1:
        raise ValueError("dual-thought rounds start at 1")
    fast = retrieve(retriever, thoughts.fast, k)
    slow = retrieve(retriever, thoughts.slow, k)
    return fuse_retrievals(pool, [("fast", fast), ("slow", slow)], round)


def promote_bridge(
    pool: ScoredPool,
    selection: VerifierSelection | Sequence[int],
    listing_order: Sequence[str],
) -> tuple[ScoredPool, list[str]]:
    """Move selected documents to the front in selection order; scores are untouched.

    ``selection`` holds 1-based positions into ``listing_order``.
    """
    indices = selection.covered_indices if isinstance(selection, VerifierSelection) else selection
    promoted: list[str] = []
    for i in indices:
        if 1 <= i <= len(listing_order):
            doc_id = listing_order[i - 1]
            if doc_id in pool.entries and doc_id not in promoted:
                promoted.append(doc_id)
    chosen = set(promoted)
    out = pool.copy()
    out.ranking = promoted + [d for d in pool.ranking if d not in chosen]
    return out, promoted


@dataclass(frozen=True)
class CutoffResult:
    final_doc_ids: list[str]
    stats: CutoffStats | None
    warnings: tuple[str, ...] = ()


def window_stats(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation, exactly rounded.

    ``statistics`` sums exactly, so a window of identical scores gives the
    score itself and a deviation of exactly zero.
    """
    mu = statistics.mean(scores)
    return mu, statistics.pstdev(scores, mu)


def _mean_plus_std_gate(scores: Sequence[float]) -> Callable[[float], bool]:
    """Exact test for ``s >= mean + std`` over ``scores``.

    Adding the rounded mean and deviation can land one ulp past a score that
    sits exactly on the threshold (the top of a two-score window always does),
    so the comparison is made in rationals: s - mu >= 0 and (s - mu)^2 >= var.
    """
    values = [Fraction(v) for v in scores]
    mu = sum(values, Fraction(0)) / len(values)
    var = sum(((v - mu) ** 2 for v in values), Fraction(0)) / len(values)

    def clears(score: float) -> bool:
        diff = Fraction(score) - mu
        return diff >= 0 and diff * diff >= var

    return clears


def statistical_cutoff(
    pool: ScoredPool,
    promoted: Sequence[str],
    window: int = 50,
    min_docs: int = 5,
    threshold: float | None = None,
) -> CutoffResult:
    """Final evidence: promoted docs first, then ranked docs with score >= mean + std of the window.

    If fewer than ``min_docs`` survive, the post-promotion ranking fills the
    gap in order.  ``threshold`` overrides mean + std when given.
    """
    if not pool.ranking:
        return CutoffResult([], None, ("empty pool: no final documents",))
    head = pool.ranking[: min(window, len(pool.ranking))]
    head_scores = [pool.entries[d].score for d in head]
    mu, sigma = window_stats(head_scores)
    cut = mu + sigma if threshold is None else threshold
    clears = _mean_plus_std_gate(head_scores) if threshold is None else (lambda s: s >= threshold)
    final = list(dict.fromkeys(d for d in promoted if d in pool.entries))
    chosen = set(final)
    passed = 0
    for doc_id in pool.ranking:
        if doc_id not in chosen and clears(pool.entries[doc_id].score):
            final.append(doc_id)
            chosen.add(doc_id)
            passed += 1
    need = min(min_docs, len(pool.ranking))
    fired = len(final) < need
    if fired:
        for doc_id in pool.ranking:
            if len(final) >= need:
                break
            if doc_id not in chosen:
                final.append(doc_id)
                chosen.add(doc_id)
    return CutoffResult(final, CutoffStats(mu, sigma, cut, passed, fired, len(head)))


# -- per-query runners -------------------------------------------------------


class _Timer:
    def __init__(self) -> None:
        self.durations: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.durations[name] = self.durations.get(name, 0.0) + time.perf_counter() - start


def _docs(retriever: Retriever, ids: Sequence[str]) -> list[Document]:
    return [retriever.get_document(d) for d in ids]


def _hits(hits: Sequence[ScoredDoc]) -> list[tuple[str, float]]:
    return [(h.doc_id, h.score) for h in hits]


def _retrieve_logged(retriever: Retriever, query: str, k: int, label: str, trace: RunTrace) -> list[ScoredDoc]:
    hits = retrieve(retriever, query, k)
    if not hits:
        trace.warnings.append(f"{label} query returned no documents: {query!r}")
    return hits


def _initial(sample: QASample, retriever: Retriever, config: EngineConfig, trace: RunTrace) -> ScoredPool:
    hits = _retrieve_logged(retriever, sample.question, config.retrieve_k, "initial", trace)
    pool = fuse_retrievals(ScoredPool(), [("initial", hits)], 0)
    trace.rounds.append(
        RoundRecord(
            round=0,
            queries={"initial": sample.question},
            retrieved={"initial": _hits(hits)},
            pool_size=len(pool),
            top=pool.top(config.thought_context_depth),
        )
    )
    return pool


def run_bdtr(
    sample: QASample,
    retriever: Retriever,
    gateway: Gateway,
    config: EngineConfig,
    prompts: PromptSet | None = None,
) -> RunTrace:
    if config.strategy not in BDTR_STRATEGIES:
        raise ValueError(f"run_bdtr does not handle strategy {config.strategy!r}")
    trace = RunTrace(sample_id=sample.id, strategy=config.strategy, question=sample.question)
    timer = _Timer()
    pool = ScoredPool()
    sid = sample.id
    try:
        with timer.stage("initial_retrieval"):
            pool = _initial(sample, retriever, config, trace)
        rounds_run = 0
        if config.strategy != "bdtr_bgec_only":
            for t in range(1, config.rounds + 1):
                with timer.stage("thought_generation"):
                    snapshot = _docs(retriever, pool.top(config.thought_context_depth))
                    thoughts = generate_dual_thoughts(
                        gateway, sample.question, snapshot, prompts=prompts, sample_id=sid, round=t
                    )
                with timer.stage("retrieval"):
                    fast = _retrieve_logged(retriever, thoughts.fast, config.retrieve_k, f"round {t} fast", trace)
                    slow = _retrieve_logged(retriever, thoughts.slow, config.retrieve_k, f"round {t} slow", trace)
                    pool = fuse_retrievals(pool, [("fast", fast), ("slow", slow)], t)
                trace.rounds.append(
                    RoundRecord(
                        round=t,
                        queries={"fast": thoughts.fast, "slow": thoughts.slow},
                        retrieved={"fast": _hits(fast), "slow": _hits(slow)},
                        pool_size=len(pool),
                        top=pool.top(config.thought_context_depth),
                    )
                )
                rounds_run = t

        if config.strategy == "bdtr_dtr_only":
            trace.pool_ranking = list(pool.ranking)
            trace.final_doc_ids = pool.top(config.min_final_docs)
        else:
            with timer.stage("calibration"):
                snapshot = _docs(retriever, pool.top(config.thought_context_depth))
                chain = generate_reasoning_chain(
                    gateway, sample.question, snapshot, prompts=prompts, sample_id=sid, round=rounds_run
                )
                trace.reasoning_chain = chain
                trace.warnings.extend(chain.warnings)
                listing_ids = pool.top(config.verifier_listing_m)
                selection = verify_bridge_docs(
                    gateway,
                    chain,
                    _docs(retriever, listing_ids),
                    question=sample.question,
                    char_budget=config.verifier_char_budget,
                    prompts=prompts,
                    sample_id=sid,
                    round=rounds_run,
                )
                trace.verifier_selection = selection
                trace.verifier_listing = list(listing_ids)
                trace.warnings.extend(selection.warnings)
                pool, promoted = promote_bridge(pool, selection, listing_ids)
                trace.promoted_doc_ids = promoted
                trace.pool_ranking = list(pool.ranking)
                cut = statistical_cutoff(
                    pool, promoted, config.cutoff_window, config.min_final_docs, config.force_threshold
                )
                trace.cutoff_stats = cut.stats
                trace.warnings.extend(cut.warnings)
                trace.final_doc_ids = cut.final_doc_ids

        with timer.stage("answer"):
            trace.answer = generate_answer(
                gateway,
                sample.question,
                _docs(retriever, trace.final_doc_ids),
                prompts=prompts,
                sample_id=sid,
                round=rounds_run,
            )
    except Exception as exc:  # any stage failure ends this query only
        _fail(trace, pool, exc)
    trace.timing = timer.durations
    return trace


def run_baseline(
    sample: QASample,
    strategy: str,
    retriever: Retriever,
    gateway: Gateway,
    config: EngineConfig,
    prompts: PromptSet | None = None,
) -> RunTrace:
    """Single-thought loop: stop at the terminal sentinel or after ``config.rounds`` steps."""
    if strategy not in SINGLE_THOUGHT_STRATEGIES:
        raise ValueError(f"unknown baseline strategy {strategy!r}")
    trace = RunTrace(sample_id=sample.id, strategy=strategy, question=sample.question)
    timer = _Timer()
    pool = ScoredPool()
    sid = sample.id
    try:
        with timer.stage("initial_retrieval"):
            pool = _initial(sample, retriever, config, trace)
        history: list[str] = []
        rounds_run = 0
        for t in range(1, config.rounds + 1):
            rounds_run = t
            with timer.stage("thought_generation"):
                snapshot = _docs(retriever, pool.top(config.thought_context_depth))
                step = generate_single_thought(
                    gateway, strategy, sample.question, snapshot,
                    thoughts=history, prompts=prompts, sample_id=sid, round=t,
                )
            history.append(step.text)
            if step.terminal:
                trace.answer_seed = step.answer_seed
                trace.rounds.append(
                    RoundRecord(round=t, queries={"thought": step.text}, retrieved={},
                                pool_size=len(pool), top=pool.top(config.thought_context_depth), terminal=True)
                )
                break
            with timer.stage("retrieval"):
                hits = _retrieve_logged(retriever, step.text, config.retrieve_k, f"round {t} thought", trace)
                pool = fuse_retrievals(pool, [("thought", hits)], t)
            trace.rounds.append(
                RoundRecord(round=t, queries={"thought": step.text}, retrieved={"thought": _hits(hits)},
                            pool_size=len(pool), top=pool.top(config.thought_context_depth), terminal=False)
            )
        trace.pool_ranking = list(pool.ranking)
        trace.final_doc_ids = pool.top(config.min_final_docs)
        with timer.stage("answer"):
            trace.answer = generate_answer(
                gateway, sample.question, _docs(retriever, trace.final_doc_ids),
                prompts=prompts, sample_id=sid, round=rounds_run,
            )
    except Exception as exc:  # any stage failure ends this query only
        _fail(trace, pool, exc)
    trace.timing = timer.durations
    return trace


def _fail(trace: RunTrace, pool: ScoredPool, exc: Exception) -> None:
    logger.warning("sample %s failed: %s", trace.sample_id, exc)
    trace.status = "error"
    trace.error = f"{type(exc).__name__}: {exc}"
    if not trace.pool_ranking:
        trace.pool_ranking = list(pool.ranking)


def run_query(
    sample: QASample,
    retriever: Retriever,
    gateway: Gateway,
    config: EngineConfig,
    prompts: PromptSet | None = None,
) -> RunTrace:
    """Run ``config.strategy`` for one sample."""
    if config.strategy in BDTR_STRATEGIES:
        return run_bdtr(sample, retriever, gateway, config, prompts)
    return run_baseline(sample, config.strategy, retriever, gateway, config, prompts)


def union_retrieved(trace: RunTrace) -> set[str]:
    return {doc_id for rec in trace.rounds for hits in rec.retrieved.values() for doc_id, _ in hits}


__all__ = [
    "BDTR_STRATEGIES",
    "STRATEGIES",
    "CutoffResult",
    "CutoffStats",
    "EngineConfig",
    "PoolEntry",
    "ScoredPool",
    "fuse_retrievals",
    "initialize_pool",
    "iterate_dual",
    "promote_bridge",
    "run_baseline",
    "run_bdtr",
    "run_query",
    "statistical_cutoff",
    "union_retrieved",
    "window_stats",
]
