"""Answer metrics, retrieval recall, and run-level reports."""

from __future__ import annotations

import csv
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import QASample
from .engine import EngineConfig
from .errors import MissingTrace, SampleSetMismatch
from .gateway import Gateway
from .prompts import PromptSet
from .retrieval import Retriever
from .runner import run_samples
from .trace import RunTrace

DEFAULT_KS = (5, 10, 20, 50)

_PUNCT = set(string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and the articles a/an/the, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in golds))


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Max token-level F1 over the gold answers."""
    pred = normalize_answer(prediction).split()
    return max((_f1(pred, normalize_answer(g).split()) for g in golds), default=0.0)


def recall_at_k(ranking: Sequence[str], gold_doc_ids: Iterable[str], k: int) -> float:
    golds = set(gold_doc_ids)
    if not golds:
        raise ValueError("recall is undefined without gold documents")
    if k < 1:
        raise ValueError("k must be >= 1")
    return len(golds.intersection(ranking[:k])) / len(golds)


@dataclass(frozen=True)
class SampleMetrics:
    sample_id: str
    strategy: str
    question_type: str
    em: int
    f1: float
    recall_pool: dict[int, float] | None
    recall_final: dict[int, float] | None
    pool_size: int
    final_size: int
    status: str


@dataclass
class MetricReport:
    em: float
    f1: float
    recall_at: dict[int, float]
    recall_at_final: dict[int, float]
    per_type: dict[str, dict]
    sample_count: int
    recall_sample_count: int
    mean_pool_size: float
    max_pool_depth: int
    error_count: int
    per_sample: list[SampleMetrics] = field(default_factory=list, repr=False)

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "em": self.em,
            "f1": self.f1,
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "recall_at_final": {str(k): v for k, v in self.recall_at_final.items()},
            "per_type": self.per_type,
            "sample_count": self.sample_count,
            "recall_sample_count": self.recall_sample_count,
            "mean_pool_size": self.mean_pool_size,
            "max_pool_depth": self.max_pool_depth,
            "error_count": self.error_count,
        }
        if include_samples:
            out["per_sample"] = [
                {
                    "sample_id": s.sample_id,
                    "strategy": s.strategy,
                    "type": s.question_type,
                    "em": s.em,
                    "f1": s.f1,
                    "recall_pool": None if s.recall_pool is None else {str(k): v for k, v in s.recall_pool.items()},
                    "recall_final": None if s.recall_final is None else {str(k): v for k, v in s.recall_final.items()},
                    "pool_size": s.pool_size,
                    "final_size": s.final_size,
                    "status": s.status,
                }
                for s in self.per_sample
            ]
        return out

    def em_by_sample(self) -> dict[str, int]:
        return {s.sample_id: s.em for s in self.per_sample}

    def to_text(self, title: str = "") -> str:
        ks = list(self.recall_at)
        lines = [title] if title else []
        lines.append(f"samples={self.sample_count}  errors={self.error_count}  "
                     f"with-gold={self.recall_sample_count}  mean pool={self.mean_pool_size:.2f} (max depth {self.max_pool_depth})")
        lines.append(f"EM   {self.em:.4f}")
        lines.append(f"F1   {self.f1:.4f}")
        if ks:
            lines.append("K        " + "".join(f"{k:>9}" for k in ks))
            lines.append("R@K pool " + "".join(f"{self.recall_at[k]:>9.4f}" for k in ks))
            lines.append("R@K final" + "".join(f"{self.recall_at_final[k]:>9.4f}" for k in ks))
        lines.append(f"{'type':<20}{'count':>7}{'EM':>9}{'F1':>9}")
        for qtype, row in self.per_type.items():
            lines.append(f"{qtype:<20}{row['count']:>7}{row['em']:>9.4f}{row['f1']:>9.4f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path, ks: Sequence[int] = (5, 10)) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "strategy", "em", "f1", *[f"recall@{k}" for k in ks], "type"])
            for s in self.per_sample:
                recalls = ["" if s.recall_final is None else f"{s.recall_final[k]:.6f}" for k in ks]
                w.writerow([s.sample_id, s.strategy, s.em, f"{s.f1:.6f}", *recalls, s.question_type])


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate_run(traces: Sequence[RunTrace], samples: Sequence[QASample], ks: Sequence[int] = DEFAULT_KS) -> MetricReport:
    """Aggregate answer and recall metrics over ``samples`` in their given order.

    Recall is reported over the post-promotion pool ranking and over the
    final evidence list; samples without gold documents are left out of it.
    Recall at a K deeper than a ranking uses the whole ranking
    (``max_pool_depth`` records how deep the pools went).
    """
    ks = sorted(set(ks))
    by_id = {t.sample_id: t for t in traces}
    rows: list[SampleMetrics] = []
    for sample in samples:
        trace = by_id.get(sample.id)
        if trace is None:
            raise MissingTrace(sample.id)
        has_gold = bool(sample.gold_doc_ids)
        rows.append(
            SampleMetrics(
                sample_id=sample.id,
                strategy=trace.strategy,
                question_type=sample.question_type,
                em=exact_match(trace.answer, sample.answers),
                f1=token_f1(trace.answer, sample.answers),
                recall_pool={k: recall_at_k(trace.pool_ranking, sample.gold_doc_ids, k) for k in ks} if has_gold else None,
                recall_final={k: recall_at_k(trace.final_doc_ids, sample.gold_doc_ids, k) for k in ks} if has_gold else None,
                pool_size=len(trace.pool_ranking),
                final_size=len(trace.final_doc_ids),
                status=trace.status,
            )
        )
    with_gold = [r for r in rows if r.recall_pool is not None]
    per_type: dict[str, dict] = {}
    for qtype in sorted({r.question_type for r in rows}):
        group = [r for r in rows if r.question_type == qtype]
        per_type[qtype] = {
            "count": len(group),
            "em": _mean([r.em for r in group]),
            "f1": _mean([r.f1 for r in group]),
        }
    return MetricReport(
        em=_mean([r.em for r in rows]),
        f1=_mean([r.f1 for r in rows]),
        recall_at={k: _mean([r.recall_pool[k] for r in with_gold]) for k in ks} if with_gold else {},
        recall_at_final={k: _mean([r.recall_final[k] for r in with_gold]) for k in ks} if with_gold else {},
        per_type=per_type,
        sample_count=len(rows),
        recall_sample_count=len(with_gold),
        mean_pool_size=_mean([r.pool_size for r in rows]),
        max_pool_depth=max((r.pool_size for r in rows), default=0),
        error_count=sum(r.status != "ok" for r in rows),
        per_sample=rows,
    )


def rounds_sweep(
    samples: Sequence[QASample],
    retriever: Retriever,
    gateway: Gateway,
    base_config: EngineConfig,
    rounds_list: Sequence[int],
    ks: Sequence[int] = DEFAULT_KS,
    *,
    concurrency: int = 1,
    prompts: PromptSet | None = None,
) -> dict[int, MetricReport]:
    """Run the configured strategy once per round budget; per-sample pool sizes live in each report."""
    if not rounds_list:
        raise ValueError("rounds_list must not be empty")
    if any(r < 1 for r in rounds_list):
        raise ValueError("round budgets must be >= 1")
    out: dict[int, MetricReport] = {}
    for r in rounds_list:
        traces = run_samples(samples, retriever, gateway, base_config.with_(rounds=r), concurrency=concurrency, prompts=prompts)
        out[r] = evaluate_run(traces, samples, ks)
    return out


@dataclass(frozen=True)
class PairComparison:
    both: frozenset[str]
    only_first: frozenset[str]
    only_second: frozenset[str]


@dataclass(frozen=True)
class ComplementarityReport:
    sample_ids: frozenset[str]
    success: dict[str, frozenset[str]]
    pairwise: dict[tuple[str, str], PairComparison]

    def to_dict(self) -> dict:
        return {
            "sample_count": len(self.sample_ids),
            "success": {name: sorted(ids) for name, ids in self.success.items()},
            "union_success": sorted(set().union(*self.success.values())) if self.success else [],
            "pairwise": [
                {
                    "a": a,
                    "b": b,
                    "both": sorted(p.both),
                    "only_a": sorted(p.only_first),
                    "only_b": sorted(p.only_second),
                    "counts": {"both": len(p.both), "only_a": len(p.only_first), "only_b": len(p.only_second)},
                }
                for (a, b), p in self.pairwise.items()
            ],
        }


def complementarity(reports: Mapping[str, Mapping[str, int]]) -> ComplementarityReport:
    """Success sets (EM = 1) per strategy and their pairwise overlaps.

    ``reports`` maps strategy name to ``{sample_id: em}``; every strategy must
    cover the same samples.
    """
    names = list(reports)
    id_sets = [frozenset(reports[n]) for n in names]
    if any(s != id_sets[0] for s in id_sets[1:]):
        raise SampleSetMismatch("strategies were evaluated on different sample sets")
    success = {n: frozenset(sid for sid, em in reports[n].items() if em == 1) for n in names}
    pairwise = {
        (a, b): PairComparison(success[a] & success[b], success[a] - success[b], success[b] - success[a])
        for a, b in combinations(names, 2)
    }
    return ComplementarityReport(id_sets[0] if id_sets else frozenset(), success, pairwise)
