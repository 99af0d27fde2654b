"""Per-query run records and their JSON-lines persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import IoFailure, MalformedTrace
from .generation import ReasoningChain, VerifierSelection

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CutoffStats:
    mu: float
    sigma: float
    threshold: float
    passed_count: int
    safeguard_fired: bool
    window_size: int

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "threshold": self.threshold,
            "passed_count": self.passed_count,
            "safeguard_fired": self.safeguard_fired,
            "window_size": self.window_size,
        }


@dataclass
class RoundRecord:
    round: int
    queries: dict[str, str]
    retrieved: dict[str, list[tuple[str, float]]]
    pool_size: int
    top: list[str]
    terminal: bool | None = None

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "queries": self.queries,
            "retrieved": {k: [[d, s] for d, s in v] for k, v in self.retrieved.items()},
            "pool_size": self.pool_size,
            "top": self.top,
            "terminal": self.terminal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(
            round=d["round"],
            queries=dict(d["queries"]),
            retrieved={k: [(doc, float(s)) for doc, s in v] for k, v in d["retrieved"].items()},
            pool_size=d["pool_size"],
            top=list(d["top"]),
            terminal=d.get("terminal"),
        )


@dataclass
class RunTrace:
    sample_id: str
    strategy: str
    question: str = ""
    status: str = "ok"
    error: str | None = None
    rounds: list[RoundRecord] = field(default_factory=list)
    reasoning_chain: ReasoningChain | None = None
    verifier_selection: VerifierSelection | None = None
    verifier_listing: list[str] = field(default_factory=list)
    promoted_doc_ids: list[str] = field(default_factory=list)
    cutoff_stats: CutoffStats | None = None
    pool_ranking: list[str] = field(default_factory=list)
    final_doc_ids: list[str] = field(default_factory=list)
    answer: str = ""
    answer_seed: str | None = None
    warnings: list[str] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def pool_size(self) -> int:
        return len(self.pool_ranking)

    def to_dict(self, include_timing: bool = True) -> dict:
        chain = self.reasoning_chain
        sel = self.verifier_selection
        out = {
            "schema_version": SCHEMA_VERSION,
            "sample_id": self.sample_id,
            "strategy": self.strategy,
            "question": self.question,
            "status": self.status,
            "error": self.error,
            "rounds": [r.to_dict() for r in self.rounds],
            "reasoning_chain": None
            if chain is None
            else {"raw": chain.raw, "nodes": list(chain.nodes), "warnings": list(chain.warnings)},
            "verifier_selection": None
            if sel is None
            else {
                "covered_indices": list(sel.covered_indices),
                "raw_response": sel.raw_response,
                "warnings": list(sel.warnings),
                "malformed": sel.malformed,
            },
            "verifier_listing": self.verifier_listing,
            "promoted_doc_ids": self.promoted_doc_ids,
            "cutoff_stats": None if self.cutoff_stats is None else self.cutoff_stats.to_dict(),
            "pool_ranking": self.pool_ranking,
            "final_doc_ids": self.final_doc_ids,
            "answer": self.answer,
            "answer_seed": self.answer_seed,
            "warnings": self.warnings,
        }
        if include_timing:
            out["timing"] = self.timing
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        chain = d.get("reasoning_chain")
        sel = d.get("verifier_selection")
        stats = d.get("cutoff_stats")
        return cls(
            sample_id=d["sample_id"],
            strategy=d["strategy"],
            question=d.get("question", ""),
            status=d["status"],
            error=d.get("error"),
            rounds=[RoundRecord.from_dict(r) for r in d["rounds"]],
            reasoning_chain=None
            if chain is None
            else ReasoningChain(chain["raw"], tuple(chain["nodes"]), tuple(chain.get("warnings", ()))),
            verifier_selection=None
            if sel is None
            else VerifierSelection(
                tuple(sel["covered_indices"]), sel["raw_response"], tuple(sel.get("warnings", ())), sel.get("malformed", False)
            ),
            verifier_listing=list(d.get("verifier_listing", [])),
            promoted_doc_ids=list(d.get("promoted_doc_ids", [])),
            cutoff_stats=None if stats is None else CutoffStats(**stats),
            pool_ranking=list(d["pool_ranking"]),
            final_doc_ids=list(d["final_doc_ids"]),
            answer=d["answer"],
            answer_seed=d.get("answer_seed"),
            warnings=list(d.get("warnings", [])),
            timing=dict(d.get("timing", {})),
        )

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, ensure_ascii=False)


def write_traces(traces: Iterable[RunTrace], path: str | Path) -> None:
    """Write the canonical trace file: sorted by sample_id, timing excluded, replaced atomically."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    lines = sorted((t.sample_id, t.to_json()) for t in traces)
    with open(tmp, "w", encoding="utf-8") as fh:
        for _, line in lines:
            fh.write(line + "\n")
    tmp.replace(path)


def load_traces(path: str | Path) -> list[RunTrace]:
    traces = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read traces {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                traces.append(RunTrace.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedTrace(line_number, str(exc)) from exc
    return traces
