"""The generation roles used by the retrieval loop, with their response parsers.

Every function renders its prompt, calls the gateway once (the verifier may
retry once against a live model) and parses the text into a typed result.
Parsers never raise on odd content except where a result cannot be built at
all (:class:`UnparseableThoughts`); soft problems become ``warnings``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Document
from .errors import GatewayFailure, UnparseableThoughts
from .gateway import Gateway, GenerationRequest
from .prompts import PromptSet, default_prompts, format_documents

TERMINAL_PREFIX = "So the answer is:"
SINGLE_THOUGHT_STRATEGIES = ("ircot", "tog", "gcot", "irgs")
CANONICAL_ARROW = " -> "
MIN_CHAIN_NODES = 4


@dataclass(frozen=True)
class ThoughtPair:
    fast: str
    slow: str

    def __post_init__(self) -> None:
        if not self.fast.strip() or not self.slow.strip():
            raise ValueError("both thoughts must be non-empty")


@dataclass(frozen=True)
class SingleThought:
    text: str
    terminal: bool
    answer_seed: str | None = None


@dataclass(frozen=True)
class ReasoningChain:
    raw: str
    nodes: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    def canonical(self) -> str:
        return CANONICAL_ARROW.join(self.nodes)


@dataclass(frozen=True)
class VerifierSelection:
    covered_indices: tuple[int, ...]
    raw_response: str
    warnings: tuple[str, ...] = field(default=())
    malformed: bool = False


def _request(gateway: Gateway, role: str, prompt: str, docs: Sequence[Document], sample_id, round) -> str:
    req = GenerationRequest(role, prompt, tuple(docs), sample_id=sample_id, round=round)
    return gateway.generate(req).text


# -- dual thoughts -----------------------------------------------------------

_LABEL_RE = re.compile(
    r"^[\s>*#\-]*(?:\d+[.)]\s*)?\**\s*(fast|slow)[\s_-]*thoughts?\s*\**\s*[:\-]?\s*\**\s*(.*)$",
    re.IGNORECASE,
)


def parse_thoughts(text: str) -> ThoughtPair:
    """Parse labeled ``Fast Thought`` / ``Slow Thought`` lines.

    A label on its own line takes the next unlabeled line as its content.
    Without both labels, the first two non-empty lines (labels stripped) are
    taken as fast then slow.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    labeled: dict[str, str] = {}
    stripped: list[str] = []
    pending: str | None = None
    for line in lines:
        m = _LABEL_RE.match(line)
        if m:
            kind, content = m.group(1).lower(), m.group(2).strip().strip("*").strip()
            if content:
                labeled.setdefault(kind, content)
                stripped.append(content)
                pending = None
            else:
                pending = kind
            continue
        if pending is not None:
            labeled.setdefault(pending, line)
            pending = None
        stripped.append(line)
    if "fast" in labeled and "slow" in labeled:
        return ThoughtPair(labeled["fast"], labeled["slow"])
    if len(stripped) < 2:
        raise UnparseableThoughts(f"expected two thoughts, got {len(stripped)} line(s): {text!r}")
    return ThoughtPair(stripped[0], stripped[1])


def generate_dual_thoughts(
    gateway: Gateway,
    question: str,
    pool_snapshot: Sequence[Document],
    *,
    prompts: PromptSet | None = None,
    sample_id: str | None = None,
    round: int | None = None,
) -> ThoughtPair:
    prompts = prompts or default_prompts()
    prompt = prompts.render(
        "dual_thought", question=question, context=format_documents(pool_snapshot), round=round
    )
    return parse_thoughts(_request(gateway, "dual_thought", prompt, pool_snapshot, sample_id, round))


# -- single-thought baselines ------------------------------------------------


def parse_single_thought(text: str, strategy: str) -> SingleThought:
    thought = text.strip()
    if not thought:
        raise GatewayFailure("EmptyResponse", f"{strategy} returned no text")
    if strategy != "irgs" and thought.startswith(TERMINAL_PREFIX):
        return SingleThought(thought, True, thought[len(TERMINAL_PREFIX):].strip())
    return SingleThought(thought, False)


def generate_single_thought(
    gateway: Gateway,
    strategy: str,
    question: str,
    pool_snapshot: Sequence[Document],
    *,
    thoughts: Sequence[str] = (),
    prompts: PromptSet | None = None,
    sample_id: str | None = None,
    round: int | None = None,
) -> SingleThought:
    """One baseline step.  ``irgs`` is never terminal; its loop runs on budget."""
    if strategy not in SINGLE_THOUGHT_STRATEGIES:
        raise ValueError(f"unknown single-thought strategy {strategy!r}")
    prompts = prompts or default_prompts()
    context = format_documents(pool_snapshot)
    history = "\n".join(thoughts) if thoughts else "(none)"
    if strategy == "irgs":
        prompt = prompts.render("irgs", query=question, context=context, thoughts=history)
    else:
        prompt = prompts.render(strategy, question=question, context=context, thoughts=history)
    text = _request(gateway, "single_thought", prompt, pool_snapshot, sample_id, round)
    return parse_single_thought(text, strategy)


# -- reasoning chain ---------------------------------------------------------

_ARROW_RE = re.compile(r"\s*(?:→|->)\s*")
_CHAIN_LABEL_RE = re.compile(r"^\s*\**\s*reasoning\s+chain\s*\**\s*:\s*", re.IGNORECASE)


def parse_reasoning_chain(text: str) -> ReasoningChain:
    raw = _CHAIN_LABEL_RE.sub("", text.strip(), count=1).strip()
    nodes = tuple(n for n in (" ".join(part.split()) for part in _ARROW_RE.split(raw)) if n)
    warnings = ()
    if len(nodes) < MIN_CHAIN_NODES:
        warnings = (f"reasoning chain has {len(nodes)} node(s), expected at least {MIN_CHAIN_NODES}",)
    return ReasoningChain(raw, nodes, warnings)


def generate_reasoning_chain(
    gateway: Gateway,
    question: str,
    pool_snapshot: Sequence[Document],
    *,
    prompts: PromptSet | None = None,
    sample_id: str | None = None,
    round: int | None = None,
) -> ReasoningChain:
    prompts = prompts or default_prompts()
    prompt = prompts.render("reasoning_chain", question=question, context=format_documents(pool_snapshot))
    return parse_reasoning_chain(_request(gateway, "reasoning_chain", prompt, pool_snapshot, sample_id, round))


# -- verifier ----------------------------------------------------------------

VERIFIER_KEY = "covered_doc_indices"


def _extract_json_object(text: str) -> object:
    body = text.strip()
    if body.startswith("```"):
        body = re.sub(r"^```[a-zA-Z]*\s*|\s*```$", "", body)
    try:
        return json.loads(body)
    except json.JSONDecodeError:
        start, end = body.find("{"), body.rfind("}")
        if start == -1 or end <= start:
            raise
        return json.loads(body[start : end + 1])


def parse_verifier_output(text: str, listing_length: int) -> VerifierSelection:
    """Validate ``{"covered_doc_indices": [...]}`` against a listing of the given length.

    Duplicates keep their first occurrence; indices outside ``1..listing_length``
    and non-integers are dropped with a warning.  Unparseable content yields an
    empty, ``malformed`` selection.
    """
    try:
        data = _extract_json_object(text)
    except (json.JSONDecodeError, ValueError):
        return VerifierSelection((), text, ("MalformedVerifierOutput: not valid JSON",), malformed=True)
    if not isinstance(data, dict) or not isinstance(data.get(VERIFIER_KEY), list):
        return VerifierSelection((), text, (f"MalformedVerifierOutput: missing list {VERIFIER_KEY!r}",), malformed=True)
    kept: list[int] = []
    warnings: list[str] = []
    for value in data[VERIFIER_KEY]:
        if isinstance(value, bool) or not isinstance(value, int):
            warnings.append(f"verifier index {value!r} is not an integer; dropped")
        elif not 1 <= value <= listing_length:
            warnings.append(f"verifier index {value} outside 1..{listing_length}; dropped")
        elif value in kept:
            warnings.append(f"verifier index {value} repeated; dropped")
        else:
            kept.append(value)
    return VerifierSelection(tuple(kept), text, tuple(warnings))


def verify_bridge_docs(
    gateway: Gateway,
    chain: ReasoningChain,
    listing: Sequence[Document],
    *,
    question: str = "",
    char_budget: int | None = 600,
    prompts: PromptSet | None = None,
    sample_id: str | None = None,
    round: int | None = None,
) -> VerifierSelection:
    prompts = prompts or default_prompts()
    prompt = prompts.render(
        "verifier",
        question=question,
        listing=format_documents(listing, char_budget=char_budget, label="Doc {i}:"),
        **{"reasoning chain": chain.canonical() or chain.raw},
    )
    text = _request(gateway, "verifier", prompt, listing, sample_id, round)
    selection = parse_verifier_output(text, len(listing))
    if selection.malformed and getattr(gateway, "live", False):
        retry = parse_verifier_output(_request(gateway, "verifier", prompt, listing, sample_id, round), len(listing))
        if not retry.malformed:
            return VerifierSelection(
                retry.covered_indices, retry.raw_response, selection.warnings + ("verifier retried",) + retry.warnings
            )
        selection = VerifierSelection((), retry.raw_response, selection.warnings + retry.warnings, malformed=True)
    return selection


# -- answer ------------------------------------------------------------------


def generate_answer(
    gateway: Gateway,
    question: str,
    final_docs: Sequence[Document],
    *,
    prompts: PromptSet | None = None,
    sample_id: str | None = None,
    round: int | None = None,
) -> str:
    prompts = prompts or default_prompts()
    prompt = prompts.render("answer", question=question, context=format_documents(final_docs))
    return _request(gateway, "answer", prompt, final_docs, sample_id, round).strip()
