"""Prompt templates with named ``{placeholder}`` fields.

Templates use :meth:`str.format` syntax, so literal braces are doubled.  Each
role has a set of variables the engine supplies and a subset every template
for that role must reference; both are checked when a :class:`PromptSet` is
built, so a broken template fails before any generation call.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import Document
from ..errors import PromptError

# role -> (available variables, required variables)
ROLE_VARIABLES: dict[str, tuple[frozenset[str], frozenset[str]]] = {
    "dual_thought": (frozenset({"question", "context", "round"}), frozenset({"question", "context"})),
    "reasoning_chain": (frozenset({"question", "context"}), frozenset({"question", "context"})),
    "verifier": (
        frozenset({"question", "reasoning chain", "listing"}),
        frozenset({"reasoning chain", "listing"}),
    ),
    "answer": (frozenset({"question", "context"}), frozenset({"question", "context"})),
    "ircot": (frozenset({"question", "context", "thoughts"}), frozenset({"question", "context"})),
    "tog": (frozenset({"question", "context", "thoughts"}), frozenset({"question", "context"})),
    "gcot": (frozenset({"question", "context", "thoughts"}), frozenset({"question", "context"})),
    "irgs": (frozenset({"query", "context", "thoughts"}), frozenset({"query", "context"})),
}

ROLES = tuple(ROLE_VARIABLES)


def placeholders(template: str) -> set[str]:
    """Field names referenced by a format-style template."""
    try:
        return {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}
    except ValueError as exc:
        raise PromptError(f"unbalanced braces: {exc}") from exc


def template_problems(role: str, template: str) -> list[str]:
    if role not in ROLE_VARIABLES:
        return [f"unknown prompt role {role!r}"]
    available, required = ROLE_VARIABLES[role]
    try:
        used = placeholders(template)
    except PromptError as exc:
        return [f"{role}: {exc}"]
    problems = [f"{role}: template missing {{{name}}}" for name in sorted(required - used)]
    problems += [f"{role}: unknown placeholder {{{name}}}" for name in sorted(used - available)]
    return problems


@dataclass(frozen=True)
class PromptSet:
    templates: Mapping[str, str]

    def __post_init__(self) -> None:
        problems = [p for role in ROLES for p in self._problems_for(role)]
        if problems:
            raise PromptError("; ".join(problems))

    def _problems_for(self, role: str) -> list[str]:
        if role not in self.templates:
            return [f"{role}: no template"]
        return template_problems(role, self.templates[role])

    def render(self, role: str, **variables: object) -> str:
        available, _ = ROLE_VARIABLES[role]
        missing = available - variables.keys()
        if missing:
            raise PromptError(f"{role}: no value for {sorted(missing)}")
        return self.templates[role].format_map({k: variables[k] for k in available})

    @classmethod
    def load_dir(cls, directory: str | Path | None = None) -> "PromptSet":
        """Load ``<role>.txt`` files; roles absent from ``directory`` use the defaults."""
        templates = dict(default_templates())
        if directory is not None:
            for role in ROLES:
                path = Path(directory) / f"{role}.txt"
                if path.exists():
                    templates[role] = path.read_text(encoding="utf-8")
        return cls(templates)


def default_templates() -> dict[str, str]:
    root = resources.files(__package__)
    return {role: (root / f"{role}.txt").read_text(encoding="utf-8") for role in ROLES}


def check_prompt_dir(directory: str | Path) -> list[str]:
    problems = []
    for role in ROLES:
        path = Path(directory) / f"{role}.txt"
        if path.exists():
            problems += template_problems(role, path.read_text(encoding="utf-8"))
    return problems


def format_documents(docs: Sequence[Document], char_budget: int | None = None, label: str = "[{i}]") -> str:
    """Number documents from 1, one block per document."""
    blocks = []
    for i, doc in enumerate(docs, start=1):
        text = " ".join(doc.text.split())
        if char_budget is not None and len(text) > char_budget:
            text = text[:char_budget].rstrip() + " ..."
        head = label.format(i=i)
        blocks.append(f"{head} {doc.title}: {text}" if doc.title else f"{head} {text}")
    return "\n".join(blocks) if blocks else "(no documents)"


_default: PromptSet | None = None


def default_prompts() -> PromptSet:
    global _default
    if _default is None:
        _default = PromptSet(default_templates())
    return _default
