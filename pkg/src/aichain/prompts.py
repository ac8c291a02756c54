"""Structured prompts and placeholder rendering.

A prompt has four aspects (context, instruction, examples, output formatter);
only the instruction is mandatory.  Aspects may contain ``{{Identifier}}``
placeholders that rendering replaces with bound values.  ``{{{{`` is the
escape for a literal ``{{``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .ir import Value, is_identifier

#: Aspect emission and scan order.
ASPECTS = ("context", "instruction", "examples", "output_formatter")


class TemplateError(Exception):
    """Base for prompt template failures."""


class PlaceholderSyntaxError(TemplateError):
    """Malformed placeholder; carries the aspect name and character offset."""

    def __init__(self, aspect: str, offset: int, message: str):
        super().__init__(f"{message} (aspect {aspect!r}, offset {offset})")
        self.aspect = aspect
        self.offset = offset


class UnresolvedPlaceholderError(TemplateError):
    """A placeholder had no binding during strict rendering."""

    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder {name!r}")
        self.name = name


@dataclass
class PromptTemplate:
    """Four-aspect prompt; empty optional aspects are treated as absent."""

    name: str
    instruction: str
    context: str | None = None
    examples: str | None = None
    output_formatter: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def aspect_texts(self) -> list[tuple[str, str]]:
        """Present aspects as (aspect name, text), in emission order."""
        present = []
        for aspect in ASPECTS:
            text = getattr(self, aspect)
            if text:
                present.append((aspect, text))
        return present

    def check(self) -> None:
        """Raise if the template violates its invariants."""
        if not self.instruction:
            raise TemplateError(f"template {self.name!r} has an empty instruction")
        extract_placeholders(self)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "context": self.context,
            "instruction": self.instruction,
            "examples": self.examples,
            "output_formatter": self.output_formatter,
        }
        out.update(self.extra)
        return out

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "PromptTemplate":
        known = {"name", "context", "instruction", "examples", "output_formatter"}
        return PromptTemplate(
            name=data["name"],
            instruction=data.get("instruction", ""),
            context=data.get("context"),
            examples=data.get("examples"),
            output_formatter=data.get("output_formatter"),
            extra={k: v for k, v in data.items() if k not in known},
        )


_IDENT_BODY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _scan_aspect(aspect: str, text: str):
    """Yield (name, start, end) spans for each placeholder; validate syntax.

    ``{{{{`` escapes a literal ``{{`` and is skipped; a lone ``}}`` is plain
    text.  Anything else after ``{{`` must be ``Identifier}}``.
    """
    pos = 0
    while True:
        start = text.find("{{", pos)
        if start < 0:
            return
        if text.startswith("{{{{", start):
            pos = start + 4
            continue
        end = text.find("}}", start + 2)
        if end < 0:
            raise PlaceholderSyntaxError(aspect, start, "unbalanced placeholder braces")
        name = text[start + 2 : end]
        if not is_identifier(name):
            raise PlaceholderSyntaxError(aspect, start, f"invalid placeholder name {name!r}")
        yield name, start, end + 2
        pos = end + 2


def extract_placeholders(template: PromptTemplate) -> list[str]:
    """Placeholder identifiers in first-occurrence order across the aspects."""
    seen: list[str] = []
    for aspect, text in template.aspect_texts():
        for name, _, _ in _scan_aspect(aspect, text):
            if name not in seen:
                seen.append(name)
    return seen


def _render_aspect(aspect: str, text: str, bindings: dict[str, Value]) -> str:
    parts: list[str] = []
    pos = 0
    while True:
        start = text.find("{{", pos)
        if start < 0:
            parts.append(text[pos:])
            return "".join(parts)
        if text.startswith("{{{{", start):
            parts.append(text[pos:start] + "{{")
            pos = start + 4
            continue
        end = text.find("}}", start + 2)
        if end < 0:
            raise PlaceholderSyntaxError(aspect, start, "unbalanced placeholder braces")
        name = text[start + 2 : end]
        if not is_identifier(name):
            raise PlaceholderSyntaxError(aspect, start, f"invalid placeholder name {name!r}")
        if name not in bindings:
            raise UnresolvedPlaceholderError(name)
        parts.append(text[pos:start])
        parts.append(bindings[name].as_text())
        pos = end + 2


def render(template: PromptTemplate, bindings: dict[str, Value]) -> str:
    """Render the template into final prompt text (strict mode).

    Present aspects are joined with one blank line, in order; every
    placeholder must have a binding and is replaced by the value's text form.
    Text outside placeholder spans is never altered.
    """
    if not template.instruction:
        raise TemplateError(f"template {template.name!r} has an empty instruction")
    rendered = [
        _render_aspect(aspect, text, bindings) for aspect, text in template.aspect_texts()
    ]
    return "\n\n".join(rendered)


def prompts_to_list(templates: list[PromptTemplate]) -> list[dict[str, Any]]:
    """Prompt file form: JSON array of templates."""
    return [t.to_dict() for t in templates]


def prompts_from_list(data: list[dict[str, Any]]) -> list[PromptTemplate]:
    return [PromptTemplate.from_dict(entry) for entry in data]
