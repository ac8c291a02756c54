"""Design-time co-pilots: requirement elicitation, description merging and
AI-chain skeleton generation.

All three are thin, stateless prompt pipelines over the engine gateway, so a
mock engine makes them fully deterministic.  The system prompts ship as text
assets under ``assets/copilot/``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .engines import EngineConfig, EngineGateway
from .ir import (
    ChainProgram,
    ConsoleInput,
    OutputWrapper,
    Unit,
    VariableRef,
    WorkerSpec,
    is_identifier,
)
from .prompts import PromptTemplate

logger = logging.getLogger(__name__)

_REPAIR_INSTRUCTION = (
    "The previous reply was not valid JSON. Return only valid JSON matching the "
    "required schema, with no commentary."
)


class CopilotError(Exception):
    """Co-pilot pipeline failure (bad inputs, invalid skeleton, forward refs)."""


class SkeletonParseError(CopilotError):
    """Engine reply was not valid JSON even after one repair round-trip."""

    def __init__(self, raw: str):
        super().__init__("skeleton reply is not valid JSON after repair")
        self.raw = raw


def _asset(name: str) -> str:
    return resources.files("aichain").joinpath("assets/copilot").joinpath(name).read_text(
        encoding="utf-8"
    )


@dataclass
class Conversation:
    """Alternating (role, text) turns, starting with the user."""

    turns: list[tuple[str, str]] = field(default_factory=list)

    def check(self) -> None:
        for index, (role, _) in enumerate(self.turns):
            expected = "user" if index % 2 == 0 else "copilot"
            if role != expected:
                raise CopilotError(f"conversation turn {index} must have role {expected!r}")

    def to_list(self) -> list[dict[str, str]]:
        return [{"role": role, "text": text} for role, text in self.turns]

    @staticmethod
    def from_list(data: list[dict[str, str]]) -> "Conversation":
        return Conversation([(t["role"], t["text"]) for t in data])


@dataclass
class SkeletonStep:
    """One generated step: a name for its output, three candidate prompts."""

    name: str
    description: str
    candidate_prompts: list[str]
    input_refs: list[str] = field(default_factory=list)
    engine_ref: str | None = None

    def check(self) -> None:
        if not is_identifier(self.name):
            raise CopilotError(f"step name {self.name!r} is not a valid identifier")
        if len(self.candidate_prompts) != 3:
            raise CopilotError(
                f"step {self.name!r}: exactly three candidate prompts required, "
                f"got {len(self.candidate_prompts)}"
            )
        for ref in self.input_refs:
            if not is_identifier(ref):
                raise CopilotError(f"step {self.name!r}: input {ref!r} is not a valid identifier")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "candidate_prompts": list(self.candidate_prompts),
            "input_refs": list(self.input_refs),
            "engine_ref": self.engine_ref,
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "SkeletonStep":
        return SkeletonStep(
            name=data["name"],
            description=data.get("description", ""),
            candidate_prompts=list(data.get("candidate_prompts", [])),
            input_refs=list(data.get("input_refs", [])),
            engine_ref=data.get("engine_ref"),
        )


@dataclass
class Skeleton:
    task_description: str
    steps: list[SkeletonStep] = field(default_factory=list)

    def check(self) -> None:
        names: set[str] = set()
        for step in self.steps:
            step.check()
            if step.name in names:
                raise CopilotError(f"duplicate step name {step.name!r}")
            names.add(step.name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_description": self.task_description,
            "steps": [s.to_dict() for s in self.steps],
        }

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "Skeleton":
        return Skeleton(
            task_description=data.get("task_description", ""),
            steps=[SkeletonStep.from_dict(s) for s in data.get("steps", [])],
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def clarify(
    task_description: str,
    conversation: Conversation,
    engine: EngineConfig,
    gateway: EngineGateway,
) -> str:
    """Produce the next clarifying question for `task_description`.

    The caller owns the conversation; nothing is appended here.
    """
    if not task_description:
        raise CopilotError("task description must be non-empty")
    conversation.check()
    parts = [_asset("clarify.txt"), f"Task description: {task_description}"]
    if conversation.turns:
        lines = [
            ("User" if role == "user" else "Co-pilot") + f": {text}"
            for role, text in conversation.turns
        ]
        parts.append("Conversation so far:\n" + "\n".join(lines))
    parts.append("Ask the single most useful next clarifying question.")
    response = gateway.invoke(engine, "\n\n".join(parts))
    return response.value.as_text().strip()


def incorporate(
    task_description: str,
    question: str,
    answer: str,
    engine: EngineConfig,
    gateway: EngineGateway,
) -> str:
    """Rewrite `task_description` so it absorbs the user's answer."""
    if not task_description or not question or not answer:
        raise CopilotError("task description, question and answer must be non-empty")
    prompt = "\n\n".join(
        [
            _asset("incorporate.txt"),
            f"Task description: {task_description}",
            f"Question: {question}\nAnswer: {answer}",
            "Return only the rewritten task description.",
        ]
    )
    response = gateway.invoke(engine, prompt)
    return response.value.as_text().strip()


def generate_skeleton(
    task_description: str,
    engine: EngineConfig,
    gateway: EngineGateway,
) -> Skeleton:
    """Ask the engine to decompose `task_description` into skeleton steps.

    The engine must answer with strict JSON; one automatic repair round-trip
    is attempted before giving up with :class:`SkeletonParseError`.
    """
    if not task_description:
        raise CopilotError("task description must be non-empty")
    prompt = "\n\n".join([_asset("skeleton.txt"), f"Task description: {task_description}"])
    raw = gateway.invoke(engine, prompt).value.as_text()
    data = _parse_json(raw)
    if data is None:
        logger.warning("skeleton reply was not valid JSON; attempting one repair round-trip")
        repair_prompt = "\n\n".join(
            [_REPAIR_INSTRUCTION, f"Previous reply:\n{raw}", f"Task description: {task_description}"]
        )
        raw = gateway.invoke(engine, repair_prompt).value.as_text()
        data = _parse_json(raw)
        if data is None:
            raise SkeletonParseError(raw)
    skeleton = _skeleton_from_reply(task_description, data)
    skeleton.check()
    return skeleton


def _parse_json(raw: str) -> dict[str, Any] | None:
    text = raw.strip()
    text = re.sub(r"^```[a-zA-Z]*\n?|```$", "", text).strip()
    try:
        parsed = json.loads(text)
    except ValueError:
        return None
    return parsed if isinstance(parsed, dict) else None


def _skeleton_from_reply(task_description: str, data: dict[str, Any]) -> Skeleton:
    steps = []
    for entry in data.get("steps", []):
        if not isinstance(entry, dict):
            raise CopilotError(f"skeleton step must be an object, got {entry!r}")
        steps.append(
            SkeletonStep(
                name=str(entry.get("name", "")),
                description=str(entry.get("description", "")),
                candidate_prompts=[str(p) for p in entry.get("prompts", [])],
                input_refs=[str(i) for i in entry.get("inputs", [])],
                engine_ref=entry.get("engine"),
            )
        )
    return Skeleton(task_description=task_description, steps=steps)


def prompt_name_for_step(step_name: str) -> str:
    return f"{step_name}_prompt"


def skeleton_prompts(skeleton: Skeleton) -> list[PromptTemplate]:
    """One project prompt per step, seeded with the first candidate."""
    return [
        PromptTemplate(name=prompt_name_for_step(s.name), instruction=s.candidate_prompts[0])
        for s in skeleton.steps
    ]


def skeleton_to_program(skeleton: Skeleton, *, default_engine: str = "") -> ChainProgram:
    """Assemble the sequential chain a valid skeleton describes.

    One worker per step, in order; inputs naming an earlier step become
    variable references, anything else becomes a synthesized console input;
    the final worker lands in an output block.  Unit ids are derived from
    step names so assembly is deterministic.
    """
    skeleton.check()
    all_names = {s.name for s in skeleton.steps}
    earlier: set[str] = set()
    top_level: list[Unit] = []
    for index, step in enumerate(skeleton.steps):
        preworkers: list = []
        for ref in step.input_refs:
            if ref in earlier:
                preworkers.append(VariableRef(name=ref))
            elif ref in all_names:
                raise CopilotError(
                    f"step {step.name!r} references {ref!r} before it is produced"
                )
            else:
                preworkers.append(ConsoleInput(prompt_text=ref))
        worker = WorkerSpec(
            name=step.name,
            prompt_ref=prompt_name_for_step(step.name),
            engine_ref=step.engine_ref or default_engine,
            preworkers=preworkers,
            id=f"w_{step.name}",
        )
        if index == len(skeleton.steps) - 1:
            top_level.append(OutputWrapper(worker=worker, id=f"out_{step.name}"))
        else:
            top_level.append(worker)
        earlier.add(step.name)
    return ChainProgram(name=skeleton.task_description, variables=[], top_level=top_level)
