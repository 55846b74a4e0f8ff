"""Turn instructor utterances into ordered action steps.

The model is asked for a line-oriented answer, one ``name(arg, ...)`` step
per line. Validation is strict and total: any completion either parses into
steps or raises a ParseError naming what went wrong. Invalid completions are
re-prompted with the violation appended, at most twice, so no utterance ever
costs more than three completions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .llm import CompletionBackend
from .model import Constant, PredicateInstance, Signature, canonicalize

MAX_COMPLETIONS = 3

STEP_RE = re.compile(r"^([A-Za-z][A-Za-z0-9_ ]*?)\s*\((.*)\)$")
ARG_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_ ]*$")

DETERMINERS = {"the", "a", "an"}

# Arguments must name objects; placeholder pronouns defeat generalization.
PRONOUNS = {"it", "them", "they", "this", "that", "these", "those", "him", "her"}


class ParseError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class BlankUtterance(ParseError):
    """The instructor's utterance has no content; nothing is sent to the model."""


class Unparseable(ParseError):
    """A completion line does not fit the name(arg, ...) grammar."""


class SchemaViolation(ParseError):
    """The completion fits the grammar but breaks a content rule."""


@dataclass(frozen=True)
class ParseResult:
    steps: tuple[PredicateInstance, ...]
    raw_completion: str
    repair_rounds: int


def _clean_argument(raw: str) -> str:
    words = raw.split()
    if len(words) > 1 and words[0].lower() in DETERMINERS:
        words = words[1:]
    return " ".join(words)


def parse_steps(text: str) -> list[PredicateInstance]:
    """Validate one completion. Total: returns steps or raises ParseError."""
    steps: list[PredicateInstance] = []
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        match = STEP_RE.match(line)
        if match is None:
            raise Unparseable(f"line {line!r} is not name(arg, ...)")
        name_text, args_text = match.group(1).strip(), match.group(2)
        args: list[Constant] = []
        if args_text.strip():
            for slot in args_text.split(","):
                cleaned = _clean_argument(slot.strip())
                if not cleaned:
                    raise SchemaViolation(f"empty argument slot in {line!r}")
                if not ARG_RE.match(cleaned):
                    raise Unparseable(f"argument {slot.strip()!r} in {line!r}")
                symbol = canonicalize(cleaned)
                if symbol.key in PRONOUNS:
                    raise SchemaViolation(f"pronoun argument {cleaned!r} in {line!r}")
                args.append(Constant(symbol))
        steps.append(PredicateInstance(canonicalize(name_text), tuple(args)))
    if not steps:
        raise SchemaViolation("completion contains no steps")
    return steps


def render_known(signatures: Iterable[Signature]) -> str:
    lines = [f"- {sig.render()}" for sig in signatures]
    return "\n".join(lines) if lines else "(none yet)"


def render_context(turns: Sequence[tuple[str, str]]) -> str:
    if not turns:
        return ""
    lines = [f"{speaker}: {text}" for speaker, text in turns]
    return "Dialog so far:\n" + "\n".join(lines) + "\n\n"


def _load_template() -> str:
    return (
        resources.files("taskforge")
        .joinpath("prompts/parse.txt")
        .read_text(encoding="utf-8")
    )


class UtteranceParser:
    def __init__(self, backend: CompletionBackend):
        self._backend = backend
        self._template = _load_template()

    def build_prompt(
        self,
        utterance: str,
        known: Iterable[Signature] = (),
        context: Sequence[tuple[str, str]] = (),
    ) -> str:
        return (
            self._template.replace("{{known}}", render_known(known))
            .replace("{{context}}", render_context(context))
            .replace("{{utterance}}", utterance.strip())
        )

    @staticmethod
    def _repair_prompt(prompt: str, completion: str, error: ParseError) -> str:
        return (
            prompt
            + "\n"
            + completion
            + "\n\n"
            + f"That answer was invalid: {error.reason}. Rewrite the steps, "
            "one per line, in the form name(arg, ...). Use explicit object "
            "names, never pronouns.\nSteps:"
        )

    def parse(
        self,
        utterance: str,
        known: Iterable[Signature] = (),
        context: Sequence[tuple[str, str]] = (),
    ) -> ParseResult:
        if not utterance.strip():
            raise BlankUtterance("utterance is blank")
        prompt = self.build_prompt(utterance, known, context)
        last_error: ParseError | None = None
        for attempt in range(MAX_COMPLETIONS):
            completion = self._backend.complete("parse", prompt)
            try:
                steps = parse_steps(completion)
            except ParseError as exc:
                last_error = exc
                prompt = self._repair_prompt(prompt, completion, exc)
                continue
            return ParseResult(tuple(steps), completion, attempt)
        assert last_error is not None
        raise last_error
