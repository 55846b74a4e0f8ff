"""Decide whether an unfamiliar action name is a paraphrase of a known one.

A parsed step like ``pullHandBack()`` should not trigger a lesson if the
library already holds ``resetHandPosition/0`` under a different surface form.
The matcher first tries exact canonical identity (free), then asks the model
to pick among same-arity candidates or answer NONE. The model can only ever
select from the offered candidates; an answer outside them is re-prompted and
ultimately rejected, so matching never invents an action.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .llm import CompletionBackend
from .model import PredicateInstance, Signature, canonicalize

MAX_COMPLETIONS = 3

NO_MATCH = "NONE"


class MatchError(Exception):
    pass


class AnswerViolation(MatchError):
    """The model kept answering outside the candidate list."""

    def __init__(self, predicate: str, answer: str):
        super().__init__(
            f"match answer {answer!r} for {predicate} is not a candidate or {NO_MATCH}"
        )
        self.answer = answer


@dataclass(frozen=True)
class MatchResult:
    """Outcome of resolving one unfamiliar step name.

    ``signature`` is the matched known action, or None when the step is
    genuinely new. ``method`` records how the decision was made: "exact" for
    canonical identity, "model" when the model answered, and None when there
    were no candidates to ask about.
    """

    signature: Signature | None
    method: str | None
    raw_answer: str | None = None


def _render_predicate(instance: PredicateInstance) -> str:
    slots = ", ".join(["_"] * instance.arity)
    return f"{instance.name.display}({slots})"


def _load_template() -> str:
    return (
        resources.files("taskforge")
        .joinpath("prompts/match.txt")
        .read_text(encoding="utf-8")
    )


class ActionMatcher:
    def __init__(self, backend: CompletionBackend):
        self._backend = backend
        self._template = _load_template()

    def build_prompt(
        self, instance: PredicateInstance, candidates: Sequence[Signature]
    ) -> str:
        rendered = "\n".join(f"- {sig.render()}" for sig in candidates)
        return (
            self._template.replace("{{predicate}}", _render_predicate(instance))
            .replace("{{candidates}}", rendered)
        )

    def resolve(
        self, instance: PredicateInstance, candidates: Sequence[Signature]
    ) -> MatchResult:
        """Resolve ``instance`` against same-arity known actions.

        Candidates whose arity differs from the instance are ignored. Exact
        canonical identity and an empty candidate pool are decided without
        any model call.
        """
        pool = [sig for sig in candidates if sig.arity == instance.arity]
        for sig in pool:
            if sig.name == instance.name:
                return MatchResult(sig, "exact")
        if not pool:
            return MatchResult(None, None)

        prompt = self.build_prompt(instance, pool)
        answer = ""
        for _ in range(MAX_COMPLETIONS):
            answer = self._backend.complete("match", prompt).strip()
            if answer == NO_MATCH:
                return MatchResult(None, "model", answer)
            for sig in pool:
                if answer == sig.name.display:
                    return MatchResult(sig, "model", answer)
            # Leniency: accept a canonical spelling variant of a candidate.
            try:
                answer_key = canonicalize(answer).key
            except Exception:
                answer_key = ""
            lenient = [sig for sig in pool if sig.name.key == answer_key]
            if lenient:
                return MatchResult(lenient[0], "model", answer)
            prompt = (
                prompt
                + " "
                + answer
                + f"\n\nThat answer is not in the list. Reply with exactly one "
                f"known action name from the list, or {NO_MATCH}.\nAnswer:"
            )
        raise AnswerViolation(instance.render(), answer)
