"""The teaching loop: commands in, questions or confirmations out.

A command is parsed into steps, each step is checked against the library
(directly, then through paraphrase matching), and the first genuinely
unfamiliar step suspends the turn with the question "What does X mean?".
The instructor's next utterance defines X; its steps run through the same
loop, so clarification nests. Each suspended lesson is an explicit frame on
a stack, which is what lets one dialog span many turns and survive snapshot
and restore.

Every turn is atomic: if parsing, matching, or the backend fails mid-turn,
everything the turn changed (including tasks it already registered) is
rolled back and the failure is reported without poisoning the session.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Sequence

from .llm import BackendError, CompletionBackend
from .matching import ActionMatcher, MatchError
from .model import (
    PredicateInstance,
    Provenance,
    Signature,
    TaskLibrary,
    canonicalize,
    generalize,
)
from .parsing import BlankUtterance, ParseError, UtteranceParser
from .store import (
    library_from_doc,
    library_to_doc,
    seed_library,
    step_from_json,
    step_to_json,
)

MAX_STACK_DEPTH = 16

# How many prior dialog lines the parser gets to see.
CONTEXT_WINDOW = 6

SNAPSHOT_VERSION = 1


class LearningError(Exception):
    pass


class StackOverflow(LearningError):
    """Clarification nested deeper than any sane lesson goes."""


class CorruptToken(LearningError):
    """A session token failed structural or checksum validation."""


@dataclass(frozen=True)
class Reply:
    """What the robot says back after one instructor utterance.

    kind is one of "question", "task_learned", "steps_accepted", "error".
    learned lists every task registered during the episode that just
    finished; steps carries the fully understood plan for the command.
    """

    kind: str
    text: str
    question_about: str | None = None
    learned: tuple[Signature, ...] = ()
    steps: tuple[PredicateInstance, ...] = ()
    error_kind: str | None = None


@dataclass
class PendingFrame:
    """One suspended lesson: what is being taught and how far it got.

    The root command is a frame with target None. queue holds steps not yet
    confirmed known (head first); accumulated holds confirmed steps with
    paraphrases already rewritten to their canonical actions.
    """

    target: PredicateInstance | None
    source_utterance: str
    queue: list[PredicateInstance] = field(default_factory=list)
    accumulated: list[PredicateInstance] = field(default_factory=list)
    awaiting_definition: bool = False

    def clone(self) -> "PendingFrame":
        return PendingFrame(
            target=self.target,
            source_utterance=self.source_utterance,
            queue=list(self.queue),
            accumulated=list(self.accumulated),
            awaiting_definition=self.awaiting_definition,
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def question_text(name: str) -> str:
    return f"What does {name} mean?"


class DialogSession:
    """A resumable teaching dialog over a (possibly shared) task library."""

    def __init__(
        self,
        library: TaskLibrary,
        parser: UtteranceParser,
        matcher: ActionMatcher,
        clock: Callable[[], str] = _utc_now,
    ) -> None:
        self.library = library
        self._parser = parser
        self._matcher = matcher
        self._clock = clock
        self.stack: list[PendingFrame] = []
        self.transcript: list[tuple[str, str]] = []
        self.newly_learned: list[Signature] = []

    @property
    def phase(self) -> str:
        if self.stack and self.stack[-1].awaiting_definition:
            return "awaiting_definition"
        return "awaiting_command"

    def pending_question(self) -> str | None:
        if self.phase != "awaiting_definition":
            return None
        target = self.stack[-1].target
        assert target is not None
        return question_text(target.name.display)

    def _context(self) -> list[tuple[str, str]]:
        spoken = [
            (speaker, text)
            for speaker, text in self.transcript
            if speaker in ("instructor", "robot")
        ]
        return spoken[-CONTEXT_WINDOW:]

    def submit(self, text: str) -> Reply:
        """Process one instructor utterance. Never raises for dialog faults;
        failures come back as an error Reply after the turn is rolled back."""
        mark = len(self.transcript)
        stack_backup = [frame.clone() for frame in self.stack]
        learned_backup = list(self.newly_learned)
        turn_added: list[Signature] = []
        try:
            return self._run_turn(text, turn_added)
        except (ParseError, MatchError, BackendError, LearningError) as exc:
            for signature in turn_added:
                self.library.unregister(signature)
            self.stack = stack_backup
            self.newly_learned = learned_backup
            del self.transcript[mark:]
            error_kind = self._classify(exc)
            self.transcript.append(
                ("system", f"turn abandoned ({error_kind}): {exc}")
            )
            return Reply(
                kind="error",
                text=f"I could not process that ({error_kind}): {exc}",
                error_kind=error_kind,
            )

    @staticmethod
    def _classify(exc: Exception) -> str:
        if isinstance(exc, BlankUtterance):
            return "empty"
        if isinstance(exc, BackendError):
            return "backend"
        if isinstance(exc, ParseError):
            return "parse"
        if isinstance(exc, MatchError):
            return "match"
        if isinstance(exc, StackOverflow):
            return "depth"
        return "internal"

    def _run_turn(self, text: str, turn_added: list[Signature]) -> Reply:
        cleaned = text.strip()
        if not cleaned:
            raise BlankUtterance("utterance is blank")
        context = self._context()
        self.transcript.append(("instructor", cleaned))
        if self.phase == "awaiting_command":
            self.newly_learned = []
            result = self._parser.parse(cleaned, self.library.signatures(), context)
            self.stack.append(
                PendingFrame(
                    target=None,
                    source_utterance=cleaned,
                    queue=list(result.steps),
                )
            )
        else:
            frame = self.stack[-1]
            result = self._parser.parse(cleaned, self.library.signatures(), context)
            frame.queue = list(result.steps)
            frame.source_utterance = cleaned
            frame.awaiting_definition = False
        return self._process(turn_added)

    def _process(self, turn_added: list[Signature]) -> Reply:
        while True:
            frame = self.stack[-1]
            while frame.queue:
                step = frame.queue[0]
                if self.library.get(step.signature) is not None:
                    frame.accumulated.append(frame.queue.pop(0))
                    continue
                match = self._matcher.resolve(step, self.library.signatures())
                if match.signature is not None:
                    frame.queue.pop(0)
                    frame.accumulated.append(
                        PredicateInstance(match.signature.name, step.args)
                    )
                    continue
                if len(self.stack) >= MAX_STACK_DEPTH:
                    raise StackOverflow(
                        f"lesson for {step.render()} would nest deeper than "
                        f"{MAX_STACK_DEPTH} levels"
                    )
                self.stack.append(
                    PendingFrame(
                        target=step,
                        source_utterance="",
                        awaiting_definition=True,
                    )
                )
                question = question_text(step.name.display)
                self.transcript.append(("robot", question))
                return Reply(
                    kind="question",
                    text=question,
                    question_about=step.name.display,
                )

            if frame.target is None:
                return self._finish_root(frame)

            definition = generalize(
                frame.target,
                frame.accumulated,
                provenance=Provenance(frame.source_utterance, self._clock()),
            )
            self.library.register(definition)
            turn_added.append(definition.signature)
            self.newly_learned.append(definition.signature)
            self.stack.pop()
            parent = self.stack[-1]
            assert parent.queue and parent.queue[0].signature == definition.signature
            parent.accumulated.append(parent.queue.pop(0))

    def _finish_root(self, frame: PendingFrame) -> Reply:
        self.stack.pop()
        plan = tuple(frame.accumulated)
        if self.newly_learned:
            learned = tuple(self.newly_learned)
            names = ", ".join(sig.name.display for sig in learned)
            plural = "s" if len(learned) != 1 else ""
            reply = Reply(
                kind="task_learned",
                text=f"OK. I learned {len(learned)} new task{plural}: {names}.",
                learned=learned,
                steps=plan,
            )
        else:
            reply = Reply(kind="steps_accepted", text="OK.", steps=plan)
        self.transcript.append(("robot", reply.text))
        return reply

    # -- suspend and resume ------------------------------------------------

    def snapshot(self) -> str:
        payload = {
            "library": library_to_doc(self.library),
            "stack": [self._frame_to_json(f) for f in self.stack],
            "transcript": [[speaker, text] for speaker, text in self.transcript],
            "newly_learned": [
                [sig.name.display, sig.arity] for sig in self.newly_learned
            ],
        }
        checksum = self._checksum(payload)
        return json.dumps(
            {"version": SNAPSHOT_VERSION, "checksum": checksum, "payload": payload},
            ensure_ascii=False,
        )

    def restore(self, token: str) -> None:
        """Rebuild this session (and its library, in place) from a token."""
        try:
            envelope = json.loads(token)
        except (TypeError, json.JSONDecodeError) as exc:
            raise CorruptToken(f"token is not valid JSON: {exc}") from exc
        if not isinstance(envelope, dict):
            raise CorruptToken("token is not an object")
        if envelope.get("version") != SNAPSHOT_VERSION:
            raise CorruptToken(f"unsupported token version {envelope.get('version')!r}")
        payload = envelope.get("payload")
        if not isinstance(payload, dict):
            raise CorruptToken("token has no payload")
        if self._checksum(payload) != envelope.get("checksum"):
            raise CorruptToken("checksum mismatch; token was altered or truncated")
        try:
            definitions = library_from_doc(payload["library"]).definitions()
            stack = [self._frame_from_json(raw) for raw in payload["stack"]]
            transcript = [
                (str(speaker), str(text)) for speaker, text in payload["transcript"]
            ]
            newly = [
                Signature(canonicalize(name), int(arity))
                for name, arity in payload["newly_learned"]
            ]
        except CorruptToken:
            raise
        except Exception as exc:
            raise CorruptToken(f"payload does not describe a session: {exc}") from exc
        self.library.replace_contents(definitions)
        self.stack = stack
        self.transcript = transcript
        self.newly_learned = newly

    @staticmethod
    def _checksum(payload: dict[str, Any]) -> str:
        blob = json.dumps(
            payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @staticmethod
    def _frame_to_json(frame: PendingFrame) -> dict[str, Any]:
        return {
            "target": None if frame.target is None else step_to_json(frame.target),
            "source_utterance": frame.source_utterance,
            "queue": [step_to_json(s) for s in frame.queue],
            "accumulated": [step_to_json(s) for s in frame.accumulated],
            "awaiting_definition": frame.awaiting_definition,
        }

    @staticmethod
    def _frame_from_json(raw: Any) -> PendingFrame:
        if not isinstance(raw, dict):
            raise CorruptToken("frame is not an object")
        target_raw = raw["target"]
        return PendingFrame(
            target=None if target_raw is None else step_from_json(target_raw, "$"),
            source_utterance=str(raw["source_utterance"]),
            queue=[step_from_json(s, "$") for s in raw["queue"]],
            accumulated=[step_from_json(s, "$") for s in raw["accumulated"]],
            awaiting_definition=bool(raw["awaiting_definition"]),
        )


def build_session(
    backend: CompletionBackend,
    library: TaskLibrary | None = None,
    clock: Callable[[], str] = _utc_now,
) -> DialogSession:
    """Wire a session from one completion backend and an optional library."""
    if library is None:
        library = seed_library()
    return DialogSession(
        library=library,
        parser=UtteranceParser(backend),
        matcher=ActionMatcher(backend),
        clock=clock,
    )


class ScriptMismatch(LearningError):
    def __init__(self, turn: int, problem: str, reply: Reply):
        super().__init__(f"turn {turn}: {problem}")
        self.turn = turn
        self.reply = reply


def expectation_problem(turn: dict[str, Any], reply: Reply) -> str | None:
    """Describe how a reply falls short of a script turn, or None if it fits."""
    if reply.kind != turn["expect"]:
        return f"expected {turn['expect']}, got {reply.kind}: {reply.text}"
    about = turn.get("expect_question_about")
    if about is not None:
        asked = reply.question_about or ""
        if canonicalize(asked).key != canonicalize(about).key:
            return f"expected a question about {about}, got one about {asked}"
    return None


def run_script(
    session: DialogSession, turns: Sequence[dict[str, Any]]
) -> list[Reply]:
    """Drive a session through a script, checking each expected outcome."""
    replies: list[Reply] = []
    for i, turn in enumerate(turns):
        reply = session.submit(turn["utterance"])
        replies.append(reply)
        problem = expectation_problem(turn, reply)
        if problem is not None:
            raise ScriptMismatch(i, problem, reply)
    return replies
