"""HTTP and WebSocket front of the teaching loop.

Sessions are created over REST, utterances are submitted one at a time, and
everything a session says or hears is also published on its event stream.
Event sequence numbers are per session and gapless: a client that connects
late receives the full backlog first, then live events, with no hole between
them. All sessions teach into one shared library; whenever a turn registers
new tasks, every connected session is told through a library_updated event.

A session processes one utterance at a time. A second submission while one
is in flight is refused with 409 rather than queued, so the instructor
always knows which utterance an answer belongs to.
"""
from __future__ import annotations

import asyncio
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .learning import DialogSession, Reply, _utc_now, build_session
from .llm import CompletionBackend
from .model import (
    Constant,
    DepthExceeded,
    EmptyName,
    PredicateInstance,
    TaskLibrary,
    canonicalize,
    expand,
)
from .store import library_to_doc, seed_library, tree_to_json


class EventHub:
    """Per-session event log plus fan-out to live WebSocket subscribers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._history: list[dict[str, Any]] = []
        self._seq = 0
        self._subscribers: list[tuple[asyncio.AbstractEventLoop, asyncio.Queue]] = []

    def publish(self, event_type: str, **fields: Any) -> dict[str, Any]:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "type": event_type, **fields}
            self._history.append(event)
            subscribers = list(self._subscribers)
        for loop, queue in subscribers:
            loop.call_soon_threadsafe(queue.put_nowait, event)
        return event

    def subscribe(self) -> tuple[list[dict[str, Any]], asyncio.Queue]:
        """Atomically snapshot the backlog and start receiving what follows."""
        queue: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()
        with self._lock:
            backlog = list(self._history)
            self._subscribers.append((loop, queue))
        return backlog, queue

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        with self._lock:
            self._subscribers = [
                (loop, q) for loop, q in self._subscribers if q is not queue
            ]


@dataclass
class SessionState:
    session: DialogSession
    hub: EventHub = field(default_factory=EventHub)
    turn_lock: threading.Lock = field(default_factory=threading.Lock)


class UtteranceIn(BaseModel):
    text: str


def _reply_fields(reply: Reply) -> dict[str, Any]:
    return {
        "kind": reply.kind,
        "text": reply.text,
        "question_about": reply.question_about,
        "learned": [sig.render() for sig in reply.learned],
        "steps": [step.render() for step in reply.steps],
        "error_kind": reply.error_kind,
    }


RETRYABLE_CLIENT_FAULTS = ("empty", "parse", "match", "depth")


def create_app(
    backend: CompletionBackend,
    library: TaskLibrary | None = None,
    cors_origins: tuple[str, ...] = (),
    clock: Callable[[], str] = _utc_now,
) -> FastAPI:
    shared_library = library if library is not None else seed_library()
    app = FastAPI(title="taskforge")
    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    sessions: dict[str, SessionState] = {}
    registry_lock = threading.Lock()
    revision = {"n": 0}

    def get_state(session_id: str) -> SessionState:
        with registry_lock:
            state = sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return state

    def session_view(session_id: str, state: SessionState) -> dict[str, Any]:
        return {
            "session_id": session_id,
            "phase": state.session.phase,
            "pending_question": state.session.pending_question(),
            "transcript": [
                {"speaker": speaker, "text": text}
                for speaker, text in state.session.transcript
            ],
        }

    @app.post("/v1/sessions")
    def create_session() -> dict[str, Any]:
        session_id = uuid.uuid4().hex[:12]
        state = SessionState(
            session=build_session(backend, library=shared_library, clock=clock)
        )
        with registry_lock:
            sessions[session_id] = state
        return session_view(session_id, state)

    @app.get("/v1/sessions/{session_id}")
    def read_session(session_id: str) -> dict[str, Any]:
        return session_view(session_id, get_state(session_id))

    @app.post("/v1/sessions/{session_id}/utterances")
    def submit_utterance(session_id: str, body: UtteranceIn) -> dict[str, Any]:
        state = get_state(session_id)
        if not state.turn_lock.acquire(blocking=False):
            raise HTTPException(
                status_code=409,
                detail="a turn is already in progress for this session",
            )
        try:
            state.hub.publish("utterance", text=body.text)
            reply = state.session.submit(body.text)
            fields = _reply_fields(reply)
            state.hub.publish("reply", **fields)
            if reply.learned:
                with registry_lock:
                    revision["n"] += 1
                    current_revision = revision["n"]
                    listeners = list(sessions.values())
                for listener in listeners:
                    listener.hub.publish(
                        "library_updated",
                        learned=[sig.render() for sig in reply.learned],
                        revision=current_revision,
                    )
            if reply.kind == "error":
                status = 422 if reply.error_kind in RETRYABLE_CLIENT_FAULTS else 502
                raise HTTPException(
                    status_code=status,
                    detail={"error_kind": reply.error_kind, "message": reply.text},
                )
            return {
                "reply": fields,
                "phase": state.session.phase,
                "pending_question": state.session.pending_question(),
            }
        finally:
            state.turn_lock.release()

    @app.websocket("/v1/sessions/{session_id}/events")
    async def events(websocket: WebSocket, session_id: str) -> None:
        with registry_lock:
            state = sessions.get(session_id)
        if state is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        backlog, queue = state.hub.subscribe()
        try:
            for event in backlog:
                await websocket.send_json(event)
            while True:
                await websocket.send_json(await queue.get())
        except WebSocketDisconnect:
            pass
        finally:
            state.hub.unsubscribe(queue)

    @app.get("/v1/library")
    def read_library() -> dict[str, Any]:
        with registry_lock:
            current_revision = revision["n"]
        return {
            "revision": current_revision,
            "library": library_to_doc(shared_library),
        }

    @app.get("/v1/library/{name}/{arity}/tree")
    def read_tree(name: str, arity: int, args: str = "") -> dict[str, Any]:
        try:
            symbol = canonicalize(name)
        except EmptyName as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if shared_library.lookup(symbol, arity) is None:
            raise HTTPException(
                status_code=404, detail=f"no task named {name}/{arity}"
            )
        arg_texts = [a.strip() for a in args.split(",") if a.strip()] if args else []
        if len(arg_texts) != arity:
            raise HTTPException(
                status_code=422,
                detail=f"{name}/{arity} needs {arity} args, got {len(arg_texts)}",
            )
        try:
            instance = PredicateInstance(
                symbol, tuple(Constant(canonicalize(a)) for a in arg_texts)
            )
        except EmptyName as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            tree = expand(shared_library, instance)
        except DepthExceeded as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return tree_to_json(tree)

    return app
