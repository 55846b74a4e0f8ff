"""HTTP service: session lifecycle, event streams, shared library, faults."""
from __future__ import annotations

import threading
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from taskforge.llm import CassetteBackend, TransportError
from taskforge.service import create_app
from taskforge.store import load_script

REPO = Path(__file__).resolve().parent.parent
SCRIPT = REPO / "scripts" / "table1.json"
FIXTURES = REPO / "scripts" / "table1.fixtures.json"


def teaching_turns() -> list[str]:
    return [turn["utterance"] for turn in load_script(SCRIPT)]


class TableBackend:
    """Context-insensitive stand-in: answers by utterance, not full prompt."""

    PARSES = {
        "Clean the pepper into the cupboard.": "clean(pepper, cupboard)",
        "Put away the pepper.": "putAway(pepper)",
        "Move the pepper to the cupboard.": "move(pepper, cupboard)",
        "Pick up the pepper and put it in the cupboard.": (
            "pickUp(pepper)\nput(pepper, cupboard)"
        ),
        (
            "Open your hand, move your hand to the pepper, close your hand, "
            "then pull your hand back."
        ): "openHand()\nmoveHand(pepper)\ncloseHand()\npullHandBack()",
        (
            "Move to the cupboard, open your hand, pull your hand back, "
            "and close your hand."
        ): "move(cupboard)\nopenHand()\npullHandBack()\ncloseHand()",
        "Put the cup on the counter.": "put(cup, counter)",
    }
    MATCHES = {"putAway": "NONE", "pickUp": "NONE", "pullHandBack": "resetHandPosition"}

    def complete(self, tag: str, prompt: str) -> str:
        if tag == "parse":
            for utterance, steps in self.PARSES.items():
                if prompt.rstrip().endswith(f"Instruction: {utterance}\nSteps:"):
                    return steps
            raise AssertionError(f"no canned parse for prompt tail {prompt[-120:]!r}")
        name = prompt.split("Unknown action: ", 1)[1].split("(", 1)[0].strip()
        return self.MATCHES[name]


@pytest.fixture
def client() -> TestClient:
    backend = CassetteBackend.replay_from(FIXTURES)
    app = create_app(backend, clock=lambda: "replay")
    return TestClient(app)


def make_session(client: TestClient) -> str:
    response = client.post("/v1/sessions")
    assert response.status_code == 200
    body = response.json()
    assert body["phase"] == "awaiting_command"
    assert body["pending_question"] is None
    return body["session_id"]


def submit(client: TestClient, sid: str, text: str):
    return client.post(f"/v1/sessions/{sid}/utterances", json={"text": text})


class TestSessionLifecycle:
    def test_create_then_read(self, client):
        sid = make_session(client)
        got = client.get(f"/v1/sessions/{sid}")
        assert got.status_code == 200
        assert got.json()["transcript"] == []

    def test_unknown_session_is_404(self, client):
        assert client.get("/v1/sessions/nope").status_code == 404
        assert submit(client, "nope", "Hello.").status_code == 404

    def test_full_teaching_over_http(self, client):
        sid = make_session(client)
        turns = teaching_turns()
        kinds = []
        for text in turns[:6]:
            response = submit(client, sid, text)
            assert response.status_code == 200
            kinds.append(response.json()["reply"]["kind"])
        assert kinds == ["question"] * 5 + ["task_learned"]

        final = client.get(f"/v1/sessions/{sid}").json()
        assert final["phase"] == "awaiting_command"

        library = client.get("/v1/library").json()
        assert library["revision"] == 1
        learned = [entry["name"] for entry in library["library"]["learned"]]
        assert learned == ["pickUp", "put", "move", "putAway", "clean"]

    def test_question_phase_is_reported(self, client):
        sid = make_session(client)
        response = submit(client, sid, teaching_turns()[0])
        body = response.json()
        assert body["phase"] == "awaiting_definition"
        assert body["pending_question"] == "What does clean mean?"
        assert body["reply"]["question_about"] == "clean"

    def test_sessions_share_the_library(self):
        client = TestClient(create_app(TableBackend(), clock=lambda: "replay"))
        sid_a = make_session(client)
        for text in teaching_turns()[:6]:
            assert submit(client, sid_a, text).status_code == 200
        sid_b = make_session(client)
        response = submit(client, sid_b, "Put the cup on the counter.")
        assert response.status_code == 200
        assert response.json()["reply"]["kind"] == "steps_accepted"

    def test_blank_utterance_is_422(self, client):
        sid = make_session(client)
        response = submit(client, sid, "   ")
        assert response.status_code == 422
        assert response.json()["detail"]["error_kind"] == "empty"

    def test_missing_text_field_is_422(self, client):
        sid = make_session(client)
        response = client.post(f"/v1/sessions/{sid}/utterances", json={})
        assert response.status_code == 422


class TestEventStream:
    def test_backlog_then_live_without_gaps(self, client):
        sid = make_session(client)
        turns = teaching_turns()
        submit(client, sid, turns[0])
        submit(client, sid, turns[1])
        with client.websocket_connect(f"/v1/sessions/{sid}/events") as ws:
            backlog = [ws.receive_json() for _ in range(4)]
            assert [e["seq"] for e in backlog] == [1, 2, 3, 4]
            assert [e["type"] for e in backlog] == [
                "utterance",
                "reply",
                "utterance",
                "reply",
            ]
            assert backlog[1]["text"] == "What does clean mean?"

            submit(client, sid, turns[2])
            live = [ws.receive_json() for _ in range(2)]
            assert [e["seq"] for e in live] == [5, 6]
            assert live[1]["question_about"] == "move"

    def test_learning_turn_emits_library_updated(self, client):
        sid = make_session(client)
        turns = teaching_turns()
        for text in turns[:5]:
            submit(client, sid, text)
        with client.websocket_connect(f"/v1/sessions/{sid}/events") as ws:
            for _ in range(10):
                ws.receive_json()
            submit(client, sid, turns[5])
            events = [ws.receive_json() for _ in range(3)]
            assert [e["type"] for e in events] == [
                "utterance",
                "reply",
                "library_updated",
            ]
            assert events[2]["learned"] == [
                "pickUp/1",
                "put/2",
                "move/2",
                "putAway/1",
                "clean/2",
            ]
            assert events[2]["revision"] == 1

    def test_broadcast_reaches_other_sessions(self, client):
        observer = make_session(client)
        teacher = make_session(client)
        with client.websocket_connect(f"/v1/sessions/{observer}/events") as ws:
            for text in teaching_turns()[:6]:
                submit(client, teacher, text)
            event = ws.receive_json()
            assert event["type"] == "library_updated"
            assert event["seq"] == 1

    def test_unknown_session_stream_is_refused(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/v1/sessions/nope/events") as ws:
                ws.receive_json()


class SwitchableBackend:
    """Delegates to a cassette until told to fail."""

    def __init__(self, inner):
        self.inner = inner
        self.failing = False

    def complete(self, tag: str, prompt: str) -> str:
        if self.failing:
            raise TransportError("backend went away")
        return self.inner.complete(tag, prompt)


class TestFaults:
    def test_backend_failure_is_502_and_rolls_back(self):
        backend = SwitchableBackend(CassetteBackend.replay_from(FIXTURES))
        client = TestClient(create_app(backend, clock=lambda: "replay"))
        sid = make_session(client)
        turns = teaching_turns()
        for text in turns[:3]:
            assert submit(client, sid, text).status_code == 200
        before = client.get(f"/v1/sessions/{sid}").json()

        backend.failing = True
        failed = submit(client, sid, turns[3])
        assert failed.status_code == 502
        assert failed.json()["detail"]["error_kind"] == "backend"

        backend.failing = False
        after = client.get(f"/v1/sessions/{sid}").json()
        assert after["phase"] == before["phase"]
        assert after["pending_question"] == before["pending_question"]
        assert client.get("/v1/library").json()["library"]["learned"] == []

        for text in turns[3:6]:
            assert submit(client, sid, text).status_code == 200
        assert client.get("/v1/library").json()["revision"] == 1

    def test_failed_turn_still_appears_on_the_stream(self):
        backend = SwitchableBackend(CassetteBackend.replay_from(FIXTURES))
        client = TestClient(create_app(backend, clock=lambda: "replay"))
        sid = make_session(client)
        backend.failing = True
        submit(client, sid, "Clean the pepper into the cupboard.")
        with client.websocket_connect(f"/v1/sessions/{sid}/events") as ws:
            first = ws.receive_json()
            second = ws.receive_json()
            assert first["type"] == "utterance"
            assert second["type"] == "reply"
            assert second["kind"] == "error"
            assert second["error_kind"] == "backend"
            assert [first["seq"], second["seq"]] == [1, 2]


class GatedBackend:
    """Blocks only the first completion; later calls answer immediately."""

    def __init__(self):
        self.started = threading.Event()
        self.release = threading.Event()
        self._lock = threading.Lock()
        self._first = True

    def complete(self, tag: str, prompt: str) -> str:
        with self._lock:
            first = self._first
            self._first = False
        if first:
            self.started.set()
            assert self.release.wait(timeout=10), "gate never released"
            return "openHand()"
        return "closeHand()"


class TestConcurrency:
    def test_second_turn_while_first_runs_is_409(self):
        backend = GatedBackend()
        app = create_app(backend, clock=lambda: "replay")
        first_client = TestClient(app)
        second_client = TestClient(app)
        sid = make_session(first_client)

        outcome: dict[str, int] = {}

        def slow_turn():
            outcome["status"] = submit(
                first_client, sid, "Open your hand."
            ).status_code

        worker = threading.Thread(target=slow_turn)
        worker.start()
        try:
            assert backend.started.wait(timeout=10)
            rejected = submit(second_client, sid, "Close your hand.")
            assert rejected.status_code == 409
        finally:
            backend.release.set()
            worker.join(timeout=10)
        assert outcome["status"] == 200

        # the rejected utterance never entered the event stream
        with first_client.websocket_connect(f"/v1/sessions/{sid}/events") as ws:
            events = [ws.receive_json() for _ in range(2)]
            assert [e["type"] for e in events] == ["utterance", "reply"]
            assert events[0]["text"] == "Open your hand."

    def test_different_sessions_can_overlap(self):
        backend = GatedBackend()
        app = create_app(backend, clock=lambda: "replay")
        first_client = TestClient(app)
        second_client = TestClient(app)
        sid_a = make_session(first_client)
        sid_b = make_session(second_client)

        outcome: dict[str, int] = {}

        def slow_turn():
            outcome["status"] = submit(
                first_client, sid_a, "Open your hand."
            ).status_code

        worker = threading.Thread(target=slow_turn)
        worker.start()
        try:
            assert backend.started.wait(timeout=10)
            response = submit(second_client, sid_b, "Close your hand.")
            assert response.status_code != 409
        finally:
            backend.release.set()
            worker.join(timeout=10)
        assert outcome["status"] == 200


class TestTreeEndpoint:
    def taught_client(self, client) -> TestClient:
        sid = make_session(client)
        for text in teaching_turns()[:6]:
            submit(client, sid, text)
        return client

    def test_full_expansion(self, client):
        self.taught_client(client)
        response = client.get("/v1/library/clean/2/tree", params={"args": "pepper,cupboard"})
        assert response.status_code == 200
        tree = response.json()
        assert tree["action"] == "clean(pepper, cupboard)"
        assert not tree["primitive"]

        def leaves(node):
            if not node["children"]:
                return [node["action"]]
            out = []
            for child in node["children"]:
                out.extend(leaves(child))
            return out

        assert leaves(tree) == [
            "openHand()",
            "moveHand(pepper)",
            "closeHand()",
            "resetHandPosition()",
            "move(cupboard)",
            "openHand()",
            "resetHandPosition()",
            "closeHand()",
        ]

    def test_canonical_name_lookup(self, client):
        self.taught_client(client)
        response = client.get("/v1/library/pick_up/1/tree", params={"args": "cup"})
        assert response.status_code == 200
        assert response.json()["children"][1]["action"] == "moveHand(cup)"

    def test_unknown_task_is_404(self, client):
        assert client.get("/v1/library/fly/0/tree").status_code == 404

    def test_wrong_argument_count_is_422(self, client):
        self.taught_client(client)
        response = client.get("/v1/library/clean/2/tree", params={"args": "pepper"})
        assert response.status_code == 422

    def test_primitive_tree_is_a_leaf(self, client):
        response = client.get("/v1/library/openHand/0/tree")
        assert response.status_code == 200
        assert response.json() == {
            "action": "openHand()",
            "name": "openHand",
            "args": [],
            "primitive": True,
            "children": [],
        }
