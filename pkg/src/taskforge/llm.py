"""Completion backends: remote HTTP, canned fixtures, and record/replay.

Every call site goes through ``CompletionBackend.complete(tag, prompt)``. The
(tag, prompt) pair is hashed into a stable fingerprint, which is what fixture
files and cassettes key on; runs that produce the same prompts replay without
any network access. Sampling is always temperature 0.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

API_KEY_ENV = "TASKFORGE_API_KEY"

BACKOFF_SCHEDULE = (1.0, 2.0, 4.0)


def fingerprint(tag: str, prompt: str) -> str:
    """Stable identity of one completion request."""
    h = hashlib.sha256()
    h.update(tag.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


class BackendError(Exception):
    """Base for completion-backend failures."""


class TransportError(BackendError):
    """The request never produced an HTTP response."""


class HttpStatusError(BackendError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"backend returned HTTP {status}: {detail[:200]}")
        self.status = status


class RateLimited(HttpStatusError):
    def __init__(self, retry_after: float | None, detail: str = ""):
        super().__init__(429, detail)
        self.retry_after = retry_after


class MalformedResponse(BackendError):
    """The HTTP body did not carry a completion where one was expected."""


class MissingApiKey(BackendError):
    def __init__(self) -> None:
        super().__init__(
            f"set the {API_KEY_ENV} environment variable to use the HTTP backend"
        )


class ReplayMiss(BackendError):
    """Replay was asked for a prompt the cassette has never seen."""

    def __init__(self, tag: str, prompt: str, fp: str):
        head = prompt.strip().splitlines()[-1] if prompt.strip() else ""
        super().__init__(
            f"no recorded completion for tag={tag!r} fingerprint={fp[:12]} "
            f"(prompt tail: {head[:80]!r})"
        )
        self.tag = tag
        self.fingerprint = fp


class RecordConflict(BackendError):
    """Recording produced two different responses for one fingerprint."""


class CompletionBackend(Protocol):
    def complete(self, tag: str, prompt: str) -> str:
        """Return the model completion for ``prompt``. ``tag`` names the call site."""
        ...


Transport = Callable[..., Any]


def _requests_transport(
    url: str, headers: dict[str, str], payload: dict[str, Any], timeout: float
) -> Any:
    import requests

    try:
        return requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc


@dataclass
class HttpConfig:
    base_url: str
    model: str
    api_style: str = "chat"  # "chat" or "completion"
    max_tokens: int = 256
    timeout: float = 30.0
    stop: tuple[str, ...] = ()


class HttpBackend:
    """OpenAI-compatible completion endpoint.

    The API key comes from the TASKFORGE_API_KEY environment variable only;
    it is never accepted as an argument so it cannot leak into configs,
    command lines, or recordings. Transient failures (429, 5xx, transport
    errors) are retried up to three times with 1s/2s/4s backoff; a 429 with a
    Retry-After header sleeps that long instead.
    """

    def __init__(
        self,
        config: HttpConfig,
        transport: Transport = _requests_transport,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if config.api_style not in ("chat", "completion"):
            raise ValueError(f"unknown api_style {config.api_style!r}")
        self.config = config
        self._transport = transport
        self._sleep = sleep

    def _api_key(self) -> str:
        key = os.environ.get(API_KEY_ENV, "").strip()
        if not key:
            raise MissingApiKey()
        return key

    def _build_request(self, prompt: str) -> tuple[str, dict[str, Any]]:
        cfg = self.config
        if cfg.api_style == "chat":
            url = cfg.base_url.rstrip("/") + "/chat/completions"
            payload: dict[str, Any] = {
                "model": cfg.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
                "max_tokens": cfg.max_tokens,
            }
        else:
            url = cfg.base_url.rstrip("/") + "/completions"
            payload = {
                "model": cfg.model,
                "prompt": prompt,
                "temperature": 0,
                "max_tokens": cfg.max_tokens,
            }
        if cfg.stop:
            payload["stop"] = list(cfg.stop)
        return url, payload

    def _extract(self, data: Any) -> str:
        try:
            choice = data["choices"][0]
            if self.config.api_style == "chat":
                text = choice["message"]["content"]
            else:
                text = choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("completion text is not a string")
        return text.rstrip()

    def _once(self, prompt: str) -> str:
        url, payload = self._build_request(prompt)
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        response = self._transport(url, headers, payload, self.config.timeout)
        status = getattr(response, "status_code", None)
        if status == 429:
            retry_after = None
            raw = response.headers.get("Retry-After") if response.headers else None
            if raw is not None:
                try:
                    retry_after = float(raw)
                except ValueError:
                    retry_after = None
            raise RateLimited(retry_after)
        if status is None or status >= 500:
            raise HttpStatusError(status or 0, "server error")
        if status != 200:
            body = ""
            try:
                body = response.text
            except Exception:
                pass
            raise HttpStatusError(status, body)
        try:
            data = response.json()
        except ValueError as exc:
            raise MalformedResponse("response body is not JSON") from exc
        return self._extract(data)

    def complete(self, tag: str, prompt: str) -> str:
        last: BackendError | None = None
        for attempt, pause in enumerate(BACKOFF_SCHEDULE + (None,)):
            try:
                return self._once(prompt)
            except (RateLimited, TransportError) as exc:
                last = exc
            except HttpStatusError as exc:
                if exc.status < 500:
                    raise
                last = exc
            if pause is None:
                break
            if isinstance(last, RateLimited) and last.retry_after is not None:
                self._sleep(last.retry_after)
            else:
                self._sleep(pause)
        assert last is not None
        raise last


class FixtureBackend:
    """Deterministic canned completions, keyed by fingerprint."""

    def __init__(self, responses: dict[str, str]):
        self._responses = dict(responses)

    def complete(self, tag: str, prompt: str) -> str:
        fp = fingerprint(tag, prompt)
        if fp not in self._responses:
            raise ReplayMiss(tag, prompt, fp)
        return self._responses[fp].rstrip()


_CASSETTE_VERSION = 1


@dataclass
class _Entry:
    fingerprint: str
    tag: str
    prompt: str
    response: str


class CassetteBackend:
    """Record completions from a live backend, or replay a saved cassette.

    In record mode every (tag, prompt) is forwarded to the inner backend and
    the response stored; an identical repeat is served from the recording, a
    repeat with a different live answer raises RecordConflict. In replay mode
    there is no inner backend and unseen prompts raise ReplayMiss.
    """

    def __init__(self, mode: str, inner: CompletionBackend | None = None):
        if mode not in ("record", "replay"):
            raise ValueError(f"unknown cassette mode {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner backend")
        self.mode = mode
        self._inner = inner
        self._entries: dict[str, _Entry] = {}

    @classmethod
    def replay_from(cls, path: str | Path) -> "CassetteBackend":
        cassette = cls("replay")
        cassette.load(path)
        return cassette

    def complete(self, tag: str, prompt: str) -> str:
        fp = fingerprint(tag, prompt)
        hit = self._entries.get(fp)
        if hit is not None:
            return hit.response
        if self.mode == "replay":
            raise ReplayMiss(tag, prompt, fp)
        assert self._inner is not None
        response = self._inner.complete(tag, prompt).rstrip()
        self._entries[fp] = _Entry(fp, tag, prompt, response)
        return response

    def record(self, tag: str, prompt: str, response: str) -> None:
        """Insert an entry directly (used by fixture-building scripts)."""
        fp = fingerprint(tag, prompt)
        hit = self._entries.get(fp)
        if hit is not None:
            if hit.response != response.rstrip():
                raise RecordConflict(
                    f"fingerprint {fp[:12]} already recorded with a different response"
                )
            return
        self._entries[fp] = _Entry(fp, tag, prompt, response.rstrip())

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path: str | Path) -> None:
        entries = sorted(self._entries.values(), key=lambda e: e.fingerprint)
        doc = {
            "version": _CASSETTE_VERSION,
            "entries": [
                {
                    "fingerprint": e.fingerprint,
                    "tag": e.tag,
                    "prompt": e.prompt,
                    "response": e.response,
                }
                for e in entries
            ],
        }
        Path(path).write_text(
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    def load(self, path: str | Path) -> None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != _CASSETTE_VERSION:
            raise BackendError(
                f"cassette {path} has version {doc.get('version')!r}, "
                f"expected {_CASSETTE_VERSION}"
            )
        for raw in doc["entries"]:
            entry = _Entry(
                raw["fingerprint"], raw["tag"], raw["prompt"], raw["response"]
            )
            expected = fingerprint(entry.tag, entry.prompt)
            if expected != entry.fingerprint:
                raise BackendError(
                    f"cassette {path}: entry fingerprint {entry.fingerprint[:12]} "
                    "does not match its tag and prompt"
                )
            self._entries[entry.fingerprint] = entry


class CallCountingBackend:
    """Test helper: forwards to an inner backend and counts calls per tag."""

    def __init__(self, inner: CompletionBackend):
        self._inner = inner
        self.calls: list[tuple[str, str]] = []

    def complete(self, tag: str, prompt: str) -> str:
        self.calls.append((tag, prompt))
        return self._inner.complete(tag, prompt)

    def count(self, tag: str | None = None) -> int:
        if tag is None:
            return len(self.calls)
        return sum(1 for t, _ in self.calls if t == tag)
