"""Command line front: teach, replay, eval, tree, serve.

Exit codes are part of the contract so scripts can tell failure classes
apart: 1 for usage problems, 2 for file and schema problems, 3 when a run
diverges from what a script or reference library expects, 4 when the
completion backend fails.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable

from .learning import build_session, expectation_problem
from .llm import (
    BackendError,
    CassetteBackend,
    CompletionBackend,
    FixtureBackend,
    HttpBackend,
    HttpConfig,
)
from .model import DepthExceeded, ModelError, PlanTree, UnknownSignature, expand, ground
from .store import (
    SchemaError,
    diff_libraries,
    dump_library,
    load_library,
    load_script,
    save_library,
    seed_library,
    tree_to_json,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_MISMATCH = 3
EXIT_BACKEND = 4

BACKEND_FORMS = "live, fixture:PATH, replay:PATH, or record:PATH"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit 1 instead of 2."""

    def error(self, message: str) -> Any:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _live_backend() -> HttpBackend:
    model = os.environ.get("TASKFORGE_MODEL")
    if not model:
        raise CliError(
            EXIT_USAGE,
            "the live backend needs TASKFORGE_MODEL set "
            "(and TASKFORGE_API_KEY for authentication)",
        )
    style = os.environ.get("TASKFORGE_API_STYLE", "chat")
    if style not in ("chat", "completion"):
        raise CliError(EXIT_USAGE, "TASKFORGE_API_STYLE must be chat or completion")
    config = HttpConfig(
        base_url=os.environ.get("TASKFORGE_BASE_URL", "https://api.openai.com/v1"),
        model=model,
        api_style=style,
    )
    return HttpBackend(config)


def _open_cassette(path: str | Path) -> CassetteBackend:
    try:
        return CassetteBackend.replay_from(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"no recorded completions at {path}") from exc
    except BackendError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CliError(EXIT_IO, f"cassette {path} is malformed: {exc}") from exc


def _open_fixture(path: str | Path) -> FixtureBackend:
    doc = _load_json(path, "fixture file")
    if not isinstance(doc, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in doc.items()
    ):
        raise CliError(
            EXIT_IO, f"fixture file {path} must map fingerprints to completions"
        )
    return FixtureBackend(doc)


def open_backend(spec: str) -> tuple[CompletionBackend, Callable[[], None] | None]:
    """Build a backend from a --backend value.

    Returns the backend and, for record mode, a finalizer that writes the
    cassette; callers invoke it only after a clean run.
    """
    if spec == "live":
        return _live_backend(), None
    kind, sep, path = spec.partition(":")
    if not sep or not path:
        raise CliError(EXIT_USAGE, f"--backend {spec!r} is not one of {BACKEND_FORMS}")
    if kind == "fixture":
        return _open_fixture(path), None
    if kind == "replay":
        return _open_cassette(path), None
    if kind == "record":
        cassette = CassetteBackend("record", inner=_live_backend())
        if Path(path).exists():
            try:
                cassette.load(path)
            except BackendError as exc:
                raise CliError(EXIT_IO, str(exc)) from exc
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CliError(EXIT_IO, f"cassette {path} is malformed: {exc}") from exc
        return cassette, lambda: cassette.save(path)
    raise CliError(EXIT_USAGE, f"--backend {spec!r} is not one of {BACKEND_FORMS}")


def backend_from_config(doc: dict[str, Any]) -> CompletionBackend:
    kind = doc.get("kind")
    if kind == "http":
        try:
            config = HttpConfig(
                base_url=doc["base_url"],
                model=doc["model"],
                api_style=doc.get("api_style", "chat"),
                max_tokens=int(doc.get("max_tokens", 256)),
                timeout=float(doc.get("timeout", 30.0)),
                stop=tuple(doc.get("stop", ())),
            )
        except KeyError as exc:
            raise CliError(EXIT_IO, f"backend config is missing {exc}") from exc
        return HttpBackend(config)
    if kind in ("replay", "fixture"):
        path = doc.get("path")
        if not path:
            raise CliError(EXIT_IO, f"{kind} backend config needs a path")
        return _open_cassette(path) if kind == "replay" else _open_fixture(path)
    raise CliError(
        EXIT_IO, f"unknown backend kind {kind!r}; use http, replay, or fixture"
    )


def _load_json(path: str | Path, what: str) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"{what} {path} is not valid JSON: {exc}") from exc


def _load_library_arg(path: str | None):
    if path is None:
        return seed_library()
    try:
        return load_library(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"library not found: {path}") from exc
    except SchemaError as exc:
        raise CliError(EXIT_IO, f"library {path}: {exc}") from exc


def _script_turns(path: str) -> list[dict[str, Any]]:
    try:
        return load_script(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"script not found: {path}") from exc


def _default_fixtures(script_path: str) -> Path:
    return Path(script_path).with_suffix(".fixtures.json")


def _print_reply(index: int, turn: dict[str, Any], reply) -> None:
    print(f"turn {index}: {turn['utterance']}")
    print(f"  -> {reply.kind}: {reply.text}")


def _drive_script(session, turns, strict: bool, verbose: bool):
    """Run script turns, enforcing expectations; non-strict mode only warns."""
    replies = []
    problems: list[str] = []
    for index, turn in enumerate(turns, start=1):
        reply = session.submit(turn["utterance"])
        replies.append(reply)
        if verbose:
            _print_reply(index, turn, reply)
        problem = expectation_problem(turn, reply)
        if problem is None:
            continue
        if reply.kind == "error" and reply.error_kind == "backend":
            raise CliError(EXIT_BACKEND, f"turn {index}: {problem}")
        if strict:
            raise CliError(EXIT_MISMATCH, f"turn {index}: {problem}")
        problems.append(f"turn {index}: {problem}")
        print(f"warning: turn {index}: {problem}", file=sys.stderr)
    return replies, problems


def cmd_teach(args: argparse.Namespace) -> int:
    backend, finalize = open_backend(args.backend)
    library = _load_library_arg(args.library)
    session = build_session(backend, library=library)
    source = open(args.input, encoding="utf-8") if args.input else sys.stdin
    try:
        if source is sys.stdin and sys.stdin.isatty():
            print("type instructions, one per line; end with Ctrl-D", file=sys.stderr)
        for line in source:
            text = line.strip()
            if not text:
                continue
            reply = session.submit(text)
            print(f"you:   {text}")
            print(f"robot: {reply.text}")
            if reply.kind == "error" and reply.error_kind == "backend":
                raise CliError(EXIT_BACKEND, reply.text)
    finally:
        if source is not sys.stdin:
            source.close()
    destination = args.save or args.library or "library.json"
    save_library(
        session.library, destination, include_provenance=not args.no_provenance
    )
    print(f"library saved to {destination}", file=sys.stderr)
    if finalize is not None:
        finalize()
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    spec = args.backend or f"replay:{_default_fixtures(args.script)}"
    turns = _script_turns(args.script)
    backend, finalize = open_backend(spec)
    session = build_session(backend, clock=lambda: "replay")
    replies, problems = _drive_script(
        session, turns, strict=args.strict, verbose=not args.quiet
    )
    questions = sum(1 for r in replies if r.kind == "question")
    print(
        f"{len(replies)} turns, {questions} questions, "
        f"{len(session.library)} known actions"
    )
    if problems:
        print(f"{len(problems)} expectation mismatch(es) tolerated", file=sys.stderr)
    if args.out:
        save_library(
            session.library, args.out, include_provenance=not args.no_provenance
        )
        print(f"library saved to {args.out}")
    if finalize is not None:
        finalize()
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    spec = args.backend or f"replay:{_default_fixtures(args.script)}"
    turns = _script_turns(args.script)
    backend, finalize = open_backend(spec)

    def one_run():
        session = build_session(backend, clock=lambda: "replay")
        replies, _ = _drive_script(session, turns, strict=True, verbose=False)
        return session, replies

    first, replies = one_run()
    print(f"script expectations: ok ({len(replies)} turns)")

    second, _ = one_run()
    if dump_library(first.library) != dump_library(second.library):
        print("determinism: FAILED (two runs disagree)")
        raise CliError(EXIT_MISMATCH, "two replays produced different libraries")
    print("determinism: ok (two runs, byte-identical libraries)")

    try:
        reference = load_library(args.reference)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"reference not found: {args.reference}") from exc
    except SchemaError as exc:
        raise CliError(EXIT_IO, f"reference {args.reference}: {exc}") from exc
    differences = diff_libraries(first.library, reference)
    if differences:
        print(f"reference match: FAILED ({len(differences)} differences)")
        for line in differences:
            print(f"  {line}")
        raise CliError(
            EXIT_MISMATCH,
            f"library differs from {args.reference} in {len(differences)} places",
        )
    print(f"reference match: ok ({args.reference})")
    if finalize is not None:
        finalize()
    return EXIT_OK


def _render_ascii(tree: PlanTree, depth: int = 0) -> list[str]:
    lines = [f"{'  ' * depth}{tree.root.render()}"]
    for child in tree.children:
        lines.extend(_render_ascii(child, depth + 1))
    return lines


def _render_dot(tree: PlanTree) -> str:
    lines = ["digraph plan {"]
    counter = {"n": 0}

    def walk(node: PlanTree) -> str:
        ident = f"n{counter['n']}"
        counter["n"] += 1
        label = node.root.render().replace('"', '\\"')
        lines.append(f'  {ident} [label="{label}"];')
        for child in node.children:
            child_id = walk(child)
            lines.append(f"  {ident} -> {child_id};")
        return ident

    walk(tree)
    lines.append("}")
    return "\n".join(lines)


def _parse_task_flag(raw: str) -> tuple[str, int]:
    name, sep, arity_text = raw.rpartition("/")
    if not sep or not name.strip():
        raise CliError(EXIT_USAGE, f"--task wants NAME/ARITY, got {raw!r}")
    try:
        arity = int(arity_text)
    except ValueError as exc:
        raise CliError(
            EXIT_USAGE, f"--task arity must be an integer, got {raw!r}"
        ) from exc
    if arity < 0:
        raise CliError(EXIT_USAGE, "--task arity cannot be negative")
    return name.strip(), arity


def _parse_args_flag(raw: str | None, arity: int) -> tuple[str, ...]:
    if raw is None or raw.strip() == "":
        values: tuple[str, ...] = ()
    else:
        values = tuple(chunk.strip() for chunk in raw.split(","))
        if any(not value for value in values):
            raise CliError(EXIT_USAGE, "--args has an empty slot")
    if len(values) != arity:
        raise CliError(
            EXIT_USAGE, f"task arity is {arity} but --args supplies {len(values)}"
        )
    return values


def cmd_tree(args: argparse.Namespace) -> int:
    name, arity = _parse_task_flag(args.task)
    constants = _parse_args_flag(args.args, arity)
    library = _load_library_arg(args.library)
    try:
        tree = expand(library, ground(name, *constants))
    except UnknownSignature as exc:
        raise CliError(EXIT_MISMATCH, str(exc)) from exc
    except DepthExceeded as exc:
        raise CliError(EXIT_MISMATCH, str(exc)) from exc
    if args.format == "ascii":
        print("\n".join(_render_ascii(tree)))
    elif args.format == "dot":
        print(_render_dot(tree))
    else:
        print(json.dumps(tree_to_json(tree), indent=2, ensure_ascii=False))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    config = _load_json(args.config, "serve config")
    backend_doc = config.get("backend")
    if not isinstance(backend_doc, dict):
        raise CliError(EXIT_IO, "serve config needs a backend object")
    backend = backend_from_config(backend_doc)
    library = _load_library_arg(config.get("library"))

    import uvicorn

    from .service import create_app

    app = create_app(
        backend,
        library=library,
        cors_origins=tuple(config.get("cors_origins", ())),
    )
    uvicorn.run(
        app,
        host=config.get("host", "127.0.0.1"),
        port=int(config.get("port", 8756)),
        log_level="info",
    )
    return EXIT_OK


def build_arg_parser() -> _Parser:
    parser = _Parser(prog="taskforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    teach = sub.add_parser("teach", help="interactive teaching over stdin")
    teach.add_argument(
        "--library", help="starting library file (default: innate primitives)"
    )
    teach.add_argument(
        "--backend", default="live", metavar="SPEC", help=BACKEND_FORMS
    )
    teach.add_argument(
        "--save", help="write the library here (default: the --library path)"
    )
    teach.add_argument("--input", help="read utterances from a file instead of stdin")
    teach.add_argument("--no-provenance", action="store_true")
    teach.set_defaults(func=cmd_teach)

    replay = sub.add_parser("replay", help="run a teaching script against recordings")
    replay.add_argument("--script", required=True)
    replay.add_argument(
        "--backend",
        metavar="SPEC",
        help=f"{BACKEND_FORMS} (default: replay:<script>.fixtures.json)",
    )
    replay.add_argument("--out", help="write the resulting library here")
    replay.add_argument(
        "--strict", action="store_true", help="exit 3 on any expectation mismatch"
    )
    replay.add_argument("--no-provenance", action="store_true")
    replay.add_argument("--quiet", action="store_true")
    replay.set_defaults(func=cmd_replay)

    evaluate = sub.add_parser(
        "eval", help="replay twice and compare against a reference library"
    )
    evaluate.add_argument("--script", required=True)
    evaluate.add_argument("--reference", required=True)
    evaluate.add_argument("--backend", metavar="SPEC")
    evaluate.set_defaults(func=cmd_eval)

    tree = sub.add_parser("tree", help="expand one task instance to a plan tree")
    tree.add_argument("--library", default="library.json")
    tree.add_argument("--task", required=True, metavar="NAME/ARITY")
    tree.add_argument("--args", metavar="a,b", help="comma-separated constants")
    tree.add_argument("--format", choices=("ascii", "dot", "json"), default="ascii")
    tree.set_defaults(func=cmd_tree)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", required=True)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"taskforge: {exc}", file=sys.stderr)
        return exc.code
    except SchemaError as exc:
        print(f"taskforge: {exc}", file=sys.stderr)
        return EXIT_IO
    except BackendError as exc:
        print(f"taskforge: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ModelError as exc:
        print(f"taskforge: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
