"""Library and script files: canonical JSON in, validated structures out.

The on-disk library format is versioned and field-ordered so that saving the
same library always produces the same bytes: two-space indent, LF line ends,
a single trailing newline, and no key reordering. Loading is strict; every
schema complaint names the exact field it came from.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .model import (
    Constant,
    DuplicateSignature,
    PlanTree,
    PredicateInstance,
    Provenance,
    Signature,
    TaskDefinition,
    TaskLibrary,
    Term,
    Variable,
    canonicalize,
)

LIBRARY_FORMAT = "taskforge-library"
SCRIPT_FORMAT = "taskforge-script"
FORMAT_VERSION = 1

REPLY_KINDS = ("question", "task_learned", "steps_accepted")


class SchemaError(Exception):
    """A document failed validation; the message names the offending field."""

    def __init__(self, locus: str, problem: str):
        super().__init__(f"{locus}: {problem}")
        self.locus = locus


def canonical_json(doc: Any) -> str:
    """The one serialization used for every file this package writes."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _expect(value: Any, kind: type, locus: str) -> Any:
    if not isinstance(value, kind):
        raise SchemaError(locus, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _expect_key(obj: dict, key: str, kind: type, locus: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{locus}.{key}", "missing")
    return _expect(obj[key], kind, f"{locus}.{key}")


def _term_to_json(term: Term) -> dict[str, Any]:
    if isinstance(term, Variable):
        return {"var": term.index}
    return {"const": term.value.display}


def _term_from_json(raw: Any, locus: str) -> Term:
    obj = _expect(raw, dict, locus)
    if set(obj.keys()) == {"var"}:
        index = _expect(obj["var"], int, f"{locus}.var")
        if isinstance(obj["var"], bool) or index < 0:
            raise SchemaError(f"{locus}.var", "expected a non-negative integer")
        return Variable(index)
    if set(obj.keys()) == {"const"}:
        text = _expect(obj["const"], str, f"{locus}.const")
        return Constant(canonicalize(text))
    raise SchemaError(locus, 'expected {"const": name} or {"var": index}')


def step_to_json(step: PredicateInstance) -> dict[str, Any]:
    return {
        "name": step.name.display,
        "args": [_term_to_json(t) for t in step.args],
    }


def step_from_json(raw: Any, locus: str) -> PredicateInstance:
    obj = _expect(raw, dict, locus)
    name = _expect_key(obj, "name", str, locus)
    args_raw = _expect_key(obj, "args", list, locus)
    args = tuple(
        _term_from_json(a, f"{locus}.args[{i}]") for i, a in enumerate(args_raw)
    )
    return PredicateInstance(canonicalize(name), args)


def _definition_to_json(d: TaskDefinition, include_provenance: bool) -> dict[str, Any]:
    entry: dict[str, Any] = {
        "name": d.signature.name.display,
        "arity": d.signature.arity,
        "params": list(d.params),
    }
    if d.body is not None:
        entry["body"] = [step_to_json(s) for s in d.body]
        if include_provenance and d.provenance is not None:
            entry["provenance"] = {
                "utterance": d.provenance.utterance,
                "timestamp": d.provenance.timestamp,
            }
        else:
            entry["provenance"] = None
    return entry


def _definition_from_json(
    raw: Any, locus: str, learned: bool
) -> TaskDefinition:
    obj = _expect(raw, dict, locus)
    name = _expect_key(obj, "name", str, locus)
    arity = _expect_key(obj, "arity", int, locus)
    params_raw = _expect_key(obj, "params", list, locus)
    params = tuple(
        _expect(p, str, f"{locus}.params[{i}]") for i, p in enumerate(params_raw)
    )
    if len(params) != arity:
        raise SchemaError(f"{locus}.params", f"{len(params)} params for arity {arity}")

    body: tuple[PredicateInstance, ...] | None = None
    provenance: Provenance | None = None
    if learned:
        body_raw = _expect_key(obj, "body", list, locus)
        body = tuple(
            step_from_json(s, f"{locus}.body[{i}]") for i, s in enumerate(body_raw)
        )
        prov_raw = obj.get("provenance")
        if prov_raw is not None:
            prov = _expect(prov_raw, dict, f"{locus}.provenance")
            provenance = Provenance(
                utterance=_expect_key(prov, "utterance", str, f"{locus}.provenance"),
                timestamp=_expect_key(prov, "timestamp", str, f"{locus}.provenance"),
            )
    elif "body" in obj and obj["body"] is not None:
        raise SchemaError(f"{locus}.body", "primitives have no body")

    try:
        return TaskDefinition(
            signature=Signature(canonicalize(name), arity),
            params=params,
            body=body,
            provenance=provenance,
        )
    except Exception as exc:
        raise SchemaError(locus, str(exc)) from exc


def library_to_doc(library: TaskLibrary, include_provenance: bool = True) -> dict:
    primitives = []
    learned = []
    for d in library.definitions():
        if d.is_primitive:
            primitives.append(_definition_to_json(d, include_provenance))
        else:
            learned.append(_definition_to_json(d, include_provenance))
    return {
        "format": LIBRARY_FORMAT,
        "version": FORMAT_VERSION,
        "primitives": primitives,
        "learned": learned,
    }


def library_from_doc(doc: Any) -> TaskLibrary:
    obj = _expect(doc, dict, "$")
    if obj.get("format") != LIBRARY_FORMAT:
        raise SchemaError("$.format", f"expected {LIBRARY_FORMAT!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise SchemaError(
            "$.version", f"expected {FORMAT_VERSION}, got {obj.get('version')!r}"
        )
    library = TaskLibrary()

    def add(definition: TaskDefinition, locus: str) -> None:
        try:
            library.register(definition)
        except DuplicateSignature as exc:
            raise SchemaError(locus, str(exc)) from exc

    prims = _expect_key(obj, "primitives", list, "$")
    for i, raw in enumerate(prims):
        add(_definition_from_json(raw, f"$.primitives[{i}]", False), f"$.primitives[{i}]")
    learned = _expect_key(obj, "learned", list, "$")
    for i, raw in enumerate(learned):
        add(_definition_from_json(raw, f"$.learned[{i}]", True), f"$.learned[{i}]")
    return library


def dump_library(library: TaskLibrary, include_provenance: bool = True) -> str:
    return canonical_json(library_to_doc(library, include_provenance))


def save_library(
    library: TaskLibrary, path: str | Path, include_provenance: bool = True
) -> None:
    Path(path).write_text(dump_library(library, include_provenance), encoding="utf-8")


def load_library(path: str | Path) -> TaskLibrary:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from exc
    return library_from_doc(doc)


def seed_library() -> TaskLibrary:
    """The innate hand and motion primitives every fresh session starts from."""
    text = (
        resources.files("taskforge")
        .joinpath("data/primitives.json")
        .read_text(encoding="utf-8")
    )
    return library_from_doc(json.loads(text))


def _structural_body(d: TaskDefinition) -> list[tuple] | None:
    if d.body is None:
        return None
    out = []
    for step in d.body:
        args = []
        for term in step.args:
            if isinstance(term, Variable):
                args.append(("var", term.index))
            else:
                args.append(("const", term.value.key))
        out.append((step.name.key, tuple(args)))
    return out


def diff_libraries(a: TaskLibrary, b: TaskLibrary) -> list[str]:
    """Structural differences, ignoring spelling, params, and provenance."""
    problems: list[str] = []
    a_defs = {d.signature.key: d for d in a.definitions()}
    b_defs = {d.signature.key: d for d in b.definitions()}
    for key in sorted(a_defs.keys() - b_defs.keys()):
        problems.append(f"only in first: {key[0]}/{key[1]}")
    for key in sorted(b_defs.keys() - a_defs.keys()):
        problems.append(f"only in second: {key[0]}/{key[1]}")
    for key in sorted(a_defs.keys() & b_defs.keys()):
        da, db = a_defs[key], b_defs[key]
        name = f"{key[0]}/{key[1]}"
        if da.is_primitive != db.is_primitive:
            problems.append(f"{name}: primitive in one, learned in the other")
            continue
        ba, bb = _structural_body(da), _structural_body(db)
        if ba == bb:
            continue
        assert ba is not None and bb is not None
        if len(ba) != len(bb):
            problems.append(f"{name}: {len(ba)} steps vs {len(bb)}")
            continue
        for i, (sa, sb) in enumerate(zip(ba, bb)):
            if sa != sb:
                problems.append(f"{name}: step {i} differs: {sa} vs {sb}")
    return problems


def libraries_equal(a: TaskLibrary, b: TaskLibrary) -> bool:
    return not diff_libraries(a, b)


def tree_to_json(tree: "PlanTree") -> dict[str, Any]:
    """Plan trees as plain data, for the tree CLI and the HTTP service."""
    return {
        "action": tree.root.render(),
        "name": tree.root.name.display,
        "args": [str(arg) for arg in tree.root.args],
        "primitive": not tree.children,
        "children": [tree_to_json(child) for child in tree.children],
    }


def load_script(path: str | Path) -> list[dict[str, Any]]:
    """A teaching script: ordered turns with expected outcomes."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from exc
    obj = _expect(doc, dict, "$")
    if obj.get("format") != SCRIPT_FORMAT:
        raise SchemaError("$.format", f"expected {SCRIPT_FORMAT!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise SchemaError("$.version", f"expected {FORMAT_VERSION}")
    turns_raw = _expect_key(obj, "turns", list, "$")
    turns: list[dict[str, Any]] = []
    for i, raw in enumerate(turns_raw):
        locus = f"$.turns[{i}]"
        turn = _expect(raw, dict, locus)
        utterance = _expect_key(turn, "utterance", str, locus)
        expect = _expect_key(turn, "expect", str, locus)
        if expect not in REPLY_KINDS:
            raise SchemaError(f"{locus}.expect", f"expected one of {REPLY_KINDS}")
        entry: dict[str, Any] = {"utterance": utterance, "expect": expect}
        if "expect_question_about" in turn:
            entry["expect_question_about"] = _expect(
                turn["expect_question_about"], str, f"{locus}.expect_question_about"
            )
        turns.append(entry)
    if not turns:
        raise SchemaError("$.turns", "script has no turns")
    return turns
