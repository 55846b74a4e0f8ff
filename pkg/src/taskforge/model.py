"""Symbolic task knowledge: predicates, parameterized task definitions, and plans.

Actions are predicate-argument structures. A task definition is either a
primitive (innate, non-decomposable) or a learned, ordered body of steps in
which constants bound during teaching have been abstracted into variables
scoped to the definition's parameter list. The library keys definitions by
(canonical name, arity) so that same-named actions of different arity, such
as the one-argument hand motion "move" and the two-argument object-relocation
"move", coexist.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field


class ModelError(Exception):
    """Base for task-model violations."""


class EmptyName(ModelError):
    """Name contains no alphanumeric characters."""


class EmptySteps(ModelError):
    """A learned definition needs at least one step."""


class SelfReference(ModelError):
    """A definition body may not invoke the definition itself."""


class ArityMismatch(ModelError):
    """Argument count does not match the definition's parameter count."""


class UnknownSignature(ModelError):
    """No definition registered under this (canonical name, arity)."""


class DepthExceeded(ModelError):
    """Expansion recursed past the allowed depth (likely a cycle)."""


class DuplicateSignature(ModelError):
    """A definition with this (canonical name, arity) already exists."""


def _canonical_key(raw: str) -> str:
    return "".join(ch for ch in raw.lower() if ch.isalnum())


@dataclass(frozen=True, eq=False)
class Symbol:
    """A predicate or constant name.

    Equality and hashing use the canonical key (lowercased, non-alphanumerics
    dropped), so "pick_up", "pickUp", and "pick up" are one symbol. The
    display form preserves the spelling the symbol was first created with.
    """

    display: str
    key: str

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Symbol):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __str__(self) -> str:
        return self.display


def canonicalize(raw_name: str) -> Symbol:
    """Build a Symbol from raw text. Raises EmptyName if nothing survives."""
    display = raw_name.strip()
    key = _canonical_key(display)
    if not key:
        raise EmptyName(f"name {raw_name!r} has no alphanumeric characters")
    return Symbol(display=display, key=key)


@dataclass(frozen=True)
class Constant:
    value: Symbol

    def __str__(self) -> str:
        return self.value.display


@dataclass(frozen=True)
class Variable:
    """Reference into the owning definition's parameter list (0-based)."""

    index: int

    def __str__(self) -> str:
        return f"${self.index}"


Term = Constant | Variable


@dataclass(frozen=True)
class PredicateInstance:
    """A named action applied to an ordered (possibly empty) argument list."""

    name: Symbol
    args: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def signature(self) -> "Signature":
        return Signature(self.name, len(self.args))

    def is_ground(self) -> bool:
        return all(isinstance(a, Constant) for a in self.args)

    def render(self) -> str:
        return f"{self.name.display}({', '.join(str(a) for a in self.args)})"


def ground(name: str, *arg_names: str) -> PredicateInstance:
    """Convenience constructor for an all-constant instance."""
    return PredicateInstance(
        canonicalize(name),
        tuple(Constant(canonicalize(a)) for a in arg_names),
    )


@dataclass(frozen=True)
class Signature:
    """Action identity: canonical name plus arity."""

    name: Symbol
    arity: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.name.key, self.arity)

    def render(self) -> str:
        return f"{self.name.display}/{self.arity}"


@dataclass(frozen=True)
class Provenance:
    utterance: str
    timestamp: str


@dataclass(frozen=True)
class TaskDefinition:
    """A primitive action or a learned decomposition.

    Learned bodies are strictly sequential. Variable terms index into params;
    params themselves are display text only.
    """

    signature: Signature
    params: tuple[str, ...]
    body: tuple[PredicateInstance, ...] | None = None
    provenance: Provenance | None = None

    def __post_init__(self) -> None:
        if len(self.params) != self.signature.arity:
            raise ArityMismatch(
                f"{self.signature.render()}: {len(self.params)} params for arity "
                f"{self.signature.arity}"
            )
        if self.body is None:
            return
        if not self.body:
            raise EmptySteps(f"{self.signature.render()}: learned body is empty")
        for step in self.body:
            if step.signature == self.signature:
                raise SelfReference(
                    f"{self.signature.render()}: body step {step.render()} "
                    "invokes the definition itself"
                )
            for term in step.args:
                if isinstance(term, Variable) and not (
                    0 <= term.index < self.signature.arity
                ):
                    raise ArityMismatch(
                        f"{self.signature.render()}: variable {term.index} out of "
                        f"range for arity {self.signature.arity}"
                    )

    @property
    def is_primitive(self) -> bool:
        return self.body is None


def primitive(name: str, params: tuple[str, ...] = ()) -> TaskDefinition:
    return TaskDefinition(
        signature=Signature(canonicalize(name), len(params)),
        params=params,
    )


class TaskLibrary:
    """Registry of known actions, keyed by (canonical name, arity).

    Single writer, many readers: mutation happens only between dialog turns,
    guarded by an internal lock. Definitions themselves are immutable.
    """

    def __init__(self) -> None:
        self._defs: dict[tuple[str, int], TaskDefinition] = {}
        self._order: list[Signature] = []
        self._lock = threading.RLock()

    def register(self, definition: TaskDefinition) -> None:
        with self._lock:
            key = definition.signature.key
            if key in self._defs:
                raise DuplicateSignature(
                    f"{definition.signature.render()} already registered"
                )
            self._defs[key] = definition
            self._order.append(definition.signature)

    def unregister(self, signature: Signature) -> None:
        """Remove a definition (used only by turn rollback)."""
        with self._lock:
            self._defs.pop(signature.key, None)
            self._order = [s for s in self._order if s.key != signature.key]

    def get(self, signature: Signature) -> TaskDefinition | None:
        with self._lock:
            return self._defs.get(signature.key)

    def lookup(self, name: Symbol, arity: int) -> TaskDefinition | None:
        with self._lock:
            return self._defs.get((name.key, arity))

    def __contains__(self, signature: Signature) -> bool:
        return self.get(signature) is not None

    def signatures(self) -> list[Signature]:
        """All signatures in insertion order."""
        with self._lock:
            return list(self._order)

    def definitions(self) -> list[TaskDefinition]:
        with self._lock:
            return [self._defs[s.key] for s in self._order]

    def replace_contents(self, definitions: list[TaskDefinition]) -> None:
        """Reset the registry in place (rollback/restore path)."""
        with self._lock:
            self._defs = {d.signature.key: d for d in definitions}
            self._order = [d.signature for d in definitions]

    def __len__(self) -> int:
        with self._lock:
            return len(self._order)


def generalize(
    parent: PredicateInstance,
    steps: list[PredicateInstance] | tuple[PredicateInstance, ...],
    provenance: Provenance | None = None,
) -> TaskDefinition:
    """Abstract a taught step sequence into a reusable definition.

    Every step constant equal to one of the parent's arguments becomes a
    variable bound to the leftmost matching parent parameter; all other
    constants stay constant. Parent arguments may go unused.
    """
    if not steps:
        raise EmptySteps(f"no steps given for {parent.render()}")
    if not parent.is_ground():
        raise ArityMismatch(f"parent {parent.render()} is not ground")
    parent_sig = parent.signature
    for step in steps:
        if step.signature == parent_sig:
            raise SelfReference(
                f"step {step.render()} has the parent's own signature"
            )

    binding: dict[str, int] = {}
    for i, arg in enumerate(parent.args):
        assert isinstance(arg, Constant)
        binding.setdefault(arg.value.key, i)

    def abstract(term: Term) -> Term:
        if isinstance(term, Constant) and term.value.key in binding:
            return Variable(binding[term.value.key])
        return term

    body = tuple(
        PredicateInstance(step.name, tuple(abstract(t) for t in step.args))
        for step in steps
    )
    params = tuple(
        arg.value.display for arg in parent.args if isinstance(arg, Constant)
    )
    return TaskDefinition(
        signature=parent_sig, params=params, body=body, provenance=provenance
    )


def instantiate(
    definition: TaskDefinition, args: tuple[Term, ...]
) -> list[PredicateInstance]:
    """Substitute concrete arguments into a learned body."""
    if definition.is_primitive:
        raise ArityMismatch(
            f"{definition.signature.render()} is primitive and has no body"
        )
    if len(args) != definition.signature.arity:
        raise ArityMismatch(
            f"{definition.signature.render()} called with {len(args)} args"
        )
    assert definition.body is not None

    def substitute(term: Term) -> Term:
        if isinstance(term, Variable):
            return args[term.index]
        return term

    return [
        PredicateInstance(step.name, tuple(substitute(t) for t in step.args))
        for step in definition.body
    ]


DEFAULT_MAX_DEPTH = 32


@dataclass(frozen=True)
class PlanTree:
    """Full recursive expansion of a ground instance down to primitive leaves."""

    root: PredicateInstance
    children: tuple["PlanTree", ...] = ()

    def leaves(self) -> list[PredicateInstance]:
        if not self.children:
            return [self.root]
        out: list[PredicateInstance] = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def expand(
    library: TaskLibrary,
    instance: PredicateInstance,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> PlanTree:
    """Recursively instantiate learned bodies until every leaf is primitive."""
    if max_depth <= 0:
        raise DepthExceeded(
            f"expansion of {instance.render()} exceeded the depth budget"
        )
    definition = library.get(instance.signature)
    if definition is None:
        raise UnknownSignature(f"{instance.signature.render()} is not known")
    if definition.is_primitive:
        return PlanTree(root=instance)
    steps = instantiate(definition, instance.args)
    children = tuple(expand(library, step, max_depth - 1) for step in steps)
    return PlanTree(root=instance, children=children)
