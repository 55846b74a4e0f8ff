"""Shared library builders for the kitchen-robot task suite used across tests."""
from __future__ import annotations

import pytest

from taskforge.model import (
    Constant,
    PredicateInstance,
    Signature,
    TaskDefinition,
    TaskLibrary,
    Variable,
    canonicalize,
    ground,
    primitive,
)

PRIMITIVE_SPECS: list[tuple[str, tuple[str, ...]]] = [
    ("openHand", ()),
    ("moveHand", ("target",)),
    ("closeHand", ()),
    ("resetHandPosition", ()),
    ("move", ("destination",)),
]


def build_primitive_library() -> TaskLibrary:
    lib = TaskLibrary()
    for name, params in PRIMITIVE_SPECS:
        lib.register(primitive(name, params))
    return lib


def _step(name: str, *args: Constant | Variable) -> PredicateInstance:
    return PredicateInstance(canonicalize(name), tuple(args))


def _const(text: str) -> Constant:
    return Constant(canonicalize(text))


def build_table1_library() -> TaskLibrary:
    """The five learned kitchen tasks on top of the innate primitives.

    Bodies are written exactly as teaching would leave them: constants that
    matched a parent argument are variables, everything else stays constant.
    """
    lib = build_primitive_library()
    lib.register(
        TaskDefinition(
            signature=Signature(canonicalize("pickUp"), 1),
            params=("pepper",),
            body=(
                _step("openHand"),
                _step("moveHand", Variable(0)),
                _step("closeHand"),
                _step("resetHandPosition"),
            ),
        )
    )
    lib.register(
        TaskDefinition(
            signature=Signature(canonicalize("put"), 2),
            params=("pepper", "cupboard"),
            body=(
                _step("move", Variable(1)),
                _step("openHand"),
                _step("resetHandPosition"),
                _step("closeHand"),
            ),
        )
    )
    lib.register(
        TaskDefinition(
            signature=Signature(canonicalize("move"), 2),
            params=("pepper", "cupboard"),
            body=(
                _step("pickUp", Variable(0)),
                _step("put", Variable(0), Variable(1)),
            ),
        )
    )
    lib.register(
        TaskDefinition(
            signature=Signature(canonicalize("putAway"), 1),
            params=("pepper",),
            body=(_step("move", Variable(0), _const("cupboard")),),
        )
    )
    lib.register(
        TaskDefinition(
            signature=Signature(canonicalize("clean"), 2),
            params=("pepper", "cupboard"),
            body=(_step("putAway", Variable(0)),),
        )
    )
    return lib


@pytest.fixture
def primitives() -> TaskLibrary:
    return build_primitive_library()


@pytest.fixture
def table1() -> TaskLibrary:
    return build_table1_library()


@pytest.fixture
def pepper_cupboard() -> PredicateInstance:
    return ground("clean", "pepper", "cupboard")
