#!/usr/bin/env python3
"""Regenerate the recorded completions for the kitchen teaching script.

The stand-in model here is a lookup table: it answers parse prompts from an
authored utterance table and match prompts from an authored paraphrase table.
Running the real session against it through a recording cassette produces
scripts/table1.fixtures.json, which `taskforge replay` and the acceptance
suite then consume with no model in the loop.

The run is only saved if the resulting library structurally matches the
hand-written reference in fixtures/table1_library.json.
"""
from __future__ import annotations

import re
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from taskforge.learning import build_session, run_script
from taskforge.llm import CassetteBackend
from taskforge.store import diff_libraries, load_library, load_script

PARSE_TABLE = {
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
    "Now clean the cup into the drawer.": "clean(cup, drawer)",
    "Put the cup away.": "putAway(cup)",
    "Move the cup to the drawer.": "move(cup, drawer)",
    "Pick up the cup.": "pickUp(cup)",
    "Put the cup on the counter.": "put(cup, counter)",
}

MATCH_TABLE = {
    "putAway": "NONE",
    "pickUp": "NONE",
    "pullHandBack": "resetHandPosition",
}


class TableBackend:
    """Answers the session's prompts from the authored tables above."""

    def complete(self, tag: str, prompt: str) -> str:
        if tag == "parse":
            instructions = re.findall(r"Instruction: (.+)\n", prompt + "\n")
            utterance = instructions[-1].strip()
            if utterance not in PARSE_TABLE:
                raise KeyError(f"no authored parse for {utterance!r}")
            return PARSE_TABLE[utterance]
        if tag == "match":
            found = re.search(r"Unknown action: ([A-Za-z0-9_ ]+)\(", prompt)
            assert found is not None, "match prompt without an unknown action"
            name = found.group(1).strip()
            if name not in MATCH_TABLE:
                raise KeyError(f"no authored match answer for {name!r}")
            return MATCH_TABLE[name]
        raise KeyError(f"unexpected tag {tag!r}")


def main() -> int:
    turns = load_script(REPO / "scripts" / "table1.json")
    cassette = CassetteBackend("record", TableBackend())
    session = build_session(cassette, clock=lambda: "replay")
    replies = run_script(session, turns)

    reference = load_library(REPO / "fixtures" / "table1_library.json")
    problems = diff_libraries(session.library, reference)
    if problems:
        print("library diverges from the hand-written reference:")
        for problem in problems:
            print(f"  {problem}")
        return 1

    out = REPO / "scripts" / "table1.fixtures.json"
    cassette.save(out)
    questions = sum(1 for r in replies if r.kind == "question")
    print(f"{len(turns)} turns, {questions} questions, {len(cassette)} recordings")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
