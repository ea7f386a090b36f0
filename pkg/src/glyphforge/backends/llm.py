"""Offline language-model backend."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from glyphforge.errors import BackendUnavailable
from glyphforge.knowledge import PLACEHOLDER, QUESTION_FORMAT


def default_fixture_table() -> dict[str, str]:
    text = resources.files("glyphforge").joinpath("data/llm_fixtures.json").read_text(encoding="utf-8")
    return json.loads(text)


class FixtureLLM:
    """Answers from a concept -> raw-response table.

    The concept is recovered from the question by matching the standard
    question format; otherwise the whole user text is used as the key.
    """

    source = "fixture"

    def __init__(self, table: dict[str, str] | None = None, question_format: str = QUESTION_FORMAT):
        self.table = default_fixture_table() if table is None else dict(table)
        self.question_format = question_format
        self.backend_id = "fixture-llm"
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "FixtureLLM":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def concept_of(self, user_text: str) -> str:
        question = user_text.split("\n\n", 1)[0]
        prefix, _, suffix = self.question_format.partition(PLACEHOLDER)
        if question.startswith(prefix) and question.endswith(suffix):
            return question[len(prefix) : len(question) - len(suffix)]
        return question

    def complete(self, system_text: str, user_text: str) -> str:
        self.calls += 1
        concept = self.concept_of(user_text)
        try:
            return self.table[concept]
        except KeyError:
            raise BackendUnavailable(f"no fixture response for {concept!r}") from None
