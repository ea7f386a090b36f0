import json
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from glyphforge.backends import FixtureLLM
from glyphforge.errors import BackendUnavailable, InvalidInput, MalformedResponse, TemplateError
from glyphforge.knowledge import (
    PromptPair,
    PromptSource,
    QueryTemplate,
    acquire_prompts,
    build_query,
    first_json_object,
    names_an_object,
    parse_response,
)


def test_build_query_plum():
    assert build_query("plum") == (
        "Please list the representative tangible objects in/of plum, along with the appropriate artistic font style."
    )


def test_build_query_errors():
    with pytest.raises(InvalidInput):
        build_query("")
    with pytest.raises(TemplateError):
        QueryTemplate(question_format="no placeholder here")
    with pytest.raises(TemplateError):
        QueryTemplate(question_format="<CONCEPT> and <CONCEPT>")


def test_fixture_rose_and_plum():
    llm = FixtureLLM()
    rose = acquire_prompts("rose", llm, use_cache=False)
    assert rose.subject_prompt == "a blooming red rose flower"
    assert rose.surrounding_prompt == "brown vignette, leaf, slender branch, thorns in a romantic atmosphere"
    assert rose.source is PromptSource.FIXTURE
    plum = acquire_prompts("plum", llm, use_cache=False)
    assert "round plum" in plum.subject_prompt
    assert "colorful blossom" in plum.surrounding_prompt


def test_fixture_mode_deterministic():
    a = acquire_prompts("rose", FixtureLLM(), use_cache=False)
    b = acquire_prompts("rose", FixtureLLM(), use_cache=False)
    assert a == b


class ScriptedLLM:
    backend_id = "scripted"
    source = "llm"

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, system_text, user_text):
        self.prompts.append(user_text)
        return self.replies.pop(0)


def test_three_malformed_replies_fail():
    llm = ScriptedLLM(["not json"] * 3)
    with pytest.raises(MalformedResponse):
        acquire_prompts("win", llm, use_cache=False)
    assert len(llm.prompts) == 3
    assert "could not be parsed" in llm.prompts[1]


def test_repair_then_success():
    llm = ScriptedLLM(["oops", '{"subject prompt": "a trophy cup", "surrounding prompt": "gold confetti"}'])
    pair = acquire_prompts("win", llm, use_cache=False)
    assert pair.subject_prompt == "a trophy cup"
    assert pair.source is PromptSource.LLM


def test_unknown_fixture_is_unavailable():
    with pytest.raises(BackendUnavailable):
        acquire_prompts("zzz-unknown", FixtureLLM(), use_cache=False)


def test_parse_plain_and_wrapped():
    p = parse_response('{"subject prompt": "a", "surrounding prompt": "b"}')
    assert (p.subject_prompt, p.surrounding_prompt) == ("a", "b")
    p = parse_response('Sure! {"subject prompt": "x", "surrounding prompt": "y"} Hope it helps')
    assert (p.subject_prompt, p.surrounding_prompt) == ("x", "y")


def test_parse_missing_or_empty():
    with pytest.raises(MalformedResponse):
        parse_response('{"subject prompt": "a"}')
    with pytest.raises(MalformedResponse):
        parse_response('{"subject prompt": "", "surrounding prompt": "b"}')
    with pytest.raises(MalformedResponse):
        parse_response("[1, 2]")


def test_balanced_scan_handles_braces_in_strings():
    text = 'noise {bad} then {"subject prompt": "a {curly} cat", "surrounding prompt": "q\\"uote}"} tail'
    blob = first_json_object(text)
    assert json.loads(blob)["subject prompt"] == "a {curly} cat"


safe_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1).filter(lambda s: s.strip() == s and s)


@given(safe_text, safe_text)
def test_round_trip(sub, surr):
    pair = PromptPair(sub, surr, PromptSource.LLM)
    assert parse_response(pair.to_json()) == pair


def test_noun_heuristic():
    assert names_an_object("a blooming red rose flower")
    assert names_an_object("玫瑰")
    assert not names_an_object("a of the")


def test_cache_is_thread_safe():
    llm = FixtureLLM()
    results = []

    def worker():
        results.append(acquire_prompts("plum", llm))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({id(r) for r in results}) <= 8 and all(r == results[0] for r in results)
