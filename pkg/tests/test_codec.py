import json

import pytest
from hypothesis import given, settings

from flowforge import prompts
from flowforge.codec import (
    Action, FormatExhausted, ParseFailure, Plan, decode_with_recovery, parse_action, parse_plan,
)
from flowforge.llm import Conversation, ScriptedBackend, word_count

from strategies import action_docs, noise

GOOD = '{"reasoning": "sum it", "action": "sum_list", "action_input": {"xs": [1, 2, 3]}}'


def test_strict_parse():
    a = parse_action(GOOD)
    assert a == Action("sum it", "sum_list", {"xs": [1.0, 2.0, 3.0]})


def test_fenced_block():
    assert parse_action(f"Here you go:\n```json\n{GOOD}\n```\nthanks") == parse_action(GOOD)


def test_embedded_in_prose_after_a_wrong_object():
    text = 'first {"note": 1} then ' + GOOD + " and {broken"
    assert parse_action(text).action == "sum_list"


@pytest.mark.parametrize("raw", [
    "", "no json here", "{", '{"reasoning": "x", "action": "a"}',
    '{"reasoning": "x", "action": "a", "action_input": {}, "extra": 1}',
    '{"reasoning": "x", "action": "", "action_input": {}}',
    '{"reasoning": "x", "action": "a", "action_input": []}',
    '{"reasoning": "x", "action": "a", "action_input": {"v": NaN}}',
])
def test_rejects(raw):
    with pytest.raises(ParseFailure):
        parse_action(raw)


def test_plan_parse():
    assert parse_plan('{"analysis": "a", "steps": ["Step 1: x"]}') == Plan("a", ("Step 1: x",))
    with pytest.raises(ParseFailure):
        parse_plan('{"analysis": "a", "steps": []}')


@settings(max_examples=1000, deadline=None)
@given(action_docs, noise, noise)
def test_recovers_document_from_noise(doc, before, after):
    bare = json.dumps(doc)
    assert parse_action(before + bare + after) == parse_action(bare)


@given(action_docs)
def test_pretty_printed_documents(doc):
    assert parse_action(json.dumps(doc, indent=2)) == parse_action(json.dumps(doc))


def _conv(replies):
    conv = Conversation(ScriptedBackend(replies), "sys")
    conv.add_user("task")
    raw, _ = conv.ask()
    return conv, raw


def test_recovery_succeeds_after_retries():
    conv, raw = _conv(["junk", "more junk", GOOD])
    dec = decode_with_recovery(conv, raw)
    assert dec.retries == 2
    assert dec.value.action == "sum_list"
    assert [m.content for m in conv.messages if m.role == "user"][1:] == [prompts.FORMAT_RECOVERY] * 2
    # only the two re-queries are counted; the first reply belongs to the caller
    assert dec.usage.output_tokens == word_count("more junk") + word_count(GOOD)
    assert len(dec.failures) == 2


def test_recovery_stops_at_exactly_five_retries():
    backend = ScriptedBackend(["bad"] * 10)
    conv = Conversation(backend, "sys")
    conv.add_user("task")
    raw, _ = conv.ask()
    with pytest.raises(FormatExhausted) as info:
        decode_with_recovery(conv, raw)
    assert info.value.retries == 5
    assert len(backend.calls) == 6
    assert backend.remaining == 4
