"""Robust decoding of model replies into actions and plans.

Three stages, first success wins: strict parse of the whole reply, parse of
fenced code blocks, then a left-to-right scan of every ``{`` for a complete
object with the required fields.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Callable, TypeVar

from . import prompts
from .llm import Conversation, Usage
from .values import normalize

T = TypeVar("T")

MAX_FORMAT_RETRIES = 5


@dataclass(frozen=True)
class Action:
    reasoning: str
    action: str
    action_input: dict[str, Any]

    def to_dict(self) -> dict:
        return {"reasoning": self.reasoning, "action": self.action, "action_input": self.action_input}


@dataclass(frozen=True)
class Plan:
    analysis: str
    steps: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"analysis": self.analysis, "steps": list(self.steps)}


class ParseFailure(ValueError):
    def __init__(self, stage: int, diagnostics: list[str]):
        super().__init__(f"no valid document (stage {stage}): " + "; ".join(diagnostics[-3:]))
        self.stage = stage
        self.diagnostics = diagnostics


class FormatExhausted(Exception):
    def __init__(self, retries: int, last: ParseFailure):
        super().__init__(f"format recovery gave up after {retries} retries")
        self.retries = retries
        self.last = last


class SchemaMismatch(ValueError):
    pass


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


_DECODER = json.JSONDecoder(parse_constant=_reject_constant)
_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```", re.DOTALL)


def _strict(text: str) -> Any:
    return _DECODER.decode(text.strip())


def _action_schema(doc: Any) -> Action:
    if not isinstance(doc, dict):
        raise SchemaMismatch("not an object")
    keys = set(doc)
    want = {"reasoning", "action", "action_input"}
    if keys != want:
        raise SchemaMismatch(f"fields {sorted(keys)} != {sorted(want)}")
    if not isinstance(doc["reasoning"], str):
        raise SchemaMismatch("reasoning must be text")
    if not isinstance(doc["action"], str) or not doc["action"].strip():
        raise SchemaMismatch("action must be a non-empty name")
    if not isinstance(doc["action_input"], dict):
        raise SchemaMismatch("action_input must be an object")
    return Action(doc["reasoning"], doc["action"].strip(), normalize(doc["action_input"]))


def _plan_schema(doc: Any) -> Plan:
    if not isinstance(doc, dict):
        raise SchemaMismatch("not an object")
    if set(doc) != {"analysis", "steps"}:
        raise SchemaMismatch(f"fields {sorted(doc)} != ['analysis', 'steps']")
    if not isinstance(doc["analysis"], str):
        raise SchemaMismatch("analysis must be text")
    steps = doc["steps"]
    if not isinstance(steps, list) or not steps:
        raise SchemaMismatch("steps must be a non-empty list")
    if not all(isinstance(s, str) for s in steps):
        raise SchemaMismatch("steps must be text")
    return Plan(doc["analysis"], tuple(steps))


def brace_candidates(text: str):
    """Yield (start, end, value) for each JSON object beginning at a ``{``."""
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            value, end = _DECODER.raw_decode(text, i)
        except ValueError:
            continue
        yield i, end, value


def _decode(raw: str, schema: Callable[[Any], T]) -> T:
    diags: list[str] = []
    try:
        return schema(_strict(raw))
    except (ValueError, SchemaMismatch) as exc:
        diags.append(f"strict: {exc}")
    for block in _FENCE.findall(raw):
        try:
            return schema(_strict(block))
        except (ValueError, SchemaMismatch) as exc:
            diags.append(f"fence: {exc}")
    for start, _end, value in brace_candidates(raw):
        try:
            return schema(value)
        except SchemaMismatch as exc:
            diags.append(f"scan@{start}: {exc}")
    return _fail(diags)


def _fail(diags: list[str]):
    raise ParseFailure(3, diags or ["no JSON object found"])


def parse_action(raw: str) -> Action:
    return _decode(raw, _action_schema)


def parse_plan(raw: str) -> Plan:
    return _decode(raw, _plan_schema)


def recovery_prompt() -> str:
    return prompts.FORMAT_RECOVERY


@dataclass
class Decoded:
    value: Any
    retries: int
    usage: Usage
    failures: list[str]


def decode_with_recovery(conv: Conversation, raw: str, parse: Callable[[str], T] = parse_action,
                         recovery: str | None = None,
                         max_retries: int = MAX_FORMAT_RETRIES) -> Decoded:
    """Parse ``raw``; on failure ask again with the recovery message, up to ``max_retries`` times.

    ``raw`` must already be the last assistant message of ``conv``. Usage of the
    re-queries is returned; the initial call's usage is the caller's.
    """
    recovery = recovery or recovery_prompt()
    usage = Usage()
    failures: list[str] = []
    retries = 0
    while True:
        try:
            return Decoded(parse(raw), retries, usage, failures)
        except ParseFailure as exc:
            failures.append(str(exc))
            if retries >= max_retries:
                raise FormatExhausted(retries, exc) from exc
        retries += 1
        conv.add_user(recovery)
        raw, u = conv.ask()
        usage = usage + u
