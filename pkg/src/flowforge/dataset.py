"""Benchmark instances: schema, loading, and the bundled desk suite."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import graph as wg
from .tools import BUILTIN_NAMES, CATEGORIES
from .values import canonical_text, normalize

DESK_PATH = Path(__file__).parent / "data" / "desk"
DIFFICULTY_BANDS = {"easy": (7, 9), "medium": (18, 20), "hard": (28, 30)}


class DatasetError(Exception):
    pass


class SchemaError(DatasetError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DuplicateInstanceId(DatasetError):
    pass


@dataclass
class Instance:
    id: str
    category: str
    difficulty: str
    description: str
    toolset: list[str]
    examples: list[tuple[dict[str, Any], str]]
    tests: list[tuple[dict[str, Any], str]]
    golden_graph: wg.WorkflowGraph | None = field(default=None, repr=False)

    def query(self) -> str:
        """Task text handed to agents: description plus worked examples."""
        lines = [self.description]
        if self.examples:
            lines += ["", "Examples:"]
            for inputs, expected in self.examples:
                shown = json.dumps(inputs, sort_keys=True)
                lines.append(f"- Input: {shown} -> Expected output: {expected}")
        return "\n".join(lines)


def _need(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise SchemaError(f"{where}.{key}", "missing field")
    if not isinstance(doc[key], kind):
        raise SchemaError(f"{where}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return doc[key]


def _pairs(doc: dict, key: str, answer: str, where: str) -> list[tuple[dict, str]]:
    out = []
    for i, item in enumerate(_need(doc, key, list, where)):
        at = f"{where}.{key}[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(at, "expected an object")
        inputs = _need(item, "input", dict, at)
        if answer not in item:
            raise SchemaError(f"{at}.{answer}", "missing field")
        out.append((normalize(inputs), canonical_text(item[answer])))
    return out


def parse_instance(doc: Any, where: str = "$") -> Instance:
    if not isinstance(doc, dict):
        raise SchemaError(where, "expected an object")
    inst = Instance(
        id=_need(doc, "id", str, where),
        category=_need(doc, "category", str, where),
        difficulty=_need(doc, "difficulty", str, where),
        description=_need(doc, "description", str, where),
        toolset=list(_need(doc, "toolset", list, where)),
        examples=_pairs(doc, "examples", "expected", where),
        tests=_pairs(doc, "tests", "golden", where),
    )
    if inst.category not in CATEGORIES:
        raise SchemaError(f"{where}.category", f"unknown category {inst.category!r}")
    if inst.difficulty not in DIFFICULTY_BANDS:
        raise SchemaError(f"{where}.difficulty", f"unknown difficulty {inst.difficulty!r}")
    if not inst.tests:
        raise SchemaError(f"{where}.tests", "must not be empty")
    unknown = [t for t in inst.toolset if t not in BUILTIN_NAMES]
    if unknown:
        raise SchemaError(f"{where}.toolset", f"unknown tools {unknown}")
    lo, hi = DIFFICULTY_BANDS[inst.difficulty]
    if not lo <= len(inst.toolset) <= hi:
        raise SchemaError(f"{where}.toolset", f"{inst.difficulty} needs {lo}-{hi} tools, got {len(inst.toolset)}")
    if "golden_graph" in doc and doc["golden_graph"] is not None:
        try:
            inst.golden_graph = wg.from_document(doc["golden_graph"])
        except wg.SchemaError as exc:
            raise SchemaError(f"{where}.golden_graph{exc.path[1:]}", str(exc)) from exc
    return inst


def load_dataset(path: str | Path) -> list[Instance]:
    """Load a dataset directory (``index.json`` plus one JSON file per instance)."""
    root = Path(path)
    index_path = root / "index.json"
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SchemaError(str(index_path), "index file not found") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(str(index_path), f"not JSON: {exc}") from exc
    files = _need(index, "instances", list, str(index_path))
    out: list[Instance] = []
    seen: set[str] = set()
    for name in files:
        file = root / name
        try:
            doc = json.loads(file.read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise SchemaError(str(file), str(exc)) from exc
        inst = parse_instance(doc, str(file))
        if inst.id in seen:
            raise DuplicateInstanceId(inst.id)
        seen.add(inst.id)
        out.append(inst)
    return out


def load_desk() -> list[Instance]:
    return load_dataset(DESK_PATH)
