"""Session traces and their JSON-lines persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .codec import Plan
from .llm import Usage
from .values import canonical_text

SUCCESS = "Success"
FAILED = "Failed"
FAIL_REASONS = ("StepLimit", "FormatExhausted", "ToolRetriesExhausted", "TransportError",
                "TranscriptExhausted", "NoTracesToSummarize")


@dataclass
class TraceStep:
    index: int
    reasoning: str
    action: str
    args: dict[str, Any]
    observation: str
    partition: str | None  # "B" | "G" | "T" | None for unknown / undecodable
    usage: Usage = field(default_factory=Usage)
    format_retries: int = 0
    tool_retries: int = 0
    ok: bool = True
    errors: list[dict[str, Any]] = field(default_factory=list)
    phase: str = "main"

    def to_dict(self) -> dict:
        return {
            "index": self.index, "reasoning": self.reasoning, "action": self.action,
            "args": self.args, "observation": self.observation, "partition": self.partition,
            "usage": self.usage.to_dict(), "format_retries": self.format_retries,
            "tool_retries": self.tool_retries, "ok": self.ok, "errors": self.errors,
            "phase": self.phase,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        d = dict(d)
        d["usage"] = Usage(**d.get("usage", {}))
        return cls(**d)


@dataclass
class Trace:
    task_id: str
    strategy: str
    query: str = ""
    steps: list[TraceStep] = field(default_factory=list)
    final_answer: str | None = None
    status: str = FAILED
    reason: str | None = None
    plan: Plan | None = None
    plan_usage: Usage = field(default_factory=Usage)
    flags: list[str] = field(default_factory=list)
    config_hash: str = ""

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    @property
    def usage(self) -> Usage:
        total = self.plan_usage
        for s in self.steps:
            total = total + s.usage
        return total

    def business_steps(self) -> list[TraceStep]:
        return [s for s in self.steps if s.partition == "B" and s.ok]

    def partitions(self) -> list[str]:
        return [s.partition for s in self.steps if s.partition is not None]

    def succeed(self, answer: Any) -> None:
        self.status, self.reason = SUCCESS, None
        self.final_answer = canonical_text(answer)

    def fail(self, reason: str) -> None:
        assert reason in FAIL_REASONS, reason
        self.status, self.reason = FAILED, reason

    def error_free(self) -> bool:
        return all(s.ok and not s.errors and not s.format_retries for s in self.steps)

    # -- persistence ------------------------------------------------------
    def records(self) -> list[dict]:
        head = {"type": "header", "task_id": self.task_id, "strategy": self.strategy,
                "config_hash": self.config_hash, "query": self.query,
                "plan": self.plan.to_dict() if self.plan else None,
                "plan_usage": self.plan_usage.to_dict()}
        tail = {"type": "result", "status": self.status, "reason": self.reason,
                "final_answer": self.final_answer, "flags": self.flags,
                "usage": self.usage.to_dict()}
        return [head] + [{"type": "step", **s.to_dict()} for s in self.steps] + [tail]

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in self.records())

    def save(self, path: Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Trace":
        trace: Trace | None = None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                plan = rec.get("plan")
                trace = cls(rec["task_id"], rec["strategy"], query=rec.get("query", ""),
                            plan=Plan(plan["analysis"], tuple(plan["steps"])) if plan else None,
                            plan_usage=Usage(**rec.get("plan_usage", {})),
                            config_hash=rec.get("config_hash", ""))
            elif kind == "step":
                assert trace is not None
                trace.steps.append(TraceStep.from_dict(rec))
            elif kind == "result":
                assert trace is not None
                trace.status, trace.reason = rec["status"], rec["reason"]
                trace.final_answer = rec["final_answer"]
                trace.flags = list(rec.get("flags", []))
        if trace is None:
            raise ValueError("trace has no header record")
        return trace

    @classmethod
    def load(cls, path: Path) -> "Trace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def pretty(trace: Trace) -> str:
    """Human-readable rendering used by the replay command."""
    lines = [f"task {trace.task_id}  strategy {trace.strategy}  status {trace.status}"
             + (f" ({trace.reason})" if trace.reason else "")]
    if trace.plan:
        lines.append(f"plan: {trace.plan.analysis}")
        lines += [f"  {s}" for s in trace.plan.steps]
    for s in trace.steps:
        tag = s.partition or "-"
        retry = f" retries(format={s.format_retries}, tool={s.tool_retries})" if (
            s.format_retries or s.tool_retries) else ""
        lines.append(f"[{s.index}] {tag} {s.action}({args_text(s.args)}) -> {s.observation}{retry}")
    lines.append(f"answer: {trace.final_answer}")
    u = trace.usage
    lines.append(f"tokens: prompt {u.prompt_tokens}, output {u.output_tokens}")
    return "\n".join(lines)


def args_text(args: dict[str, Any], order: list[str] | None = None) -> str:
    keys = [k for k in (order or []) if k in args] + [k for k in args if k not in (order or [])]
    return ", ".join(f"{k}={canonical_text(args[k])}" for k in keys)
