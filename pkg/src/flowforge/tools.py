"""Tool descriptors, the registry, and the builtin tool suites.

Three partitions: business tools (B) do task work, graph-construction tools (G)
mutate a bound :class:`~flowforge.graph.WorkflowGraph`, and the terminal
``finish`` tool ends a session.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Any, Callable, Iterable, Mapping

from . import graph as wg
from .values import canonical_text, normalize, tag_of

Executor = Callable[..., Any]

TYPE_TAGS = ("number", "text", "boolean", "list", "object", "any")


class Partition(enum.Enum):
    BUSINESS = "B"
    GRAPH = "G"
    TERMINAL = "T"


@dataclass(frozen=True)
class Param:
    name: str
    type: str
    description: str
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[Param, ...]
    returns: str
    partition: Partition = Partition.BUSINESS

    def signature(self) -> str:
        return f"{self.name}({', '.join(p.name for p in self.params)})"


class RegistryError(Exception):
    pass


class DuplicateTool(RegistryError):
    pass


class UnknownCategory(RegistryError):
    pass


class ToolError(Exception):
    """A failed tool call, carrying what the error-recovery prompt needs."""

    def __init__(self, tool: str, args: Mapping[str, Any], message: str, signature_info: str = ""):
        super().__init__(message)
        self.tool = tool
        self.call_args = dict(args)
        self.message = message
        self.signature_info = signature_info


class UnknownTool(ToolError):
    pass


class ArityOrNameMismatch(ToolError):
    pass


class DomainError(ValueError):
    """Raised by executors for inputs outside a tool's domain."""


def signature_info(spec: ToolSpec) -> str:
    lines = ["**Correct function signature**:", f"  {spec.signature()}", "  Parameters:"]
    lines += [f"    - {p.name}: {p.description}" for p in spec.params]
    lines.append(f"  Description: {spec.description}")
    return "\n".join(lines)


def render_spec(spec: ToolSpec) -> str:
    lines = [f"Name: {spec.name}", f"Description: {spec.description}", "Parameters:"]
    for p in spec.params:
        opt = "" if p.required else ", optional"
        lines.append(f"- {p.name} ({p.type}{opt}): {p.description}")
    lines.append(f"Returns: {spec.returns}")
    return "\n".join(lines)


_SCAN_NAME = re.compile(r"^Name: (\S+)$")
_SCAN_PARAM = re.compile(r"^- (\w+) \((\w+)(?:, optional)?\): ")


def scan_signatures(text: str) -> list[tuple[str, tuple[str, ...]]]:
    """Recover (tool name, parameter names) pairs from rendered signatures."""
    found: list[tuple[str, list[str]]] = []
    for line in text.splitlines():
        m = _SCAN_NAME.match(line)
        if m:
            found.append((m.group(1), []))
            continue
        m = _SCAN_PARAM.match(line)
        if m and found:
            found[-1][1].append(m.group(1))
    return [(name, tuple(params)) for name, params in found]


def _type_ok(tag: str, value: Any) -> bool:
    if tag == "any":
        return True
    if tag == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tag == "list":
        return isinstance(value, (list, tuple))
    return tag_of(value) == tag


class ToolRegistry:
    """Ordered collection of tools; immutable once a session starts using it."""

    def __init__(self, tools: Iterable[tuple[ToolSpec, Executor]] = ()):
        self._tools: dict[str, tuple[ToolSpec, Executor]] = {}
        for spec, fn in tools:
            self.register(spec, fn)

    def register(self, spec: ToolSpec, executor: Executor) -> None:
        if spec.name in self._tools:
            raise DuplicateTool(spec.name)
        for p in spec.params:
            if p.type not in TYPE_TAGS:
                raise RegistryError(f"{spec.name}.{p.name}: unknown type tag {p.type!r}")
        self._tools[spec.name] = (spec, executor)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    @property
    def names(self) -> list[str]:
        return list(self._tools)

    def spec(self, name: str) -> ToolSpec:
        return self._tools[name][0]

    def specs(self, partitions: Iterable[Partition] | None = None) -> list[ToolSpec]:
        keep = set(partitions) if partitions is not None else None
        return [s for s, _ in self._tools.values() if keep is None or s.partition in keep]

    def partition_of(self, name: str) -> Partition | None:
        entry = self._tools.get(name)
        return entry[0].partition if entry else None

    def view(self, partitions: Iterable[Partition]) -> "ToolRegistry":
        keep = set(partitions)
        return ToolRegistry((s, f) for s, f in self._tools.values() if s.partition in keep)

    def merged(self, other: "ToolRegistry") -> "ToolRegistry":
        return ToolRegistry(list(self._tools.values()) + list(other._tools.values()))

    def render_signatures(self, partitions: Iterable[Partition] | None = None) -> str:
        return "\n\n".join(render_spec(s) for s in self.specs(partitions))

    def execute(self, name: str, args: Mapping[str, Any]) -> Any:
        if name not in self._tools:
            avail = ", ".join(self.names)
            raise UnknownTool(name, args, f"unknown function {name!r}; available: {avail}")
        spec, fn = self._tools[name]
        sig = signature_info(spec)
        expected = {p.name for p in spec.params}
        required = {p.name for p in spec.params if p.required}
        unexpected = sorted(set(args) - expected)
        missing = sorted(required - set(args))
        if unexpected or missing:
            parts = []
            if unexpected:
                parts.append(f"unexpected parameter(s): {', '.join(unexpected)}")
            if missing:
                parts.append(f"missing parameter(s): {', '.join(missing)}")
            want = ", ".join(p.name for p in spec.params)
            raise ArityOrNameMismatch(name, args, f"{'; '.join(parts)} (expected: {want})", sig)
        for p in spec.params:
            if p.name in args and not _type_ok(p.type, args[p.name]):
                raise ToolError(name, args, f"parameter {p.name!r} expects {p.type}, "
                                            f"got {tag_of(args[p.name])}", sig)
        try:
            result = fn(**normalize(dict(args)))
        except ToolError:
            raise
        except (DomainError, ZeroDivisionError, OverflowError, TypeError, wg.GraphError) as exc:
            raise ToolError(name, args, str(exc) or type(exc).__name__, sig) from exc
        return normalize(result)


# --- builtin business suites ------------------------------------------------

def _p(name: str, type_: str, desc: str, required: bool = True) -> Param:
    return Param(name, type_, desc, required)


def _spec(name: str, desc: str, params: list[Param], returns: str,
          partition: Partition = Partition.BUSINESS) -> ToolSpec:
    return ToolSpec(name, desc, tuple(params), returns, partition)


def _as_int(x: float, what: str) -> int:
    if not float(x).is_integer():
        raise DomainError(f"{what} must be an integer, got {canonical_text(x)}")
    return int(x)


def _div(a: float, b: float) -> float:
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _sqrt(x: float) -> float:
    if x < 0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(x)


def round_half_even(x: float, digits: int) -> float:
    """Round the decimal literal of ``x`` half-to-even at ``digits`` places."""
    try:
        q = Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_EVEN)
    except InvalidOperation as exc:
        raise DomainError(f"cannot round {x!r}") from exc
    return float(q)


def _round_to(x: float, digits: float) -> float:
    return round_half_even(x, _as_int(digits, "digits"))


def _pow(base: float, exponent: float) -> float:
    if base == 0 and exponent < 0:
        raise DomainError("zero to a negative power")
    out = math.pow(base, exponent)
    return out


def _numbers(xs: list, what: str = "xs") -> list[float]:
    for x in xs:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise DomainError(f"{what} must contain only numbers")
    return [float(x) for x in xs]


def _booleans(xs: list) -> list[bool]:
    for x in xs:
        if not isinstance(x, bool):
            raise DomainError("values must contain only booleans")
    return list(xs)


def _sort_list(xs: list) -> list:
    tags = {tag_of(x) for x in xs}
    if len(tags) > 1 or tags - {"number", "text"}:
        raise DomainError("sort_list needs all numbers or all text")
    return sorted(xs)


def _nonempty(xs: list, fn: Callable) -> Any:
    if not xs:
        raise DomainError("empty list")
    return fn(_numbers(xs))


def _unique(xs: list) -> list:
    out: list = []
    for x in xs:
        if x not in out:
            out.append(x)
    return out


def _split(text: str, sep: str) -> list[str]:
    if sep == "":
        raise DomainError("separator must not be empty")
    return text.split(sep)


def _substring(text: str, start: float, end: float) -> str:
    return text[_as_int(start, "start"):_as_int(end, "end")]


def _math_suite() -> list[tuple[ToolSpec, Executor]]:
    n = "number"
    return [
        (_spec("add", "Add two numbers together",
               [_p("a", n, "First number to add"), _p("b", n, "Second number to add")],
               "The sum a + b"), lambda a, b: a + b),
        (_spec("sub", "Subtract the second number from the first",
               [_p("a", n, "Number to subtract from"), _p("b", n, "Number to subtract")],
               "The difference a - b"), lambda a, b: a - b),
        (_spec("mul", "Multiply two numbers",
               [_p("a", n, "First factor"), _p("b", n, "Second factor")],
               "The product a * b"), lambda a, b: a * b),
        (_spec("div", "Divide the first number by the second",
               [_p("a", n, "Dividend"), _p("b", n, "Divisor, must be non-zero")],
               "The quotient a / b"), _div),
        (_spec("sqrt", "Square root of a non-negative number",
               [_p("x", n, "Non-negative number")], "The square root of x"), _sqrt),
        (_spec("round_to", "Round a number to a given count of decimal places (half to even)",
               [_p("x", n, "Number to round"), _p("digits", n, "Decimal places, an integer")],
               "x rounded to digits places"), _round_to),
        (_spec("abs_diff", "Absolute difference of two numbers",
               [_p("a", n, "First number"), _p("b", n, "Second number")],
               "|a - b|"), lambda a, b: abs(a - b)),
        (_spec("pow", "Raise a number to a power",
               [_p("base", n, "The base"), _p("exponent", n, "The exponent")],
               "base ** exponent"), _pow),
    ]


def _data_suite() -> list[tuple[ToolSpec, Executor]]:
    lst, n = "list", "number"
    return [
        (_spec("sum_list", "Sum a list of numbers", [_p("xs", lst, "List of numbers")],
               "The sum of xs (0 for an empty list)"), lambda xs: math.fsum(_numbers(xs))),
        (_spec("sort_list", "Sort a list ascending", [_p("xs", lst, "List of numbers or of text")],
               "The sorted list"), _sort_list),
        (_spec("filter_gt", "Keep the numbers strictly greater than a threshold",
               [_p("xs", lst, "List of numbers"), _p("threshold", n, "Exclusive lower bound")],
               "The filtered list, order preserved"),
         lambda xs, threshold: [x for x in _numbers(xs) if x > threshold]),
        (_spec("map_scale", "Multiply every number in a list by a factor",
               [_p("xs", lst, "List of numbers"), _p("factor", n, "Scale factor")],
               "The scaled list"), lambda xs, factor: [x * factor for x in _numbers(xs)]),
        (_spec("max_of", "Largest number in a non-empty list", [_p("xs", lst, "List of numbers")],
               "The maximum"), lambda xs: _nonempty(xs, max)),
        (_spec("min_of", "Smallest number in a non-empty list", [_p("xs", lst, "List of numbers")],
               "The minimum"), lambda xs: _nonempty(xs, min)),
        (_spec("count", "Number of items in a list", [_p("xs", lst, "Any list")],
               "The length of xs"), lambda xs: float(len(xs))),
        (_spec("unique", "Drop repeated items, keeping first occurrences",
               [_p("xs", lst, "Any list")], "The de-duplicated list"), _unique),
    ]


def _string_suite() -> list[tuple[ToolSpec, Executor]]:
    t, n = "text", "number"
    return [
        (_spec("concat", "Concatenate two strings",
               [_p("a", t, "First string"), _p("b", t, "Second string")], "a followed by b"),
         lambda a, b: a + b),
        (_spec("split", "Split a string on a separator",
               [_p("text", t, "String to split"), _p("sep", t, "Non-empty separator")],
               "List of pieces"), _split),
        (_spec("upper", "Convert a string to upper case", [_p("text", t, "Input string")],
               "The upper-cased string"), lambda text: text.upper()),
        (_spec("lower", "Convert a string to lower case", [_p("text", t, "Input string")],
               "The lower-cased string"), lambda text: text.lower()),
        (_spec("reverse", "Reverse a string", [_p("text", t, "Input string")],
               "The reversed string"), lambda text: text[::-1]),
        (_spec("substring", "Slice a string from start (inclusive) to end (exclusive)",
               [_p("text", t, "Input string"), _p("start", n, "Start index, an integer"),
                _p("end", n, "End index, an integer")], "The slice"), _substring),
        (_spec("length", "Number of characters in a string", [_p("text", t, "Input string")],
               "The length"), lambda text: float(len(text))),
        (_spec("replace", "Replace every occurrence of a substring",
               [_p("text", t, "Input string"), _p("old", t, "Substring to replace"),
                _p("new", t, "Replacement")], "The rewritten string"),
         lambda text, old, new: text.replace(old, new) if old else text),
    ]


def _logic_suite() -> list[tuple[ToolSpec, Executor]]:
    b, lst = "boolean", "list"
    return [
        (_spec("and_all", "True when every value is true", [_p("values", lst, "List of booleans")],
               "Conjunction of values"), lambda values: all(_booleans(values))),
        (_spec("or_any", "True when any value is true", [_p("values", lst, "List of booleans")],
               "Disjunction of values"), lambda values: any(_booleans(values))),
        (_spec("not_val", "Logical negation", [_p("value", b, "A boolean")], "not value"),
         lambda value: not value),
        (_spec("xor", "Exclusive or", [_p("a", b, "First boolean"), _p("b", b, "Second boolean")],
               "a xor b"), lambda a, b: a != b),
        (_spec("implies", "Material implication", [_p("a", b, "Antecedent"), _p("b", b, "Consequent")],
               "(not a) or b"), lambda a, b: (not a) or b),
        (_spec("equals", "Whether two values are equal",
               [_p("a", "any", "First value"), _p("b", "any", "Second value")], "a == b"),
         lambda a, b: tag_of(a) == tag_of(b) and a == b),
        (_spec("greater", "Whether the first number is strictly greater",
               [_p("a", "number", "First number"), _p("b", "number", "Second number")], "a > b"),
         lambda a, b: a > b),
        (_spec("select_if", "Pick one of two values by a condition",
               [_p("cond", b, "Selector"), _p("a", "any", "Value when cond is true"),
                _p("b", "any", "Value when cond is false")], "a if cond else b"),
         lambda cond, a, b: a if cond else b),
    ]


CATEGORIES = {"math": _math_suite, "data": _data_suite, "string": _string_suite, "logic": _logic_suite}


def builtin_suite(category: str) -> list[tuple[ToolSpec, Executor]]:
    try:
        return CATEGORIES[category]()
    except KeyError:
        raise UnknownCategory(category) from None


def business_registry(categories: Iterable[str] = tuple(CATEGORIES),
                      names: Iterable[str] | None = None) -> ToolRegistry:
    """Registry of builtin business tools, optionally restricted to ``names``."""
    tools = [t for c in categories for t in builtin_suite(c)]
    if names is not None:
        wanted = list(names)
        by_name = {s.name: (s, f) for s, f in tools}
        missing = [n for n in wanted if n not in by_name]
        if missing:
            raise RegistryError(f"unknown builtin tool(s): {', '.join(missing)}")
        tools = [by_name[n] for n in wanted]
    return ToolRegistry(tools)


BUILTIN_NAMES = frozenset(s.name for c in CATEGORIES for s, _ in builtin_suite(c))


# --- graph construction and terminal tools ------------------------------------

GRAPH_TOOL_NAMES = ("add_start_node", "add_function_node", "add_condition_node", "add_edge", "add_end_node")


def graph_tools(graph: wg.WorkflowGraph) -> list[tuple[ToolSpec, Executor]]:
    """The five builder tools, bound to ``graph``."""
    g = Partition.GRAPH

    def add_start_node(initial_data=None):
        node_id = graph.add_start_node(initial_data or {})
        return f"Added start node '{node_id}' with data keys {sorted((initial_data or {}))}"

    def add_function_node(node_id, function, input_keys, output_key):
        for p, k in input_keys.items():
            if not isinstance(k, str):
                raise DomainError(f"input_keys[{p!r}] must name a data key (text)")
        graph.add_function_node(node_id, function, input_keys, output_key)
        return f"Added function node '{node_id}'"

    def add_condition_node(node_id, condition_expr):
        graph.add_condition_node(node_id, condition_expr)
        return f"Added condition node '{node_id}'"

    def add_edge(from_node, to_node, label=None):
        edge = graph.add_edge(from_node, to_node, label)
        return f"Added edge {edge}"

    def add_end_node(result_key=None):
        node_id = graph.add_end_node(result_key)
        return f"Added end node '{node_id}'"

    return [
        (_spec("add_start_node", "Create the start node holding the workflow's initial data",
               [_p("initial_data", "object", "Map of data key to initial value", False)],
               "Confirmation with the start node id (__start__)", g), add_start_node),
        (_spec("add_function_node", "Add a node that calls a business function",
               [_p("node_id", "text", "Unique node id"),
                _p("function", "text", "Name of the business function to call"),
                _p("input_keys", "object", "Map of function parameter name to data key"),
                _p("output_key", "text", "Data key that receives the result")],
               "Confirmation with the node id", g), add_function_node),
        (_spec("add_condition_node", "Add a branching node evaluated over data keys",
               [_p("node_id", "text", "Unique node id"),
                _p("condition_expr", "text", "Boolean expression, e.g. 'i >= 10 and err < 0.001'")],
               "Confirmation with the node id", g), add_condition_node),
        (_spec("add_edge", "Connect two nodes; edges leaving a condition node need label 'true' or 'false'",
               [_p("from_node", "text", "Source node id"), _p("to_node", "text", "Target node id"),
                _p("label", "text", "Branch label for condition edges: 'true' or 'false'", False)],
               "Confirmation with the edge", g), add_edge),
        (_spec("add_end_node", "Create the end node",
               [_p("result_key", "text", "Data key holding the final answer; defaults to the last written key", False)],
               "Confirmation with the end node id (__end__)", g), add_end_node),
    ]


FINISH_SPEC = _spec("finish", "Finish the task and report the final answer",
                    [_p("answer", "any", "The final answer")],
                    "Ends the session", Partition.TERMINAL)


def _finish(answer):
    return canonical_text(answer)


def session_registry(business: ToolRegistry | None = None,
                     graph: wg.WorkflowGraph | None = None) -> ToolRegistry:
    """Tool set for one session: optional B tools, optional G tools, always ``finish``."""
    tools: list[tuple[ToolSpec, Executor]] = []
    if business is not None:
        tools += [(s, business._tools[s.name][1]) for s in business.specs([Partition.BUSINESS])]
    if graph is not None:
        tools += graph_tools(graph)
    tools.append((FINISH_SPEC, _finish))
    return ToolRegistry(tools)
