"""Plain-Python reference solutions for the bundled desk tasks."""

from __future__ import annotations

import math


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return str(int(v)) if float(v).is_integer() else repr(float(v))
    if isinstance(v, list):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    return str(v).strip()


def hypotenuse(a, b):
    return round(math.hypot(a, b), 3)


def piecewise(x):
    return round(math.sqrt(x), 3) if x >= 0 else x * x


def iterative_sqrt(n, x=None):
    x = n if x is None else x
    while abs(x * x - n) >= 0.001:
        x = (x + n / x) / 2
    return round(x, 3)


def filtered_mean(xs, threshold):
    kept = [v for v in xs if v > threshold]
    return round(sum(kept) / len(kept), 2) if kept else 0


def double_until(xs, limit):
    xs = list(xs)
    while max(xs) < limit:
        xs = [v * 2 for v in xs]
    return sorted(xs)


def palindrome(text):
    return text.upper() if text.lower() == text.lower()[::-1] else len(text)


def pad(text, width, pad):
    while len(text) < width:
        text += pad
    return text


def threshold_gate(score, cutoff, flags):
    return all(flags) if score > cutoff else any(flags)


def toggle(state, k):
    for _ in range(int(k)):
        state = not state
    return state


ORACLES = {
    "math_hypotenuse": lambda d: hypotenuse(d["a"], d["b"]),
    "math_piecewise": lambda d: piecewise(d["x"]),
    "math_iterative_sqrt": lambda d: iterative_sqrt(d["n"], d.get("x")),
    "data_sum_list": lambda d: sum(d["xs"]),
    "data_filtered_mean": lambda d: filtered_mean(d["xs"], d["threshold"]),
    "data_double_until": lambda d: double_until(d["xs"], d["limit"]),
    "string_shout": lambda d: d["text"].upper() + "!",
    "string_palindrome": lambda d: palindrome(d["text"]),
    "string_pad": lambda d: pad(d["text"], d["width"], d["pad"]),
    "logic_xor_implies": lambda d: (not (d["a"] != d["b"])) or d["c"],
    "logic_threshold_gate": lambda d: threshold_gate(d["score"], d["cutoff"], d["flags"]),
    "logic_toggle": lambda d: toggle(d["state"], d["k"]),
}


def oracle(instance_id: str, inputs: dict) -> str:
    return fmt(ORACLES[instance_id](inputs))
