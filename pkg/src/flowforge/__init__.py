"""Workflow synthesis from agent traces, with an evaluation harness."""

__version__ = "0.1.0"
