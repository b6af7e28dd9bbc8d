"""Graphviz rendering of a machine."""

from __future__ import annotations

from .core import Dafsm
from .dsl import format_constructor, format_label

PHANTOM = "__start"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(machine: Dafsm) -> str:
    lines = ["digraph dafsm {", "  rankdir=LR;", f"  {PHANTOM} [shape=point];"]
    for s in machine.states:
        shape = "doublecircle" if s in machine.accepting else "circle"
        lines.append(f"  {_quote(s)} [shape={shape}];")
    ctor = format_constructor(machine.constructor, machine.coordinator)
    lines.append(f"  {PHANTOM} -> {_quote(machine.initial)} [label={_quote(ctor)}];")
    for t in machine.transitions:
        label = format_label(t.label, machine.coordinator)
        lines.append(f"  {_quote(t.source)} -> {_quote(t.target)} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
