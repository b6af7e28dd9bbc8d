"""Acyclic paths and the caller checks (closedness, empty-role freedom).

A path is a tuple of step indices whose first element is ``CTOR``; the
remaining elements index ``machine.transitions``.  Acyclic means no state is
visited twice, the initial state included.
"""

from __future__ import annotations

import threading
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterator

from .core import CTOR, Dafsm, Kind, Step, Transition, UnknownState

Path = tuple[int, ...]


def binds(step: Step, p: str) -> bool:
    """True iff the step (transition or constructor) binds participant variable ``p``."""
    label = step.label if isinstance(step, Transition) else step
    qp = label.participant
    if qp.kind is not Kind.BOUND and qp.var == p:
        return True
    return any(d.is_party and d.name == p for d in label.decls)


def expands(step: Step, role: str) -> bool:
    label = step.label if isinstance(step, Transition) else step
    qp = label.participant
    if qp.kind is Kind.FRESH and qp.role == role:
        return True
    return any(d.is_party and d.sort == role for d in label.decls)


def _binders(label):
    qp = label.participant
    vars_ = [qp.var] if qp.kind is not Kind.BOUND else []
    roles = [qp.role] if qp.kind is Kind.FRESH else []
    for d in label.decls:
        if d.is_party:
            vars_.append(d.name)
            roles.append(d.sort)
    return vars_, roles


def _coreachable(machine: Dafsm, targets) -> set[str]:
    preds: dict[str, list[str]] = {}
    for t in machine.transitions:
        preds.setdefault(t.target, []).append(t.source)
    seen = set(targets)
    todo = deque(seen)
    while todo:
        s = todo.popleft()
        for p in preds.get(s, ()):
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


def reachable_states(machine: Dafsm) -> set[str]:
    seen = {machine.initial}
    todo = deque(seen)
    while todo:
        s = todo.popleft()
        for i in machine.outgoing_indices(s):
            tgt = machine.transitions[i].target
            if tgt not in seen:
                seen.add(tgt)
                todo.append(tgt)
    return seen


def unreachable_transitions(machine: Dafsm) -> list[int]:
    live = reachable_states(machine)
    return [i for i, t in enumerate(machine.transitions) if t.source not in live]


def iter_acyclic_paths_to(machine: Dafsm, state: str) -> Iterator[Path]:
    """Lazily yield the acyclic paths from the initial state to ``state``."""
    if state not in machine.states:
        raise UnknownState(state)
    if state == machine.initial:
        yield (CTOR,)
        return
    useful = _coreachable(machine, [state])
    if machine.initial not in useful:
        return
    trans = machine.transitions
    out = machine._outgoing
    path = [CTOR]
    on_path = {machine.initial}
    stack = [iter(out[machine.initial])]
    while stack:
        for i in stack[-1]:
            tgt = trans[i].target
            if tgt in on_path or tgt not in useful:
                continue
            path.append(i)
            if tgt == state:
                yield tuple(path)
                path.pop()
                continue
            on_path.add(tgt)
            stack.append(iter(out[tgt]))
            break
        else:
            stack.pop()
            if len(path) > 1:
                on_path.discard(trans[path.pop()].target)


def acyclic_paths_to(machine: Dafsm, state: str) -> list[Path]:
    return list(iter_acyclic_paths_to(machine, state))


def count_acyclic_paths(machine: Dafsm) -> int:
    """Number of acyclic paths from the initial state to any state (the bare constructor path included)."""
    trans = machine.transitions
    out = machine._outgoing
    on_path = {machine.initial}
    trail = []
    stack = [iter(out[machine.initial])]
    count = 1
    while stack:
        for i in stack[-1]:
            tgt = trans[i].target
            if tgt in on_path:
                continue
            count += 1
            on_path.add(tgt)
            trail.append(tgt)
            stack.append(iter(out[tgt]))
            break
        else:
            stack.pop()
            if trail:
                on_path.discard(trail.pop())
    return count


def format_path(machine: Dafsm, path: Path) -> str:
    states = [machine.initial] + [machine.transitions[i].target for i in path[1:]]
    names = ["ctor"] + [f"{machine.transitions[i].label.function}" for i in path[1:]]
    hops = [f"{states[0]}"]
    for name, st in zip(names[1:], states[1:]):
        hops.append(f"-{name}-> {st}")
    return "ctor > " + " ".join(hops)


# --------------------------------------------------------------------------
# Caller checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CallerCacheKey:
    source: str
    kind: Kind
    var: str
    role: str | None


class CallerCache:
    """Memo of caller-check outcomes: key -> witness path (or None when the key passes).

    Safe for concurrent insert-or-get; identical keys always map to identical
    values so last write wins harmlessly.
    """

    def __init__(self):
        self._data: dict[CallerCacheKey, Path | None] = {}
        self._lock = threading.Lock()
        self.hits = 0

    def __contains__(self, key):
        return key in self._data

    def get(self, key):
        with self._lock:
            self.hits += 1
            return self._data[key]

    def put(self, key, value):
        with self._lock:
            self._data[key] = value

    def __len__(self):
        return len(self._data)


@dataclass(frozen=True)
class ClosednessViolation:
    transition: int
    var: str
    witness: Path


@dataclass(frozen=True)
class EmptyRoleViolation:
    transition: int
    var: str
    role: str
    witness: Path


def _key_for(t: Transition) -> CallerCacheKey | None:
    qp = t.label.participant
    if qp.kind is Kind.FRESH:
        return None
    return CallerCacheKey(t.source, qp.kind, qp.var, qp.role)


def _scan(machine: Dafsm, keys: set[CallerCacheKey], stop: bool) -> dict[CallerCacheKey, Path | None]:
    """Decide every key with one depth-first sweep over the acyclic paths.

    A key fails on the first path reaching its source without a justifying
    binder.  With ``stop`` the sweep ends at the first failure and the
    returned dict only holds keys decided so far.
    """
    by_state: dict[str, list[CallerCacheKey]] = {}
    for k in keys:
        by_state.setdefault(k.source, []).append(k)
    for ks in by_state.values():
        ks.sort(key=lambda k: (k.kind.value, k.var, k.role or ""))
    result: dict[CallerCacheKey, Path | None] = {}
    failed: dict[CallerCacheKey, Path] = {}
    if not by_state:
        return result

    trans = machine.transitions
    out = machine._outgoing
    binders = [_binders(t.label) for t in trans]
    bound: Counter = Counter()
    expanded: Counter = Counter()
    cv, cr = _binders(machine.constructor)
    bound.update(cv)
    expanded.update(cr)
    useful = _coreachable(machine, by_state)

    path = [CTOR]
    on_path = {machine.initial}

    def visit(state) -> bool:
        for k in by_state.get(state, ()):
            if k in failed:
                continue
            ok = bound[k.var] > 0 if k.kind is Kind.BOUND else expanded[k.role] > 0
            if not ok:
                failed[k] = tuple(path)
                if stop:
                    return True
        return False

    if machine.initial in useful and visit(machine.initial):
        return dict(failed)
    if machine.initial in useful:
        stack = [iter(out[machine.initial])]
        while stack:
            for i in stack[-1]:
                tgt = trans[i].target
                if tgt in on_path or tgt not in useful:
                    continue
                path.append(i)
                on_path.add(tgt)
                bv, br = binders[i]
                bound.update(bv)
                expanded.update(br)
                if visit(tgt):
                    return dict(failed)
                stack.append(iter(out[tgt]))
                break
            else:
                stack.pop()
                if len(path) > 1:
                    i = path.pop()
                    on_path.discard(trans[i].target)
                    bv, br = binders[i]
                    bound.subtract(bv)
                    expanded.subtract(br)
    for k in keys:
        result[k] = failed.get(k)
    return result


@dataclass
class CallerReport:
    closed: list[ClosednessViolation]
    empty_role: list[EmptyRoleViolation]
    checked: list[int]  # transitions whose caller needed checking, in order
    complete: bool  # False when a stop-mode sweep ended early


def caller_check(machine: Dafsm, *, stop: bool = False, cache: CallerCache | None = None, kinds=None) -> CallerReport:
    """Closedness and empty-role freedom for every Bound / Existing caller."""
    kinds = set(kinds or (Kind.BOUND, Kind.EXISTING))
    todo = []
    for i, t in enumerate(machine.transitions):
        k = _key_for(t)
        if k is not None and k.kind in kinds:
            todo.append((i, k))
    known: dict[CallerCacheKey, Path | None] = {}
    pending = set()
    for _, k in todo:
        if cache is not None and k in cache:
            known[k] = cache.get(k)
        else:
            pending.add(k)
    complete = True
    if pending:
        fresh = _scan(machine, pending, stop)
        complete = len(fresh) == len(pending)
        if cache is not None and complete:
            for k, v in fresh.items():
                cache.put(k, v)
        known.update(fresh)

    # undecided keys (stop mode) are absent from ``known`` and yield no violation
    closed, empty = [], []
    for i, k in todo:
        w = known.get(k)
        if w is None:
            continue
        if k.kind is Kind.BOUND:
            closed.append(ClosednessViolation(i, k.var, w))
        else:
            empty.append(EmptyRoleViolation(i, k.var, k.role, w))
    return CallerReport(closed, empty, [i for i, _ in todo], complete)


def check_closed(machine: Dafsm, *, cache: CallerCache | None = None, stop: bool = False) -> list[ClosednessViolation]:
    return caller_check(machine, stop=stop, cache=cache, kinds=[Kind.BOUND]).closed


def check_empty_role_free(
    machine: Dafsm, *, cache: CallerCache | None = None, stop: bool = False
) -> list[EmptyRoleViolation]:
    return caller_check(machine, stop=stop, cache=cache, kinds=[Kind.EXISTING]).empty_role
