"""Domain model for data-aware finite state machines and their structural rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Union

INT = "int"
BOOL = "bool"
DATA_TYPES = (INT, BOOL)

# site index used for the constructor in errors, paths and verdicts
CTOR = -1


class DafsmError(Exception):
    pass


class UnknownState(DafsmError, KeyError):
    def __init__(self, state):
        super().__init__(state)
        self.state = state

    def __str__(self):
        return f"unknown state {self.state!r}"


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Var:
    """Reference to a state variable or data parameter.

    ``old`` marks the pre-assignment value of a state variable; it is only
    introduced by formula generation, never by the surface syntax.
    """

    name: str
    old: bool = False

    @property
    def symbol(self) -> str:
        return f"{self.name}_old" if self.old else self.name


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Forall:
    """Universal quantification over data parameters (formula generation only)."""

    params: tuple[tuple[str, str], ...]
    body: "Expr"


Expr = Union[IntLit, BoolLit, Var, Unary, Binary, Forall]

TRUE = BoolLit(True)
FALSE = BoolLit(False)

ARITH_OPS = ("+", "-", "*")
ORDER_OPS = ("<", "<=", ">", ">=")
EQ_OPS = ("==", "!=")
LOGIC_OPS = ("&&", "||", "=>")
BINARY_OPS = ARITH_OPS + ORDER_OPS + EQ_OPS + LOGIC_OPS


def conj(terms) -> Expr:
    terms = list(terms)
    if not terms:
        return TRUE
    out = terms[0]
    for t in terms[1:]:
        out = Binary("&&", out, t)
    return out


def disj(terms) -> Expr:
    terms = list(terms)
    if not terms:
        return FALSE
    out = terms[0]
    for t in terms[1:]:
        out = Binary("||", out, t)
    return out


def walk(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, Unary):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Forall):
        yield from walk(expr.body)


def variables(expr: Expr) -> set[str]:
    """Names (without the old marker) of every variable occurring in ``expr``."""
    return {e.name for e in walk(expr) if isinstance(e, Var)}


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Simultaneous substitution of unqualified variables by name."""
    if isinstance(expr, Var):
        if not expr.old and expr.name in mapping:
            return mapping[expr.name]
        return expr
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.operand, mapping))
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Forall):
        bound = {name for name, _ in expr.params}
        inner = {k: v for k, v in mapping.items() if k not in bound}
        return Forall(expr.params, substitute(expr.body, inner))
    return expr


# --------------------------------------------------------------------------
# Labels and machines
# --------------------------------------------------------------------------


class Kind(enum.Enum):
    FRESH = "fresh"  # p:R, a new participant joins with role R
    EXISTING = "existing"  # @p:R, some participant already holding R
    BOUND = "bound"  # p, bound earlier on the path


@dataclass(frozen=True)
class QualifiedParticipant:
    kind: Kind
    var: str
    role: str | None = None

    def __post_init__(self):
        if (self.role is None) != (self.kind is Kind.BOUND):
            raise ValueError(f"role must be given iff kind is not BOUND: {self}")

    @classmethod
    def fresh(cls, var, role):
        return cls(Kind.FRESH, var, role)

    @classmethod
    def existing(cls, var, role):
        return cls(Kind.EXISTING, var, role)

    @classmethod
    def bound(cls, var):
        return cls(Kind.BOUND, var)


@dataclass(frozen=True)
class Declaration:
    """``int _x`` / ``bool _x`` (data parameter) or ``p:R`` (participant parameter)."""

    name: str
    sort: str

    @property
    def is_party(self) -> bool:
        return self.sort not in DATA_TYPES


@dataclass(frozen=True)
class Assignment:
    lhs: str
    rhs: Expr


@dataclass(frozen=True)
class TransitionLabel:
    guard: Expr
    participant: QualifiedParticipant
    function: str
    decls: tuple[Declaration, ...] = ()
    assignments: tuple[Assignment, ...] = ()


@dataclass(frozen=True)
class ConstructorLabel:
    creator: str
    creator_role: str
    params: tuple[Declaration, ...] = ()
    init_assignments: tuple[Assignment, ...] = ()

    @property
    def participant(self) -> QualifiedParticipant:
        return QualifiedParticipant.fresh(self.creator, self.creator_role)

    @property
    def decls(self):
        return self.params

    @property
    def assignments(self):
        return self.init_assignments

    @property
    def guard(self):
        return TRUE


@dataclass(frozen=True)
class Transition:
    source: str
    label: TransitionLabel
    target: str


Step = Union[Transition, ConstructorLabel]


@dataclass(frozen=True)
class Dafsm:
    states: tuple[str, ...]
    initial: str
    accepting: frozenset[str]
    coordinator: str
    constructor: ConstructorLabel
    transitions: tuple[Transition, ...]
    state_vars: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def build(cls, initial, accepting, coordinator, constructor, transitions, states=None):
        """Assemble a machine, inferring the state set and state variable types."""
        transitions = tuple(transitions)
        if states is None:
            seen = {initial: None}
            for t in transitions:
                seen.setdefault(t.source)
                seen.setdefault(t.target)
            states = tuple(seen)
        return cls(
            states=tuple(states),
            initial=initial,
            accepting=frozenset(accepting),
            coordinator=coordinator,
            constructor=constructor,
            transitions=transitions,
            state_vars=infer_state_vars(constructor, transitions),
        )

    @cached_property
    def _outgoing(self) -> dict[str, list[int]]:
        out = {s: [] for s in self.states}
        for i, t in enumerate(self.transitions):
            out.setdefault(t.source, []).append(i)
        return out

    def outgoing_indices(self, state: str) -> list[int]:
        if state not in self._outgoing or state not in self.states:
            raise UnknownState(state)
        return self._outgoing[state]

    def step(self, index: int) -> Step:
        return self.constructor if index == CTOR else self.transitions[index]

    def label(self, index: int):
        return self.constructor if index == CTOR else self.transitions[index].label


def outgoing(machine: Dafsm, state: str) -> list[Transition]:
    return [machine.transitions[i] for i in machine.outgoing_indices(state)]


# --------------------------------------------------------------------------
# Typing
# --------------------------------------------------------------------------


def _result_type(expr: Expr, env: Mapping[str, str]) -> str | None:
    if isinstance(expr, IntLit):
        return INT
    if isinstance(expr, BoolLit):
        return BOOL
    if isinstance(expr, Var):
        return env.get(expr.name)
    if isinstance(expr, Unary):
        return INT if expr.op == "-" else BOOL
    if isinstance(expr, Binary):
        return INT if expr.op in ARITH_OPS else BOOL
    return BOOL


def infer_state_vars(constructor: ConstructorLabel, transitions) -> dict[str, str]:
    """Type every assigned state variable from its right-hand sides.

    The first assignment that determines a type wins; conflicts are left for
    ``validate_structure`` to report.
    """
    labels = [constructor] + [t.label for t in transitions]
    pending = []
    for lab in labels:
        params = {d.name: d.sort for d in lab.decls if not d.is_party}
        for a in lab.assignments:
            pending.append((a, params))
    known: dict[str, str] = {}
    changed = True
    while changed:
        changed = False
        for a, params in pending:
            if a.lhs in known:
                continue
            ty = _result_type(a.rhs, {**known, **params})
            if ty is not None:
                known[a.lhs] = ty
                changed = True
    # order by first assignment for stable output
    order = []
    for a, _ in pending:
        if a.lhs in known and a.lhs not in order:
            order.append(a.lhs)
    return {name: known[name] for name in order}


@dataclass(frozen=True)
class StructuralError:
    index: int | None  # transition index, CTOR, or None for machine-level
    rule: str
    symbol: str
    message: str

    def __str__(self):
        where = {None: "machine", CTOR: "constructor"}.get(self.index, f"transition {self.index}")
        return f"{where}: {self.rule}: {self.message}"


class _Checker:
    def __init__(self, index, params, state_vars, errors):
        self.index = index
        self.params = params
        self.state_vars = state_vars
        self.errors = errors

    def error(self, rule, symbol, message):
        self.errors.append(StructuralError(self.index, rule, symbol, message))

    def type_of(self, expr: Expr) -> str | None:
        if isinstance(expr, IntLit):
            return INT
        if isinstance(expr, BoolLit):
            return BOOL
        if isinstance(expr, Var):
            name = expr.name
            if name.startswith("_"):
                if name not in self.params:
                    self.error("UndeclaredParam", name, f"data parameter {name} is not declared")
                    return None
                return self.params[name]
            if name not in self.state_vars:
                self.error("UnknownVariable", name, f"{name} is not a state variable")
                return None
            return self.state_vars[name]
        if isinstance(expr, Unary):
            want = INT if expr.op == "-" else BOOL
            self._expect(expr.operand, want, expr.op)
            return want
        if isinstance(expr, Binary):
            op = expr.op
            if op in ARITH_OPS or op in ORDER_OPS:
                self._expect(expr.left, INT, op)
                self._expect(expr.right, INT, op)
                return INT if op in ARITH_OPS else BOOL
            if op in EQ_OPS:
                lt, rt = self.type_of(expr.left), self.type_of(expr.right)
                if lt and rt and lt != rt:
                    self.error("TypeError", op, f"operands of {op} have types {lt} and {rt}")
                return BOOL
            self._expect(expr.left, BOOL, op)
            self._expect(expr.right, BOOL, op)
            return BOOL
        raise TypeError(f"unexpected expression node {expr!r}")

    def _expect(self, expr, want, op):
        got = self.type_of(expr)
        if got is not None and got != want:
            self.error("TypeError", op, f"operand of {op} must be {want}, got {got}")


# identifiers that clash with SMT-LIB builtins once emitted
_RESERVED = {
    "and", "or", "not", "xor", "ite", "distinct", "let", "forall", "exists", "as", "par",
    "div", "mod", "abs", "true", "false", "Int", "Bool", "Real",
}  # fmt: skip


def _bad_name(name: str) -> bool:
    return "__" in name or name.endswith("_old") or name in _RESERVED


def _check_label(index, lab, state_vars, errors):
    seen = set()
    for d in lab.decls:
        if d.name in seen:
            errors.append(StructuralError(index, "DuplicateDecl", d.name, f"parameter {d.name} declared twice"))
        seen.add(d.name)
        if d.is_party == d.name.startswith("_") or _bad_name(d.name):
            errors.append(StructuralError(index, "BadName", d.name, f"illegal parameter name {d.name}"))
    params = {d.name: d.sort for d in lab.decls if not d.is_party}
    chk = _Checker(index, params, state_vars, errors)
    if isinstance(lab, TransitionLabel):
        ty = chk.type_of(lab.guard)
        if ty is not None and ty != BOOL:
            errors.append(StructuralError(index, "TypeError", "guard", f"guard has type {ty}, expected bool"))
    assigned = set()
    for a in lab.assignments:
        if a.lhs in assigned:
            errors.append(StructuralError(index, "DuplicateAssignment", a.lhs, f"{a.lhs} assigned twice"))
        assigned.add(a.lhs)
        if a.lhs.startswith("_") or _bad_name(a.lhs):
            errors.append(StructuralError(index, "BadName", a.lhs, f"cannot assign to {a.lhs}"))
            continue
        ty = chk.type_of(a.rhs)
        want = state_vars.get(a.lhs)
        if want is None:
            errors.append(StructuralError(index, "UnknownVariable", a.lhs, f"cannot infer a type for {a.lhs}"))
        elif ty is not None and ty != want:
            errors.append(StructuralError(index, "TypeError", a.lhs, f"{a.lhs} has type {want}, assigned {ty}"))


def validate_structure(machine: Dafsm) -> list[StructuralError]:
    """Return every violation of the per-transition well-typedness rules."""
    errors: list[StructuralError] = []
    states = set(machine.states)
    if machine.initial not in states:
        errors.append(StructuralError(None, "UnknownState", machine.initial, "initial state not in states"))
    for s in sorted(machine.accepting - states):
        errors.append(StructuralError(None, "UnknownState", s, f"accepting state {s} not in states"))

    ctor = machine.constructor
    if ctor.creator.startswith("_") or _bad_name(ctor.creator):
        errors.append(StructuralError(CTOR, "BadName", ctor.creator, f"illegal participant name {ctor.creator}"))
    _check_label(CTOR, ctor, machine.state_vars, errors)

    for i, t in enumerate(machine.transitions):
        for s in (t.source, t.target):
            if s not in states:
                errors.append(StructuralError(i, "UnknownState", s, f"state {s} not in states"))
        var = t.label.participant.var
        if var.startswith("_") or _bad_name(var):
            errors.append(StructuralError(i, "BadName", var, f"illegal participant name {var}"))
        _check_label(i, t.label, machine.state_vars, errors)

    # a participant variable holds at most one role
    # (both sites are reported so the error points at whichever one is wrong)
    roles: dict[str, tuple[int, str]] = {}
    reported = set()
    for i, var, role in _role_bindings(machine):
        j, first = roles.setdefault(var, (i, role))
        if first != role:
            if (j, var) not in reported:
                reported.add((j, var))
                errors.append(
                    StructuralError(j, "RoleConflict", var, f"{var} bound with role {first} but also with role {role}")
                )
            errors.append(
                StructuralError(i, "RoleConflict", var, f"{var} bound with role {role} but also with role {first}")
            )
    return errors


def _role_bindings(machine: Dafsm):
    labels = [(CTOR, machine.constructor)] + [(i, t.label) for i, t in enumerate(machine.transitions)]
    for i, lab in labels:
        qp = lab.participant
        if qp.kind is not Kind.BOUND:
            yield i, qp.var, qp.role
        for d in lab.decls:
            if d.is_party:
                yield i, d.name, d.sort
