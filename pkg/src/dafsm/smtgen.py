"""Solver formulas for consistency and strong determinism.

Every formula is produced in negated form: a satisfying assignment is a
counterexample, so ``sat`` means the check fails.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import (
    ARITH_OPS,
    BOOL,
    CTOR,
    INT,
    ORDER_OPS,
    Binary,
    BoolLit,
    Dafsm,
    Expr,
    Forall,
    IntLit,
    Kind,
    QualifiedParticipant,
    Unary,
    Var,
    conj,
    disj,
    substitute,
)

CONSISTENT = "Consistent"
DETERMINISTIC = "Deterministic"


class InternalError(Exception):
    pass


def mangle(param: str, index: int) -> str:
    return f"{param}__{index}"


def conflict(a: QualifiedParticipant, b: QualifiedParticipant) -> bool:
    """The # relation: True when the two callers are necessarily different participants."""
    ka, kb = a.kind, b.kind
    if Kind.FRESH in (ka, kb) and ka != kb:
        return True
    if ka is Kind.EXISTING and kb is Kind.EXISTING:
        return a.role != b.role
    return False


@dataclass(frozen=True)
class ProgressConstraint:
    state: str
    formula: Expr
    params: dict = field(default_factory=dict)  # mangled outgoing parameter -> sort


def _data_params(label):
    return [d for d in label.decls if not d.is_party]


def progress_constraint(machine: Dafsm, state: str) -> ProgressConstraint:
    if state in machine.accepting:
        machine.outgoing_indices(state)  # raises on unknown state
        return ProgressConstraint(state, BoolLit(True))
    guards, params = [], {}
    for i in machine.outgoing_indices(state):
        lab = machine.transitions[i].label
        ren = {}
        for d in _data_params(lab):
            ren[d.name] = Var(mangle(d.name, i))
            params[mangle(d.name, i)] = d.sort
        guards.append(substitute(lab.guard, ren))
    return ProgressConstraint(state, disj(guards), params)


@dataclass(frozen=True)
class CheckFormula:
    kind: str  # CONSISTENT | DETERMINISTIC
    site: str
    transitions: tuple[int, ...]
    assertion: Expr
    free_vars: tuple[tuple[str, str], ...]
    note: str = ""

    @property
    def order(self):
        return (min(self.transitions), 0 if self.kind == CONSISTENT else 1, self.site)


def _free(expr: Expr, bound=frozenset()):
    """Free symbols of ``expr`` in first-occurrence order."""
    out: dict[str, None] = {}

    def go(e, bound):
        if isinstance(e, Var):
            if e.symbol not in bound:
                out.setdefault(e.symbol)
        elif isinstance(e, Unary):
            go(e.operand, bound)
        elif isinstance(e, Binary):
            go(e.left, bound)
            go(e.right, bound)
        elif isinstance(e, Forall):
            go(e.body, bound | {n for n, _ in e.params})

    go(expr, bound)
    return list(out)


def _declare(expr: Expr, sorts: dict) -> tuple[tuple[str, str], ...]:
    return tuple((name, sorts[name]) for name in _free(expr))


def _state_sorts(machine: Dafsm) -> dict:
    sorts = dict(machine.state_vars)
    sorts.update({f"{k}_old": v for k, v in machine.state_vars.items()})
    return sorts


def site_name(index: int) -> str:
    return "ctor" if index == CTOR else f"t{index}"


def build_consistency(machine: Dafsm, index: int, *, quantify_targets: bool = True) -> CheckFormula:
    """Negated consistency check for transition ``index`` (or ``CTOR``).

    The assertion is ``G' & gA & !g_target``: the guard and the assignment
    right-hand sides read assigned variables through their ``_old`` copies,
    unassigned variables keep a single symbol (no frame equalities).  With
    ``quantify_targets`` the parameters of the target's outgoing transitions
    are universally bound inside the negation, i.e. the target must offer
    *some* parameter choice enabling a move.  Without it they stay free, the
    strictly conservative reading.
    """
    label = machine.label(index)
    target = machine.initial if index == CTOR else machine.transitions[index].target
    rename = {a.lhs: Var(a.lhs, old=True) for a in label.assignments}
    guard = substitute(label.guard, rename)
    g_assign = conj(Binary("==", Var(a.lhs), substitute(a.rhs, rename)) for a in label.assignments)
    pc = progress_constraint(machine, target)
    negated: Expr = Unary("!", pc.formula)
    if quantify_targets and pc.params:
        negated = Forall(tuple(pc.params.items()), negated)
    assertion = Binary("&&", Binary("&&", guard, g_assign), negated)

    sorts = _state_sorts(machine)
    sorts.update({d.name: d.sort for d in _data_params(label)})
    sorts.update(pc.params)
    return CheckFormula(CONSISTENT, site_name(index), (index,), assertion, _declare(assertion, sorts))


def _signature(label):
    return tuple(d.sort for d in label.decls)


def _phi(guards) -> Expr:
    clauses = []
    for k, g in enumerate(guards):
        others = [Unary("!", h) for j, h in enumerate(guards) if j != k]
        clauses.append(Binary("=>", g, conj(others)))
    return conj(clauses)


def determinism_groups(machine: Dafsm, state: str) -> list[tuple[tuple[int, ...], bool]]:
    """Groups of same-function transitions out of ``state`` whose callers are not #-related.

    Returns ``(indices, unified)`` pairs. A connected component of the
    not-# relation that is a clique with one signature becomes a single
    group; otherwise every not-# pair is its own group, so no pair of
    #-related callers ever shares a group and every other pair is covered.
    ``unified`` is False for pairs whose signatures differ.
    """
    by_fn: dict[str, list[int]] = {}
    for i in machine.outgoing_indices(state):
        by_fn.setdefault(machine.transitions[i].label.function, []).append(i)
    groups = []
    for members in by_fn.values():
        labels = {i: machine.transitions[i].label for i in members}
        edges = {
            (a, b)
            for x, a in enumerate(members)
            for b in members[x + 1 :]
            if not conflict(labels[a].participant, labels[b].participant)
        }
        if not edges:
            continue
        # connected components over not-# edges
        parent = {i: i for i in members}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in edges:
            parent[find(a)] = find(b)
        comps: dict[int, list[int]] = {}
        for i in members:
            comps.setdefault(find(i), []).append(i)
        for comp in sorted(comps.values()):
            if len(comp) < 2:
                continue
            pairs = [(a, b) for x, a in enumerate(comp) for b in comp[x + 1 :]]
            sigs = {_signature(labels[i]) for i in comp}
            if all(p in edges for p in pairs) and len(sigs) == 1:
                groups.append((tuple(comp), True))
            else:
                for a, b in pairs:
                    if (a, b) in edges:
                        groups.append(((a, b), _signature(labels[a]) == _signature(labels[b])))
    return groups


def build_determinism(machine: Dafsm, state: str) -> list[CheckFormula]:
    out = []
    sorts = _state_sorts(machine)
    for group, unified in determinism_groups(machine, state):
        labels = [machine.transitions[i].label for i in group]
        guards = []
        if unified:
            first = labels[0]
            for lab in labels:
                ren = {d.name: Var(f.name) for d, f in zip(lab.decls, first.decls) if not d.is_party}
                guards.append(substitute(lab.guard, ren))
            sorts.update({d.name: d.sort for d in _data_params(first)})
        else:
            for i, lab in zip(group, labels):
                ren = {d.name: Var(mangle(d.name, i)) for d in _data_params(lab)}
                sorts.update({mangle(d.name, i): d.sort for d in _data_params(lab)})
                guards.append(substitute(lab.guard, ren))
        assertion = Unary("!", _phi(guards))
        fn = labels[0].function
        note = "" if unified else "signature mismatch"
        out.append(CheckFormula(DETERMINISTIC, f"{state}/{fn}", group, assertion, _declare(assertion, sorts), note))
    return out


def build_all(machine: Dafsm, *, quantify_targets: bool = True) -> list[CheckFormula]:
    formulas = [build_consistency(machine, CTOR, quantify_targets=quantify_targets)]
    formulas += [
        build_consistency(machine, i, quantify_targets=quantify_targets) for i in range(len(machine.transitions))
    ]
    for s in machine.states:
        formulas += build_determinism(machine, s)
    return sorted(formulas, key=lambda f: f.order)


# --------------------------------------------------------------------------
# SMT-LIB 2 output
# --------------------------------------------------------------------------

_SIMPLE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_SMT_OPS = {
    "+": "+", "-": "-", "*": "*", "<": "<", "<=": "<=", ">": ">", ">=": ">=",
    "==": "=", "&&": "and", "||": "or", "=>": "=>",
}  # fmt: skip
_SORT = {INT: "Int", BOOL: "Bool"}


def smt_symbol(name: str) -> str:
    return name if _SIMPLE.match(name) else "|" + name.replace("|", "") + "|"


def to_sexpr(expr: Expr) -> str:
    if isinstance(expr, IntLit):
        return str(expr.value) if expr.value >= 0 else f"(- {-expr.value})"
    if isinstance(expr, BoolLit):
        return "true" if expr.value else "false"
    if isinstance(expr, Var):
        return smt_symbol(expr.symbol)
    if isinstance(expr, Unary):
        return f"({'-' if expr.op == '-' else 'not'} {to_sexpr(expr.operand)})"
    if isinstance(expr, Binary):
        if expr.op == "!=":
            return f"(not (= {to_sexpr(expr.left)} {to_sexpr(expr.right)}))"
        return f"({_SMT_OPS[expr.op]} {to_sexpr(expr.left)} {to_sexpr(expr.right)})"
    if isinstance(expr, Forall):
        binders = " ".join(f"({smt_symbol(n)} {_SORT[s]})" for n, s in expr.params)
        return f"(forall ({binders}) {to_sexpr(expr.body)})"
    raise TypeError(expr)


def _is_ground(expr: Expr) -> bool:
    return not _free(expr)


def logic_for(expr: Expr) -> str:
    nonlinear = False
    quantified = False
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Binary):
            if e.op == "*" and not (_is_ground(e.left) or _is_ground(e.right)):
                nonlinear = True
            stack += [e.left, e.right]
        elif isinstance(e, Unary):
            stack.append(e.operand)
        elif isinstance(e, Forall):
            quantified = True
            stack.append(e.body)
    return ("" if quantified else "QF_") + ("NIA" if nonlinear else "LIA")


def _bounded(expr: Expr, lo: int, hi: int) -> Expr:
    """Restrict every quantified integer to ``[lo, hi]``."""
    if isinstance(expr, Forall):
        ints = [Var(n) for n, s in expr.params if s == INT]
        box = conj(Binary("&&", Binary("<=", IntLit(lo), v), Binary("<=", v, IntLit(hi))) for v in ints)
        return Forall(expr.params, Binary("=>", box, _bounded(expr.body, lo, hi)))
    if isinstance(expr, Unary):
        return Unary(expr.op, _bounded(expr.operand, lo, hi))
    if isinstance(expr, Binary):
        return Binary(expr.op, _bounded(expr.left, lo, hi), _bounded(expr.right, lo, hi))
    return expr


def _context_sorts(expr: Expr, declared: dict) -> None:
    """Raise InternalError when a free symbol is used at a sort other than its declared one."""

    def want(e, sort, bound):
        if isinstance(e, Var):
            if e.symbol in bound:
                have = bound[e.symbol]
            elif e.symbol in declared:
                have = declared[e.symbol]
            else:
                raise InternalError(f"undeclared symbol {e.symbol}")
            if sort is not None and have != sort:
                raise InternalError(f"symbol {e.symbol} declared {have} but used as {sort}")
            return have
        if isinstance(e, IntLit):
            return INT
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, Unary):
            s = INT if e.op == "-" else BOOL
            want(e.operand, s, bound)
            return s
        if isinstance(e, Forall):
            want(e.body, BOOL, {**bound, **dict(e.params)})
            return BOOL
        if e.op in ARITH_OPS or e.op in ORDER_OPS:
            want(e.left, INT, bound)
            want(e.right, INT, bound)
            return INT if e.op in ARITH_OPS else BOOL
        if e.op in ("==", "!="):
            ls = want(e.left, None, bound)
            want(e.right, ls, bound)
            return BOOL
        want(e.left, BOOL, bound)
        want(e.right, BOOL, bound)
        return BOOL

    want(expr, BOOL, {})


@dataclass(frozen=True)
class SolverScript:
    formula: CheckFormula
    logic: str
    text: str


def to_script(formula: CheckFormula, domain: tuple[int, int] | None = None) -> SolverScript:
    """Render one check as a stand-alone SMT-LIB 2 script.

    ``domain`` confines every integer, free or quantified, to a closed
    interval; it exists so answers can be compared with exhaustive
    enumeration over that interval.
    """
    declared = dict(formula.free_vars)
    if len(declared) != len(formula.free_vars):
        raise InternalError(f"duplicate declaration in {formula.site}")
    _context_sorts(formula.assertion, declared)
    body = formula.assertion
    if domain is not None:
        lo, hi = domain
        body = _bounded(body, lo, hi)
        box = [
            Binary("&&", Binary("<=", IntLit(lo), Var(n)), Binary("<=", Var(n), IntLit(hi)))
            for n, s in formula.free_vars
            if s == INT
        ]
        body = conj([*box, body])
    logic = logic_for(body)
    lines = [f"(set-logic {logic})", "(set-option :produce-models true)"]
    lines += [f"(declare-const {smt_symbol(n)} {_SORT[s]})" for n, s in formula.free_vars]
    lines.append(f"(assert {to_sexpr(body)})")
    lines.append("(check-sat)")
    return SolverScript(formula, logic, "\n".join(lines) + "\n")


@dataclass
class Manifest:
    scripts: list[SolverScript]

    def __len__(self):
        return len(self.scripts)

    def __iter__(self):
        return iter(self.scripts)


def assemble_model(formulas, domain=None) -> Manifest:
    """One script per formula, ordered by (transition index, check kind)."""
    return Manifest([to_script(f, domain) for f in sorted(formulas, key=lambda f: f.order)])
