"""Reader and writer for the line-oriented ``.daf`` format.

A file has one constructor line, any number of transition lines and a
trailing accept declaration::

    _ o:O > starts c(int _price) {price := _price} q0
    q0 {_offer > 0} b:B > c.makeOffer(int _offer) {offer := _offer} q1
    q1 o > c.acceptOffer() q2
    accept q2

``//`` starts a comment. Guards equal to ``True`` and empty assignment
blocks may be omitted.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .core import (
    CTOR,
    DATA_TYPES,
    Assignment,
    Binary,
    BoolLit,
    ConstructorLabel,
    Dafsm,
    Declaration,
    Expr,
    IntLit,
    Kind,
    QualifiedParticipant,
    Transition,
    TransitionLabel,
    Unary,
    Var,
    validate_structure,
)

KEYWORDS = {"accept", "starts", "int", "bool", "true", "false", "True", "False"}


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    start: int  # 1-based column, inclusive
    end: int  # exclusive

    def __str__(self):
        return f"{self.line}:{self.start}"


@dataclass(frozen=True)
class ParseError:
    kind: str  # lexical | grammar | duplicate-constructor | unknown-qualifier | structure
    message: str
    span: SourceSpan

    def __str__(self):
        return f"{self.span}: {self.kind} error: {self.message}"


class DafsmSyntaxError(Exception):
    """Raised by :func:`load` / :func:`parse_or_raise` carrying every ParseError."""

    def __init__(self, errors, filename=None):
        self.errors = list(errors)
        self.filename = filename
        super().__init__("\n".join(self.format()))

    def format(self):
        prefix = f"{self.filename}:" if self.filename else ""
        return [f"{prefix}{e}" for e in self.errors]


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|=>|<=|>=|==|!=|&&|\|\||[<>+\-*!(){},;:.@=])
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | bad | eol
    text: str
    span: SourceSpan


def tokenize(line: str, lineno: int) -> list[Token]:
    code = line.split("//", 1)[0]
    out = []
    for m in _TOKEN_RE.finditer(code):
        kind = m.lastgroup
        if kind == "ws":
            continue
        out.append(Token(kind, m.group(), SourceSpan(lineno, m.start() + 1, m.end() + 1)))
    end = len(code.rstrip()) + 1
    out.append(Token("eol", "", SourceSpan(lineno, end, end + 1)))
    return out


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Fail(Exception):
    def __init__(self, error: ParseError):
        self.error = error


_CMP = {"<", "<=", ">", ">=", "==", "!=", "="}


class _LineParser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eol":
            self.pos += 1
        return t

    def fail(self, message, tok=None, kind="grammar"):
        tok = tok or self.tok
        if tok.kind == "bad" and kind == "grammar":
            kind, message = "lexical", f"unexpected character {tok.text!r}"
        raise _Fail(ParseError(kind, message, tok.span))

    def at(self, text) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def expect(self, text) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of line"
            self.fail(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self, what="identifier", allow_keyword=False) -> Token:
        t = self.tok
        if t.kind != "ident" or (not allow_keyword and t.text in KEYWORDS):
            self.fail(f"expected {what}, found {t.text or 'end of line'!r}")
        return self.advance()

    def end(self):
        if self.tok.kind != "eol":
            self.fail(f"unexpected {self.tok.text!r}")

    # -- pieces -----------------------------------------------------------

    def qparty(self) -> QualifiedParticipant:
        t = self.tok
        if self.at("@"):
            self.advance()
            var = self.ident("participant variable").text
            self.expect(":")
            return QualifiedParticipant.existing(var, self.ident("role").text)
        if t.kind in ("op", "bad") and self.peek().kind == "ident":
            self.fail(f"unknown qualifier {t.text!r}", t, kind="unknown-qualifier")
        var = self.ident("participant").text
        if self.at(":"):
            self.advance()
            return QualifiedParticipant.fresh(var, self.ident("role").text)
        return QualifiedParticipant.bound(var)

    def decls(self) -> tuple[Declaration, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                t = self.tok
                if t.kind == "ident" and t.text in DATA_TYPES:
                    self.advance()
                    name = self.ident("parameter name")
                    if not name.text.startswith("_"):
                        self.fail("data parameter names must start with '_'", name)
                    out.append(Declaration(name.text, t.text))
                else:
                    name = self.ident("parameter declaration")
                    self.expect(":")
                    role = self.ident("role")
                    if name.text.startswith("_"):
                        self.fail("participant parameter names must not start with '_'", name)
                    out.append(Declaration(name.text, role.text))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        return tuple(out)

    def assigns(self) -> tuple[Assignment, ...]:
        self.expect("{")
        out = []
        while True:
            lhs = self.ident("assigned variable")
            self.expect(":=")
            out.append(Assignment(lhs.text, self.expr()))
            if not self.at(";"):
                break
            self.advance()
        self.expect("}")
        return tuple(out)

    # -- expressions ------------------------------------------------------

    def expr(self) -> Expr:
        left = self.disj()
        if self.at("=>"):
            self.advance()
            return Binary("=>", left, self.expr())
        return left

    def disj(self):
        left = self.conj()
        while self.at("||"):
            self.advance()
            left = Binary("||", left, self.conj())
        return left

    def conj(self):
        left = self.cmp()
        while self.at("&&"):
            self.advance()
            left = Binary("&&", left, self.cmp())
        return left

    def cmp(self):
        left = self.add()
        if self.tok.kind == "op" and self.tok.text in _CMP:
            op = self.advance().text
            left = Binary("==" if op == "=" else op, left, self.add())
            if self.tok.kind == "op" and self.tok.text in _CMP:
                self.fail("comparisons do not chain; use parentheses")
        return left

    def add(self):
        left = self.mul()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            left = Binary(op, left, self.mul())
        return left

    def mul(self):
        left = self.unary()
        while self.at("*"):
            self.advance()
            left = Binary("*", left, self.unary())
        return left

    def unary(self):
        if self.at("!"):
            self.advance()
            return Unary("!", self.unary())
        if self.at("-"):
            self.advance()
            if self.tok.kind == "num":
                return IntLit(-int(self.advance().text))
            return Unary("-", self.unary())
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return IntLit(int(t.text))
        if t.kind == "ident":
            if t.text in ("true", "True"):
                self.advance()
                return BoolLit(True)
            if t.text in ("false", "False"):
                self.advance()
                return BoolLit(False)
            if t.text in KEYWORDS:
                self.fail(f"unexpected keyword {t.text!r}")
            self.advance()
            return Var(t.text)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"expected expression, found {t.text or 'end of line'!r}")

    # -- lines ------------------------------------------------------------

    def constructor(self):
        self.advance()  # "_"
        creator = self.ident("creator").text
        self.expect(":")
        role = self.ident("role").text
        self.expect(">")
        kw = self.ident("'starts'", allow_keyword=True)
        if kw.text != "starts":
            self.fail("expected 'starts'", kw)
        coord = self.ident("coordinator name")
        params = self.decls()
        assigns = self.assigns() if self.at("{") else ()
        target = self.ident("state").text
        self.end()
        return coord, ConstructorLabel(creator, role, params, assigns), target

    def transition(self):
        source = self.ident("state").text
        guard = BoolLit(True)
        if self.at("{"):
            self.advance()
            guard = self.expr()
            self.expect("}")
        qp = self.qparty()
        self.expect(">")
        coord = self.ident("coordinator name")
        self.expect(".")
        fn = self.ident("function name").text
        decls = self.decls()
        assigns = self.assigns() if self.at("{") else ()
        target = self.ident("state").text
        self.end()
        return coord, Transition(source, TransitionLabel(guard, qp, fn, decls, assigns), target)

    def accept(self):
        self.advance()
        states = []
        while self.tok.kind != "eol":
            states.append(self.ident("state"))
        return states


def _symbol_span(line_text: str, lineno: int, symbol: str) -> SourceSpan:
    code = line_text.split("//", 1)[0]
    m = re.search(rf"(?<![A-Za-z0-9_']){re.escape(symbol)}(?![A-Za-z0-9_'])", code) if symbol else None
    if m:
        return SourceSpan(lineno, m.start() + 1, m.end() + 1)
    stripped = code.rstrip()
    lead = len(stripped) - len(stripped.lstrip())
    return SourceSpan(lineno, lead + 1, max(len(stripped), lead + 1) + 1)


def parse(text: str, *, validate: bool = True) -> Dafsm | list[ParseError]:
    """Parse ``.daf`` text into a structurally valid machine, or return the errors.

    With ``validate=False`` only the grammar is enforced.
    """
    lines = text.splitlines()
    errors: list[ParseError] = []
    ctor = None
    ctor_line = None
    initial = None
    transitions: list[Transition] = []
    t_lines: list[int] = []
    accept_toks = None
    accept_line = None
    missing_ctor = False
    coords: list[Token] = []  # constructor's first, when present

    for lineno, raw in enumerate(lines, start=1):
        toks = tokenize(raw, lineno)
        if toks[0].kind == "eol":
            continue
        p = _LineParser(toks)
        first = toks[0]
        try:
            if accept_toks is not None:
                p.fail("nothing may follow the accept declaration", first)
            if first.kind == "ident" and first.text == "_":
                coord, label, target = p.constructor()
                if ctor is not None or missing_ctor:
                    if missing_ctor:
                        p.fail("constructor must be the first line", first)
                    errors.append(
                        ParseError(
                            "duplicate-constructor", f"constructor already given on line {ctor_line}", first.span
                        )
                    )
                    continue
                ctor, ctor_line, initial = label, lineno, target
                coords.insert(0, coord)
            elif first.kind == "ident" and first.text == "accept":
                accept_toks, accept_line = p.accept(), lineno
            else:
                if ctor is None and not missing_ctor:
                    missing_ctor = True
                    errors.append(ParseError("grammar", "missing constructor line before first transition", first.span))
                coord, t = p.transition()
                coords.append(coord)
                transitions.append(t)
                t_lines.append(lineno)
        except _Fail as f:
            errors.append(f.error)

    # majority wins so that a single misspelt line is the one reported
    if coords:
        votes = Counter(tok.text for tok in coords)
        coordinator = max(votes, key=lambda name: (votes[name], name == coords[0].text))
        tied = sum(1 for n in votes.values() if n == votes[coordinator]) > 1
        for tok in coords:
            if tok.text != coordinator or (tied and tok is coords[0]):
                errors.append(
                    ParseError("grammar", f"unknown coordinator {tok.text!r}, expected {coordinator!r}", tok.span)
                )

    if ctor is None and not missing_ctor:
        errors.append(ParseError("grammar", "missing constructor line", SourceSpan(1, 1, 2)))
    if accept_toks is None:
        last = len(lines) or 1
        errors.append(ParseError("grammar", "missing accept declaration", SourceSpan(last, 1, 2)))
    if errors:
        return sorted(errors, key=lambda e: (e.span.line, e.span.start))

    machine = Dafsm.build(initial, [t.text for t in accept_toks], coordinator, ctor, transitions)
    if not validate:
        return machine
    known = set(machine.states)
    for tok in accept_toks:
        if tok.text not in known:
            errors.append(ParseError("structure", f"UnknownState: accepting state {tok.text} does not occur", tok.span))
    line_of = {CTOR: ctor_line, None: accept_line, **dict(enumerate(t_lines))}
    for err in validate_structure(machine):
        if err.rule == "UnknownState" and err.index is None:
            continue  # reported above with a precise span
        lineno = line_of[err.index]
        span = _symbol_span(lines[lineno - 1], lineno, err.symbol)
        errors.append(ParseError("structure", f"{err.rule}: {err.message}", span))
    if errors:
        return sorted(errors, key=lambda e: (e.span.line, e.span.start))
    return machine


def parse_or_raise(text: str, filename=None) -> Dafsm:
    result = parse(text)
    if isinstance(result, list):
        raise DafsmSyntaxError(result, filename)
    return result


def load(path) -> Dafsm:
    with open(path, encoding="utf-8") as fh:
        return parse_or_raise(fh.read(), str(path))


# --------------------------------------------------------------------------
# Printer
# --------------------------------------------------------------------------

_PREC = {"=>": 1, "||": 2, "&&": 3, "<": 4, "<=": 4, ">": 4, ">=": 4, "==": 4, "!=": 4, "+": 5, "-": 5, "*": 6}


def format_expr(expr: Expr, parent: int = 0) -> str:
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, BoolLit):
        return "True" if expr.value else "False"
    if isinstance(expr, Var):
        return expr.symbol
    if isinstance(expr, Unary):
        inner = format_expr(expr.operand, 7)
        if isinstance(expr.operand, (IntLit, Unary)) and (inner.startswith("-") or expr.op == "-"):
            inner = f"({format_expr(expr.operand)})"
        return expr.op + inner
    if isinstance(expr, Binary):
        prec = _PREC[expr.op]
        if expr.op == "=>":
            lp, rp = prec + 1, prec
        elif prec == 4:
            lp = rp = prec + 1
        else:
            lp, rp = prec, prec + 1
        text = f"{format_expr(expr.left, lp)} {expr.op} {format_expr(expr.right, rp)}"
        return f"({text})" if prec < parent else text
    raise TypeError(f"cannot print {expr!r}")


def format_party(qp: QualifiedParticipant) -> str:
    if qp.kind is Kind.FRESH:
        return f"{qp.var}:{qp.role}"
    if qp.kind is Kind.EXISTING:
        return f"@{qp.var}:{qp.role}"
    return qp.var


def format_decls(decls) -> str:
    return ", ".join(f"{d.name}:{d.sort}" if d.is_party else f"{d.sort} {d.name}" for d in decls)


def format_assigns(assigns) -> str:
    return "{" + "; ".join(f"{a.lhs} := {format_expr(a.rhs)}" for a in assigns) + "}"


def format_label(label: TransitionLabel, coordinator: str) -> str:
    parts = []
    if label.guard != BoolLit(True):
        parts.append("{" + format_expr(label.guard) + "}")
    parts.append(f"{format_party(label.participant)} > {coordinator}.{label.function}({format_decls(label.decls)})")
    if label.assignments:
        parts.append(format_assigns(label.assignments))
    return " ".join(parts)


def format_constructor(ctor: ConstructorLabel, coordinator: str) -> str:
    text = f"{ctor.creator}:{ctor.creator_role} > starts {coordinator}({format_decls(ctor.params)})"
    if ctor.init_assignments:
        text += " " + format_assigns(ctor.init_assignments)
    return text


def print_machine(machine: Dafsm) -> str:
    out = [f"_ {format_constructor(machine.constructor, machine.coordinator)} {machine.initial}"]
    for t in machine.transitions:
        out.append(f"{t.source} {format_label(t.label, machine.coordinator)} {t.target}")
    accepting = [s for s in machine.states if s in machine.accepting]
    accepting += sorted(machine.accepting - set(accepting))
    out.append(" ".join(["accept", *accepting]))
    return "\n".join(out) + "\n"
