"""Concrete syntax: a keyword-first parenthesised grammar.

Every compound form starts with a distinct keyword::

    (let x 5 (out x))
    (letrec ((f (fun n ints inv T A (appf f n)))) (table))
    (if c (cop lt 1 2) (table) falses)

Effects are written ``T``, ``A`` or ``{P,N,R,W,IO}``; comments run from
``;`` to the end of the line.  Machine-only forms print with ``#``-prefixed
spellings for traces and are not accepted by the parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from aleph.effects import Effect, format_effect, parse_effect
from aleph.syntax import (
    HL, AllQuant, Anys, AppE, AppF, Arr, BinaryOp, Bop, Chk, CompareOp, Cop,
    Decidability, Diagnostic, DomainKind, Falses, FixedTable, Frame, From,
    Funs, FxThen, If, IfM, In, IntLit, Ints, Join, Lambda, Len, Let, Letrec,
    New, Out, PtrTo, Ptrs, PtrValue, Read, Stage, TableEntry, Tabs, Term,
    TupleValue, UnaryOp, Unify, Uop, Var, Write, scoped_children,
    well_formed_source,
)

ATOM_KEYWORDS = {
    "falses": Falses, "anys": Anys, "ints": Ints, "tabs": Tabs,
    "funs": Funs, "ptrs": Ptrs, "in": In,
}
FORM_KEYWORDS = {
    "uop", "bop", "cop", "table", "arr", "fun", "funall", "len", "appe",
    "appf", "from", "new", "read", "write", "ptrto", "out", "unify", "join",
    "let", "letrec", "if", "stage", "fxthen", "tuple",
}
KEYWORDS = set(ATOM_KEYWORDS) | FORM_KEYWORDS

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")
_INT = re.compile(r"-?[0-9]+\Z")


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


# -- reader ------------------------------------------------------------------


@dataclass
class SAtom:
    text: str
    line: int
    column: int


@dataclass
class SList:
    items: list
    line: int
    column: int


SExpr = Union[SAtom, SList]


def _diag(message: str, node_or_pos) -> Diagnostic:
    if isinstance(node_or_pos, (SAtom, SList)):
        return Diagnostic(message, line=node_or_pos.line, column=node_or_pos.column)
    line, column = node_or_pos
    return Diagnostic(message, line=line, column=column)


def read_sexprs(text: str) -> list[SExpr]:
    """Tokenise and bracket-match ``text``; raises ParseError on imbalance."""
    stack: list[SList] = [SList([], 1, 1)]
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            col, i = col + 1, i + 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "(":
            stack.append(SList([], line, col))
            col, i = col + 1, i + 1
            continue
        if ch == ")":
            if len(stack) == 1:
                raise ParseError([_diag("unbalanced ')'", (line, col))])
            done = stack.pop()
            stack[-1].items.append(done)
            col, i = col + 1, i + 1
            continue
        start_col = col
        if ch == "{":
            j = text.find("}", i)
            if j < 0 or "\n" in text[i:j]:
                raise ParseError([_diag("unterminated effect literal", (line, col))])
            j += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();{":
                j += 1
        stack[-1].items.append(SAtom(text[i:j], line, start_col))
        col += j - i
        i = j
    if len(stack) > 1:
        open_list = stack[-1]
        raise ParseError([_diag("unbalanced '(': missing ')'", open_list)])
    return stack[0].items


# -- conversion --------------------------------------------------------------


class _Converter:
    def __init__(self):
        self.positions: dict[int, tuple[int, int]] = {}

    def fail(self, message, node):
        raise ParseError([_diag(message, node)])

    def mark(self, obj, node):
        self.positions[id(obj)] = (node.line, node.column)
        return obj

    def ident(self, node) -> str:
        if not isinstance(node, SAtom) or not _IDENT.match(node.text) or node.text in KEYWORDS:
            self.fail(f"expected a variable, got {_show_sexpr(node)}", node)
        return node.text

    def integer(self, node) -> int:
        if not isinstance(node, SAtom) or not _INT.match(node.text):
            self.fail(f"expected an integer, got {_show_sexpr(node)}", node)
        return int(node.text)

    def effect(self, node) -> Effect:
        if isinstance(node, SAtom):
            try:
                return parse_effect(node.text)
            except ValueError as exc:
                self.fail(str(exc), node)
        self.fail(f"expected an effect, got {_show_sexpr(node)}", node)

    def enum(self, node, enum_type, what):
        if isinstance(node, SAtom):
            for member in enum_type:
                if member.value == node.text:
                    return member
        choices = "|".join(m.value for m in enum_type)
        self.fail(f"expected {what} ({choices}), got {_show_sexpr(node)}", node)

    def arity(self, node: SList, count: int, shape: str) -> None:
        if len(node.items) != count + 1:
            self.fail(f"wrong arity: expected {shape}", node)

    def term(self, node) -> Term:
        return self.mark(self._term(node), node)

    def _term(self, node) -> Term:
        if isinstance(node, SAtom):
            text = node.text
            if text in ATOM_KEYWORDS:
                return ATOM_KEYWORDS[text]()
            if _INT.match(text):
                return IntLit(int(text))
            if text in FORM_KEYWORDS:
                self.fail(f"keyword {text} must start a parenthesised form", node)
            return Var(self.ident(node))
        if not node.items:
            self.fail("empty form", node)
        head = node.items[0]
        if not isinstance(head, SAtom):
            self.fail("form must start with a keyword", node)
        kw = head.text
        args = node.items[1:]
        t = self.term
        match kw:
            case "uop":
                self.arity(node, 2, "(uop OP t)")
                return Uop(self.enum(args[0], UnaryOp, "unary operator"), t(args[1]))
            case "bop":
                self.arity(node, 3, "(bop OP t t)")
                return Bop(self.enum(args[0], BinaryOp, "binary operator"), t(args[1]), t(args[2]))
            case "cop":
                self.arity(node, 3, "(cop OP t t)")
                return Cop(self.enum(args[0], CompareOp, "comparison"), t(args[1]), t(args[2]))
            case "table":
                return FixedTable(tuple(self.entry(a) for a in args))
            case "arr":
                self.arity(node, 3, "(arr t x t)")
                return Arr(t(args[0]), self.ident(args[1]), t(args[2]))
            case "fun":
                return self.lambda_(node)
            case "funall":
                return self.allquant(node)
            case "len" | "from" | "read" | "ptrto" | "out":
                self.arity(node, 1, f"({kw} t)")
                cls = {"len": Len, "from": From, "read": Read, "ptrto": PtrTo, "out": Out}[kw]
                return cls(t(args[0]))
            case "appe" | "appf" | "new" | "write" | "unify" | "join":
                self.arity(node, 2, f"({kw} t t)")
                cls = {"appe": AppE, "appf": AppF, "new": New, "write": Write, "unify": Unify, "join": Join}[kw]
                return cls(t(args[0]), t(args[1]))
            case "let":
                self.arity(node, 3, "(let x t t)")
                return Let(self.ident(args[0]), t(args[1]), t(args[2]))
            case "letrec":
                self.arity(node, 2, "(letrec ((x v) ...) t)")
                if not isinstance(args[0], SList):
                    self.fail("expected a binding list", args[0])
                return Letrec(tuple(self.binding(b) for b in args[0].items), t(args[1]))
            case "if":
                self.arity(node, 4, "(if x t t t)")
                return If(self.ident(args[0]), t(args[1]), t(args[2]), t(args[3]))
            case "stage":
                self.arity(node, 4, "(stage FX D t t)")
                d = self.enum(args[1], Decidability, "decidability")
                return Stage(self.effect(args[0]), d, t(args[2]), t(args[3]))
            case "fxthen":
                self.arity(node, 2, "(fxthen FX t)")
                return FxThen(self.effect(args[0]), t(args[1]))
            case "tuple":
                self.fail("tuple values may only appear as letrec bindings", node)
            case _ if kw in ATOM_KEYWORDS:
                self.fail(f"{kw} takes no arguments", node)
        self.fail(f"unknown keyword {kw}", head)

    def entry(self, node) -> TableEntry:
        if not isinstance(node, SList) or len(node.items) != 3:
            self.fail("table entry must be (x i t)", node)
        x, i, body = node.items
        return TableEntry(self.ident(x), self.integer(i), self.term(body))

    def lambda_(self, node) -> Lambda:
        self.arity(node, 6, "(fun x t DK FX FX t)")
        x, dom, dk, f1, f2, body = node.items[1:]
        return Lambda(
            self.ident(x), self.term(dom), self.enum(dk, DomainKind, "domain kind"),
            self.effect(f1), self.effect(f2), self.term(body),
        )

    def allquant(self, node) -> AllQuant:
        self.arity(node, 8, "(funall x t t x t FX FX t)")
        x1, tdom, inst, x2, dom, f1, f2, body = node.items[1:]
        return AllQuant(
            self.ident(x1), self.term(tdom), self.term(inst), self.ident(x2),
            self.term(dom), self.effect(f1), self.effect(f2), self.term(body),
        )

    def binding(self, node):
        if not isinstance(node, SList) or len(node.items) != 2:
            self.fail("letrec binding must be (x v)", node)
        name, value = node.items
        return self.ident(name), self.mark(self.value(value), value)

    def value(self, node):
        kw = node.items[0].text if isinstance(node, SList) and node.items and isinstance(node.items[0], SAtom) else None
        match kw:
            case "tuple":
                entries = []
                for item in node.items[1:]:
                    if not isinstance(item, SList) or len(item.items) != 2:
                        self.fail("tuple entry must be (i x)", item)
                    entries.append((self.integer(item.items[0]), self.ident(item.items[1])))
                return TupleValue(tuple(entries))
            case "fun":
                return self.lambda_(node)
            case "funall":
                return self.allquant(node)
            case "new":
                self.arity(node, 2, "(new t x)")
                return PtrValue(self.term(node.items[1]), self.ident(node.items[2]))
        self.fail("letrec value must be (tuple ...), (fun ...), (funall ...) or (new t x)", node)


def parse(text: str, program: bool = False) -> Term:
    """Parse one term.  With ``program`` the term must also be closed.

    Raises ParseError carrying positioned diagnostics.
    """
    forms = read_sexprs(text)
    if len(forms) != 1:
        where = forms[1] if len(forms) > 1 else (1, 1)
        raise ParseError([_diag(f"expected exactly one term, found {len(forms)}", where)])
    conv = _Converter()
    term = conv.term(forms[0])
    problems = well_formed_source(term, program=program)
    if problems:
        raise ParseError([_locate(term, d, conv.positions, forms[0]) for d in problems])
    return term


def parse_program(text: str) -> Term:
    return parse(text, program=True)


def _locate(term, diag: Diagnostic, positions, root) -> Diagnostic:
    node = term
    line, column = positions.get(id(term), (root.line, root.column))
    for k in diag.path:
        node = scoped_children(node)[k][0]
        if id(node) in positions:
            line, column = positions[id(node)]
    return Diagnostic(diag.message, diag.path, line, column)


def _show_sexpr(node) -> str:
    if isinstance(node, SAtom):
        return repr(node.text)
    return "a list"


# -- printer -----------------------------------------------------------------


def _fx(e: Effect) -> str:
    return format_effect(e)


def show(t, limit: Optional[int] = None) -> str:
    """Single-line rendering; machine-only forms use ``#`` spellings.

    With ``limit`` rendering stops once that many characters are produced
    and the result ends in ``...``.
    """
    out: list[str] = []
    size = 0
    stack = [t]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            size += len(item)
            if limit is not None and size > limit:
                return "".join(out)[: max(limit - 3, 0)] + "..."
        else:
            stack.extend(reversed(_parts(item)))
    return "".join(out)


_ATOM_SPELLING = {Falses: "falses", Anys: "anys", Ints: "ints", Tabs: "tabs",
                  Funs: "funs", Ptrs: "ptrs", In: "in"}


def _parts(t) -> list:
    """One level of rendering: strings interleaved with subterms."""
    match t:
        case Var(name):
            return [name]
        case IntLit(v):
            return [str(v)]
        case Falses() | Anys() | Ints() | Tabs() | Funs() | Ptrs() | In():
            return [_ATOM_SPELLING[type(t)]]
        case Uop(op, a):
            return [f"(uop {op.value} ", a, ")"]
        case Bop(op, a, b):
            return [f"(bop {op.value} ", a, " ", b, ")"]
        case Cop(op, a, b):
            return [f"(cop {op.value} ", a, " ", b, ")"]
        case FixedTable(entries):
            out = ["(table"]
            for e in entries:
                out += [f" ({e.var} {e.index} ", e.term, ")"]
            return out + [")"]
        case Arr(n, x, body):
            return ["(arr ", n, f" {x} ", body, ")"]
        case Lambda(x, dom, dk, f1, f2, body):
            return [f"(fun {x} ", dom, f" {dk.value} {_fx(f1)} {_fx(f2)} ", body, ")"]
        case AllQuant(x1, tdom, inst, x2, dom, f1, f2, body):
            return [f"(funall {x1} ", tdom, " ", inst, f" {x2} ", dom,
                    f" {_fx(f1)} {_fx(f2)} ", body, ")"]
        case Len(a) | From(a) | Read(a) | PtrTo(a) | Out(a):
            return [f"({_UNARY_KEYWORD[type(t)]} ", a, ")"]
        case AppE(a, b) | AppF(a, b) | New(a, b) | Write(a, b) | Unify(a, b) | Join(a, b):
            return [f"({_BINARY_KEYWORD[type(t)]} ", a, " ", b, ")"]
        case Let(x, a, b):
            return [f"(let {x} ", a, " ", b, ")"]
        case Letrec(bindings, body):
            out = ["(letrec ("]
            for k, (x, v) in enumerate(bindings):
                out += [" (" if k else "(", f"{x} ", v, ")"]
            return out + [") ", body, ")"]
        case If(x, c, a, b):
            return [f"(if {x} ", c, " ", a, " ", b, ")"]
        case Stage(fx, d, a, b):
            return [f"(stage {_fx(fx)} {d.value} ", a, " ", b, ")"]
        case FxThen(fx, a):
            return [f"(fxthen {_fx(fx)} ", a, ")"]
        case TupleValue(entries):
            return ["(" + " ".join(["tuple"] + [f"({i} {x})" for i, x in entries]) + ")"]
        case PtrValue(ann, x):
            return ["(new ", ann, f" {x})"]
        case HL(label):
            return [str(label)]
        case IfM(x, c, a, saved, b):
            cells = ",".join(f"{pl}={cell.contents}" for pl, cell in saved.items())
            return [f"(#ifm {x} ", c, " ", a, f" {{{cells}}} ", b, ")"]
        case Frame(env, body, allowed):
            return [f"(#frame {env} ", body, f" {_fx(allowed)})"]
        case Chk(subject, ae, p, a, b):
            pairs = ",".join(f"({x},{y})" for x, y in sorted(ae))
            return [f"(#chk {subject} {{{pairs}}} ", p, " ", a, " ", b, ")"]
    raise TypeError(f"cannot print {t!r}")


_UNARY_KEYWORD = {Len: "len", From: "from", Read: "read", PtrTo: "ptrto", Out: "out"}
_BINARY_KEYWORD = {AppE: "appe", AppF: "appf", New: "new", Write: "write",
                   Unify: "unify", Join: "join"}


def print_term(t, width: int = 80, indent: int = 2) -> str:
    """Canonical layout: a form that fits in ``width`` stays on one line,
    otherwise its arguments go one per line, indented under the keyword."""
    return _layout(t, width, indent, 0)


def _layout(t, width: int, indent: int, col: int) -> str:
    flat = show(t)
    if col + len(flat) <= width or not flat.startswith("("):
        return flat
    head, parts = _split(t)
    if not parts:
        return flat
    pad = " " * (col + indent)
    lines = [f"({head}"]
    for part in parts:
        if isinstance(part, str):
            lines.append(pad + part)
        else:
            lines.append(pad + _layout_part(part, width, indent, col + indent))
    return "\n".join(lines) + ")"


def _split(t):
    """Keyword prefix and layout parts of a compound source term."""
    match t:
        case Uop(op, a):
            return f"uop {op.value}", [a]
        case Bop(op, a, b) | Cop(op, a, b):
            return f"{'bop' if isinstance(t, Bop) else 'cop'} {op.value}", [a, b]
        case FixedTable(entries):
            return "table", [_Entry(e) for e in entries]
        case Arr(n, x, body):
            return "arr", [n, x, body]
        case Lambda(x, dom, dk, f1, f2, body):
            return f"fun {x}", [dom, f"{dk.value} {_fx(f1)} {_fx(f2)}", body]
        case AllQuant(x1, tdom, inst, x2, dom, f1, f2, body):
            return f"funall {x1}", [tdom, inst, x2, dom, f"{_fx(f1)} {_fx(f2)}", body]
        case Len(a) | From(a) | Read(a) | PtrTo(a) | Out(a):
            return _UNARY_KEYWORD[type(t)], [a]
        case AppE(a, b) | AppF(a, b) | New(a, b) | Write(a, b) | Unify(a, b) | Join(a, b):
            return _BINARY_KEYWORD[type(t)], [a, b]
        case Let(x, a, b):
            return f"let {x}", [a, b]
        case Letrec(bindings, body):
            return "letrec", [_Bindings(bindings), body]
        case If(x, c, a, b):
            return f"if {x}", [c, a, b]
        case Stage(fx, d, a, b):
            return f"stage {_fx(fx)} {d.value}", [a, b]
        case FxThen(fx, a):
            return f"fxthen {_fx(fx)}", [a]
    return None, []


@dataclass(frozen=True)
class _Entry:
    entry: TableEntry


@dataclass(frozen=True)
class _Bindings:
    bindings: tuple


def _layout_part(part, width, indent, col):
    """Lay out one argument that starts at column ``col``."""
    if isinstance(part, _Entry):
        e = part.entry
        prefix = f"({e.var} {e.index} "
        return prefix + _layout(e.term, width, indent, col + len(prefix)) + ")"
    if isinstance(part, _Bindings):
        inner = []
        for x, v in part.bindings:
            prefix = f"({x} "
            inner.append(prefix + _layout(v, width, indent, col + 1 + len(prefix)) + ")")
        return "(" + ("\n" + " " * (col + 1)).join(inner) + ")"
    return _layout(part, width, indent, col)
