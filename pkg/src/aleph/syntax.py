"""Term language: source terms, letrec values and the machine-only forms.

Every term is an immutable dataclass.  Fun terms (``Lambda`` and
``AllQuant``) double as letrec values.  The machine-only forms ``IfM``,
``HL``, ``Frame`` and ``Chk`` reference heap structures defined in
:mod:`aleph.heap`; they never appear in parsed source.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Union

from aleph.effects import Effect

if TYPE_CHECKING:
    from aleph.heap import Env, HeadLabel, PointerHeap


class Decidability(enum.Enum):
    T = "T"
    F = "F"
    D = "D"


class DomainKind(enum.Enum):
    CONTRA = "contra"
    INV = "inv"
    GE = "ge"
    LE = "le"


class UnaryOp(enum.Enum):
    NEG = "neg"
    ABS = "abs"


class BinaryOp(enum.Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    MOD = "mod"


class CompareOp(enum.Enum):
    LT = "lt"
    LE = "le"
    GT = "gt"
    GE = "ge"
    NE = "ne"


class Term:
    __slots__ = ()


# -- source terms ------------------------------------------------------------


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Falses(Term):
    pass


@dataclass(frozen=True)
class Anys(Term):
    pass


@dataclass(frozen=True)
class IntLit(Term):
    value: int


@dataclass(frozen=True)
class Ints(Term):
    pass


@dataclass(frozen=True)
class Uop(Term):
    op: UnaryOp
    arg: Term


@dataclass(frozen=True)
class Bop(Term):
    op: BinaryOp
    left: Term
    right: Term


@dataclass(frozen=True)
class Cop(Term):
    op: CompareOp
    left: Term
    right: Term


@dataclass(frozen=True)
class TableEntry:
    var: str
    index: int
    term: Term


@dataclass(frozen=True)
class FixedTable(Term):
    entries: tuple[TableEntry, ...] = ()


@dataclass(frozen=True)
class Arr(Term):
    length: Term
    var: str
    body: Term


@dataclass(frozen=True)
class Tabs(Term):
    pass


@dataclass(frozen=True)
class Lambda(Term):
    param: str
    domain: Term
    dk: DomainKind
    dom_fx: Effect
    range_fx: Effect
    body: Term


@dataclass(frozen=True)
class AllQuant(Term):
    """``funall``: ``type_var`` ranges over ``type_domain`` and is computed at
    call time by ``instantiation`` from the actual argument ``param``."""

    type_var: str
    type_domain: Term
    instantiation: Term
    param: str
    domain: Term
    dom_fx: Effect
    range_fx: Effect
    body: Term


Fun = Union[Lambda, AllQuant]


@dataclass(frozen=True)
class Funs(Term):
    pass


@dataclass(frozen=True)
class Len(Term):
    arg: Term


@dataclass(frozen=True)
class AppE(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True)
class AppF(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True)
class From(Term):
    arg: Term


@dataclass(frozen=True)
class New(Term):
    type_ann: Term
    init: Term


@dataclass(frozen=True)
class Read(Term):
    ptr: Term


@dataclass(frozen=True)
class Write(Term):
    ptr: Term
    value: Term


@dataclass(frozen=True)
class PtrTo(Term):
    arg: Term


@dataclass(frozen=True)
class Ptrs(Term):
    pass


@dataclass(frozen=True)
class In(Term):
    pass


@dataclass(frozen=True)
class Out(Term):
    arg: Term


@dataclass(frozen=True)
class Unify(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Join(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Let(Term):
    var: str
    bound: Term
    body: Term


@dataclass(frozen=True)
class TupleValue:
    entries: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class PtrValue:
    type_ann: Term
    var: str


SourceValue = Union[TupleValue, Lambda, AllQuant, PtrValue]


@dataclass(frozen=True)
class Letrec(Term):
    bindings: tuple[tuple[str, SourceValue], ...]
    body: Term


@dataclass(frozen=True)
class If(Term):
    var: str
    cond: Term
    then: Term
    else_: Term


@dataclass(frozen=True)
class Stage(Term):
    fx: Effect
    d: Decidability
    left: Term
    right: Term


@dataclass(frozen=True)
class FxThen(Term):
    fx: Effect
    body: Term


# -- machine-only terms ------------------------------------------------------


@dataclass(frozen=True)
class IfM(Term):
    """A conditional in progress; ``saved`` is the pointer heap at entry."""

    var: str
    cond: Term
    then: Term
    saved: PointerHeap
    else_: Term


@dataclass(frozen=True)
class HL(Term):
    label: HeadLabel


@dataclass(frozen=True)
class Frame(Term):
    env: Env
    body: Term
    allowed: Effect


@dataclass(frozen=True)
class Chk(Term):
    """Test whether ``subject`` is among the values of ``pattern``."""

    subject: HeadLabel
    ae: frozenset
    pattern: Term
    then: Term
    else_: Term


SOURCE_TYPES = (
    Var, Falses, Anys, IntLit, Ints, Uop, Bop, Cop, FixedTable, Arr, Tabs,
    Lambda, AllQuant, Funs, Len, AppE, AppF, From, New, Read, Write, PtrTo,
    Ptrs, In, Out, Unify, Join, Let, Letrec, If, Stage, FxThen,
)
MACHINE_TYPES = (IfM, HL, Frame, Chk)

REVERT_TO_GENERATE = (Uop, Bop, Len, AppE, AppF, New, Read, Write, PtrTo, In, Out, FxThen)


def is_revert_to_generate(t: Term) -> bool:
    """True for the terms tested by generating a value and comparing it."""
    return isinstance(t, REVERT_TO_GENERATE)


def is_fun(t: object) -> bool:
    return isinstance(t, (Lambda, AllQuant))


# -- binding structure -------------------------------------------------------
#
# ``scoped_children`` lists each immediate subterm with the variables bound
# around it, in binding order (a later binder shadows an earlier one with the
# same name).  Variable references in letrec values are exposed as ``Var``
# children so one traversal serves free_vars, alpha_equal and diagnostics.


def scoped_children(t) -> list[tuple[object, tuple[str, ...]]]:
    match t:
        case Uop(_, a) | Len(a) | From(a) | Read(a) | PtrTo(a) | Out(a) | FxThen(_, a):
            return [(a, ())]
        case Bop(_, l, r) | Cop(_, l, r) | AppE(l, r) | AppF(l, r) | Write(l, r) | Unify(l, r) | Join(l, r):
            return [(l, ()), (r, ())]
        case New(ann, init):
            return [(ann, ()), (init, ())]
        case FixedTable(entries):
            names = [e.var for e in entries]
            return [(e.term, tuple(names[:k])) for k, e in enumerate(entries)]
        case Arr(n, x, body):
            return [(n, ()), (body, (x,))]
        case Lambda(x, dom, _, _, _, body):
            return [(dom, ()), (body, (x,))]
        case AllQuant(x1, tdom, inst, x2, dom, _, _, body):
            return [(tdom, ()), (inst, (x2,)), (dom, (x1,)), (body, (x1, x2))]
        case Let(x, bound, body):
            return [(bound, ()), (body, (x,))]
        case Letrec(bindings, body):
            names = tuple(x for x, _ in bindings)
            return [(v, names) for _, v in bindings] + [(body, names)]
        case If(x, c, a, b):
            return [(c, ()), (a, (x,)), (b, ())]
        case Stage(_, _, l, r):
            return [(l, ()), (r, ())]
        case TupleValue(entries):
            return [(Var(x), ()) for _, x in entries]
        case PtrValue(ann, x):
            return [(ann, ()), (Var(x), ())]
        case IfM(x, c, a, _, b):
            return [(c, ()), (a, (x,)), (b, ())]
        case Chk(_, _, p, a, b):
            return [(p, ()), (a, ()), (b, ())]
        case Frame():
            # The frame's own environment closes its body; see free_vars.
            return []
        case _:
            return []


def _local_shape(t) -> tuple:
    """Everything about ``t`` other than its scoped children and binder names."""
    match t:
        case Var(name):
            return (Var, name)
        case IntLit(v):
            return (IntLit, v)
        case Uop(op) | Bop(op) | Cop(op):
            return (type(t), op)
        case FixedTable(entries):
            return (FixedTable, tuple(e.index for e in entries))
        case Lambda(_, _, dk, f1, f2, _):
            return (Lambda, dk, f1, f2)
        case AllQuant(_, _, _, _, _, f1, f2, _):
            return (AllQuant, f1, f2)
        case Letrec(bindings):
            return (Letrec, len(bindings))
        case Stage(fx, d):
            return (Stage, fx, d)
        case FxThen(fx):
            return (FxThen, fx)
        case TupleValue(entries):
            return (TupleValue, tuple(i for i, _ in entries))
        case IfM(_, _, _, saved):
            return (IfM, saved)
        case HL(label):
            return (HL, label)
        case Frame(env, body, allowed):
            return (Frame, env, body, allowed)
        case Chk(subject, ae):
            return (Chk, subject, ae)
        case _:
            return (type(t),)


def free_vars(t) -> frozenset[str]:
    out: set[str] = set()

    def walk(node, bound: frozenset[str]) -> None:
        if isinstance(node, Var):
            if node.name not in bound:
                out.add(node.name)
            return
        for child, binders in scoped_children(node):
            walk(child, bound | frozenset(binders))

    walk(t, frozenset())
    return frozenset(out)


def alpha_equal(t1, t2) -> bool:
    """Structural equality up to consistent renaming of bound variables."""
    return _alpha(t1, t2, {}, {}, 0)


def _alpha(a, b, env_a: dict, env_b: dict, depth: int) -> bool:
    if isinstance(a, Var) and isinstance(b, Var):
        la, lb = env_a.get(a.name), env_b.get(b.name)
        if la is None and lb is None:
            return a.name == b.name
        return la == lb
    if _local_shape(a) != _local_shape(b):
        return False
    ca, cb = scoped_children(a), scoped_children(b)
    if len(ca) != len(cb):
        return False
    for (x, bx), (y, by) in zip(ca, cb):
        if len(bx) != len(by):
            return False
        ea, eb = dict(env_a), dict(env_b)
        level = depth
        for na, nb in zip(bx, by):
            level += 1
            ea[na] = level
            eb[nb] = level
        if not _alpha(x, y, ea, eb, level):
            return False
    return True


def subterms(t, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], object, frozenset[str]]]:
    """Yield ``(path, node, bound_vars)`` for every node, pre-order."""

    def walk(node, p, bound):
        yield p, node, bound
        for k, (child, binders) in enumerate(scoped_children(node)):
            yield from walk(child, p + (k,), bound | frozenset(binders))

    yield from walk(t, path, frozenset())


# -- well-formedness ---------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    message: str
    path: tuple[int, ...] = ()
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = ""
        if self.line is not None:
            where = f"{self.line}:{self.column}: "
        elif self.path:
            where = "at " + ".".join(map(str, self.path)) + ": "
        return where + self.message


def well_formed_source(t, program: bool = True) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for path, node, bound in subterms(t):
        if isinstance(node, MACHINE_TYPES):
            diags.append(Diagnostic(f"machine-only form {type(node).__name__} in source", path))
        elif isinstance(node, FixedTable):
            _check_distinct([e.index for e in node.entries], "table", path, diags)
        elif isinstance(node, TupleValue):
            _check_distinct([i for i, _ in node.entries], "tuple", path, diags)
        elif isinstance(node, Letrec):
            names = [x for x, _ in node.bindings]
            for x in sorted({x for x in names if names.count(x) > 1}):
                diags.append(Diagnostic(f"duplicate letrec binding {x}", path))
        elif program and isinstance(node, Var) and node.name not in bound:
            diags.append(Diagnostic(f"unbound variable {node.name}", path))
    return diags


def _check_distinct(indices, what, path, diags) -> None:
    seen = set()
    for i in indices:
        if i in seen:
            diags.append(Diagnostic(f"duplicate {what} index {i}", path))
        seen.add(i)
