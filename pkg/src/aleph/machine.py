"""Single-step reduction for the abstract machine.

``step`` dispatches on the current term and returns one of four outcomes:
``Stepped`` (with the action performed), ``Terminal``, ``Fail`` or
``Error``.  Every outcome carries its derivation: the rule names from the
outermost congruence rule down to the rule that did the work, followed by
the names of any premise derivations (the failing condition under
``RGif3``, the value judgements under ``RGletrec``).
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import re
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

from aleph.effects import RV, Effect
from aleph.heap import (
    Closure,
    Env,
    Head,
    HeadHeap,
    HeadLabel,
    IntHead,
    MachineInvariantError,
    MachineState,
    PointerCell,
    PointerHeap,
    PointerLabel,
    PtrHead,
    TableHead,
    restore_pointer_heap,
)
from aleph.syntax import (
    HL,
    AllQuant,
    Anys,
    AppE,
    AppF,
    Arr,
    BinaryOp,
    Bop,
    Chk,
    CompareOp,
    Cop,
    DomainKind,
    Falses,
    FixedTable,
    Frame,
    From,
    Funs,
    FxThen,
    If,
    IfM,
    In,
    IntLit,
    Ints,
    Join,
    Lambda,
    Len,
    Let,
    Letrec,
    New,
    Out,
    PtrTo,
    Ptrs,
    PtrValue,
    Read,
    Stage,
    TableEntry,
    Tabs,
    Term,
    TupleValue,
    UnaryOp,
    Unify,
    Uop,
    Var,
    Write,
    free_vars,
    is_revert_to_generate,
)

# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    kind: str  # "T", "in", "out", "N", "R", "W"
    value: Optional[int] = None

    @property
    def pure(self) -> bool:
        return self.kind == "T"

    def __str__(self) -> str:
        if self.value is None:
            return self.kind
        return f"{self.kind} {self.value}"

    @classmethod
    def parse(cls, text: str) -> Action:
        kind, _, value = text.partition(" ")
        return cls(kind, int(value) if value else None)


PURE = Action("T")
NEW = Action("N")
READ = Action("R")
WRITE = Action("W")


def input_action(i: int) -> Action:
    return Action("in", i)


def output_action(i: int) -> Action:
    return Action("out", i)


# -- input -------------------------------------------------------------------


class InputExhausted(Exception):
    """The machine asked for an input integer and none was left.

    This is an experiment-setup fault, not a machine outcome.
    """

    def __init__(self, message: str = "input exhausted"):
        super().__init__(message)
        self.actions: list[Action] = []
        self.entries: list = []


class InputSource:
    def next_input(self) -> int:
        raise NotImplementedError


class ScriptedInput(InputSource):
    def __init__(self, values: Iterable[int] = ()):
        self.values = list(values)
        self.position = 0

    def next_input(self) -> int:
        if self.position >= len(self.values):
            raise InputExhausted(f"input exhausted after {self.position} integers")
        value = self.values[self.position]
        self.position += 1
        return value

    @property
    def consumed(self) -> list[int]:
        return self.values[: self.position]


class InteractiveInput(InputSource):
    def __init__(self, read_line: Callable[[], str]):
        self.read_line = read_line
        self.consumed: list[int] = []

    def next_input(self) -> int:
        line = self.read_line()
        if not line:
            raise InputExhausted("end of interactive input")
        value = int(line.strip())
        self.consumed.append(value)
        return value


# -- outcomes ----------------------------------------------------------------


@dataclass(frozen=True)
class Stepped:
    action: Action
    next: MachineState
    derivation: tuple[str, ...]


@dataclass(frozen=True)
class Terminal:
    label: HeadLabel


@dataclass(frozen=True)
class Fail:
    derivation: tuple[str, ...]


@dataclass(frozen=True)
class Error:
    rule: str
    detail: str
    derivation: tuple[str, ...]


StepOutcome = Union[Stepped, Terminal, Fail, Error]

# Rules that only pass a sub-derivation's result outward.
CONGRUENCE_RULES = frozenset({
    "RGctxt", "RGctxtF", "RGctxtE", "RGtab2", "RGtabF", "RGtabE",
    "RGif2", "RGifE", "RGframe2", "RGframeF", "RGframeE",
})


def principal_rule(derivation: tuple[str, ...]) -> str:
    """The rule in a derivation that actually rewrote, failed or erred."""
    for name in derivation:
        if name not in CONGRUENCE_RULES:
            return name
    return derivation[-1]


# Internal results: the environment and allowed effects never change across
# a step, so only heaps and the term travel back up.  Congruence rule names
# are pushed onto ``outer`` innermost first, which keeps wrapping O(1) per
# level on deep frame towers.


@dataclass
class _Result_:
    @property
    def full(self) -> tuple[str, ...]:
        return tuple(reversed(self.outer)) + self.deriv


@dataclass
class _Step(_Result_):
    action: Action
    hh: HeadHeap
    ph: PointerHeap
    term: Term
    deriv: tuple[str, ...]
    outer: list = dataclasses.field(default_factory=list)


@dataclass
class _Fail(_Result_):
    deriv: tuple[str, ...]
    outer: list = dataclasses.field(default_factory=list)


@dataclass
class _Err(_Result_):
    deriv: tuple[str, ...]
    detail: str
    outer: list = dataclasses.field(default_factory=list)


_Result = Union[_Step, _Fail, _Err, None]


def step(m: MachineState, inp: InputSource) -> StepOutcome:
    if isinstance(m.term, HL):
        return Terminal(m.term.label)
    r = _reduce(m.hh, m.ph, m.env, m.allowed, m.term, inp)
    if isinstance(r, _Step):
        return Stepped(r.action, MachineState(r.hh, r.ph, m.env, m.allowed, r.term), r.full)
    if isinstance(r, _Fail):
        return Fail(r.full)
    if isinstance(r, _Err):
        deriv = r.full
        return Error(principal_rule(deriv), r.detail, deriv)
    raise MachineInvariantError(f"no rule applies to {type(m.term).__name__}")


# -- head predicates ---------------------------------------------------------


@dataclass(frozen=True)
class HeadPredicates:
    is_int: bool = False
    is_nat: bool = False
    tab_indices: Optional[frozenset[int]] = None
    is_tab: bool = False
    is_arr: bool = False
    is_fun: bool = False
    is_typ: bool = False
    is_app: bool = False
    is_ptr: bool = False

    def is_tab_fields(self, indices: Iterable[int]) -> bool:
        return self.tab_indices is not None and self.tab_indices == frozenset(indices)


def classify_head(h: Optional[Head]) -> HeadPredicates:
    """Auxiliary predicates on a head; every predicate is false for ``None``."""
    match h:
        case IntHead(i):
            return HeadPredicates(is_int=True, is_nat=i >= 0)
        case TableHead():
            indices = h.indices()
            is_arr = sorted(indices) == list(range(len(indices)))
            return HeadPredicates(tab_indices=frozenset(indices), is_tab=True, is_arr=is_arr, is_app=True)
        case Closure(_, f):
            return HeadPredicates(is_fun=True, is_app=True, is_typ=_is_identity_type(f))
        case PtrHead():
            return HeadPredicates(is_ptr=True)
        case _:
            return HeadPredicates()


def _is_identity_type(f) -> bool:
    return (
        isinstance(f, Lambda)
        and f.dk is DomainKind.INV
        and f.range_fx == Effect(0)
        and f.body == Var(f.param)
    )


def dk_of(f) -> DomainKind:
    if isinstance(f, AllQuant):
        return DomainKind.CONTRA
    return f.dk


def _generates_closure(f) -> bool:
    return dk_of(f) in (DomainKind.CONTRA, DomainKind.INV)


# -- contexts ----------------------------------------------------------------

_CONTEXT_FIELDS: dict[type, tuple[str, ...]] = {
    Uop: ("arg",),
    Bop: ("left", "right"),
    Cop: ("left", "right"),
    Arr: ("length",),
    Len: ("arg",),
    AppE: ("fn", "arg"),
    AppF: ("fn", "arg"),
    New: ("init",),
    Read: ("ptr",),
    Write: ("ptr", "value"),
    Out: ("arg",),
    Unify: ("left",),
    Let: ("bound",),
}


@dataclass(frozen=True)
class EvalContext:
    """A one-hole context: ``term`` with the subterm in ``hole`` removed."""

    term: Term
    hole: str

    def plug(self, t: Term) -> Term:
        return dataclasses.replace(self.term, **{self.hole: t})

    @property
    def production(self) -> str:
        return _PRODUCTIONS[type(self.term), self.hole]


_PRODUCTIONS = {
    (Uop, "arg"): "uop []",
    (Bop, "left"): "bop [] t",
    (Bop, "right"): "bop hl []",
    (Cop, "left"): "cop [] t",
    (Cop, "right"): "cop hl []",
    (Arr, "length"): "arr [] x t",
    (Len, "arg"): "len []",
    (AppE, "fn"): "appe [] t",
    (AppE, "arg"): "appe hl []",
    (AppF, "fn"): "appf [] t",
    (AppF, "arg"): "appf hl []",
    (New, "init"): "new t []",
    (Read, "ptr"): "read []",
    (Write, "ptr"): "write [] t",
    (Write, "value"): "write hl []",
    (Out, "arg"): "out []",
    (Unify, "left"): "unify [] t",
    (Let, "bound"): "let x [] t",
}


def decompose(t: Term) -> Optional[tuple[EvalContext, Term]]:
    fields = _CONTEXT_FIELDS.get(type(t))
    if fields is None:
        return None
    for name in fields:
        child = getattr(t, name)
        if not isinstance(child, HL):
            return EvalContext(t, name), child
    return None


# -- letrec values -----------------------------------------------------------


@dataclass(frozen=True)
class Erroneous:
    rule: str
    detail: str


def eval_value(ph: PointerHeap, env: Env, v) -> Union[tuple[Head, PointerHeap, str], Erroneous]:
    """Evaluate a letrec value to a head, possibly allocating a pointer.

    Returns ``(head, heap, rule)`` or ``Erroneous``.
    """
    match v:
        case TupleValue(entries):
            labels = []
            for i, x in entries:
                hl = env.lookup(x)
                if hl is None:
                    return Erroneous("RVtableE", f"unbound variable {x}")
                labels.append((i, hl))
            return TableHead(tuple(labels)), ph, "RVtable"
        case Lambda() | AllQuant():
            if not _generates_closure(v):
                return Erroneous("RVfunE", f"domain kind {dk_of(v).value}")
            return Closure(env, v), ph, "RVfun"
        case PtrValue(ann, x):
            hl = env.lookup(x)
            if hl is None:
                return Erroneous("RVptrE", f"unbound variable {x}")
            ph2, pl = ph.allocate(PointerCell(env, ann, hl))
            return PtrHead(pl), ph2, "RVptr"
    raise MachineInvariantError(f"not a letrec value: {v!r}")


def value_erroneous(env: Env, v) -> Optional[Erroneous]:
    match v:
        case TupleValue(entries):
            for _, x in entries:
                if x not in env:
                    return Erroneous("RVtableE", f"unbound variable {x}")
        case Lambda() | AllQuant():
            if not _generates_closure(v):
                return Erroneous("RVfunE", f"domain kind {dk_of(v).value}")
        case PtrValue(_, x):
            if x not in env:
                return Erroneous("RVptrE", f"unbound variable {x}")
    return None


def letrec_env(hh: HeadHeap, env: Env, bindings) -> Env:
    """The letrec environment, binding each name to the label it will get."""
    base = hh.next_label().id
    return env.extend(*((x, HeadLabel(base + k)) for k, (x, _) in enumerate(bindings)))


# -- fresh names -------------------------------------------------------------


def fresh_name(stem: str, avoid: Iterable[str] = ()) -> str:
    """A machine-generated variable; the ``%`` prefix keeps it out of source."""
    taken = set(avoid)
    name = "%" + stem
    k = 0
    while name in taken:
        k += 1
        name = f"%{stem}{k}"
    return name


# -- arithmetic --------------------------------------------------------------


def apply_uop(op: UnaryOp, i: int) -> int:
    return -i if op is UnaryOp.NEG else abs(i)


def apply_bop(op: BinaryOp, a: int, b: int) -> Optional[int]:
    """Integer result, or None for division or modulus by zero."""
    match op:
        case BinaryOp.ADD:
            return a + b
        case BinaryOp.SUB:
            return a - b
        case BinaryOp.MUL:
            return a * b
        case BinaryOp.DIV:
            return None if b == 0 else a // b
        case BinaryOp.MOD:
            return None if b == 0 else a % b


def apply_cop(op: CompareOp, a: int, b: int) -> bool:
    match op:
        case CompareOp.LT:
            return a < b
        case CompareOp.LE:
            return a <= b
        case CompareOp.GT:
            return a > b
        case CompareOp.GE:
            return a >= b
        case CompareOp.NE:
            return a != b


# -- generate mode -----------------------------------------------------------

_GENERATE_ERRORS = {
    Anys: ("RGanysE", "anys in generate mode"),
    Ints: ("RGintsE", "ints in generate mode"),
    Tabs: ("RGtabsE", "tabs in generate mode"),
    Funs: ("RGfunsE", "funs in generate mode"),
    From: ("RGfromE", "from in generate mode"),
    PtrTo: ("RGptrE", "ptrto in generate mode"),
    Ptrs: ("RGptrsE", "ptrs in generate mode"),
    Join: ("RGjoinE", "join in generate mode"),
    FxThen: ("RGfxE", "fxthen is never run"),
}


def _wrap(r: _Result, rules: tuple[str, str, str], rebuild: Callable[[Term], Term]) -> _Result:
    """Lift a sub-result through a congruence rule family (step, fail, error)."""
    on_step, on_fail, on_err = rules
    if isinstance(r, _Step):
        r.term = rebuild(r.term)
        r.outer.append(on_step)
        return r
    if isinstance(r, _Fail):
        r.outer.append(on_fail)
        return r
    if isinstance(r, _Err):
        r.outer.append(on_err)
        return r
    raise MachineInvariantError("congruence over a terminal subterm")


def _reduce(hh: HeadHeap, ph: PointerHeap, env: Env, chi: Effect, t: Term, inp: InputSource) -> _Result:
    def ok(term: Term, rule: str, action: Action = PURE, hh2=None, ph2=None) -> _Step:
        return _Step(action, hh if hh2 is None else hh2, ph if ph2 is None else ph2, term, (rule,))

    if isinstance(t, HL):
        return None
    if type(t) is Frame and not isinstance(t.body, HL):
        return _reduce_tower(hh, ph, t, inp)
    if type(t) in _GENERATE_ERRORS:
        rule, detail = _GENERATE_ERRORS[type(t)]
        return _Err((rule,), detail)

    split = decompose(t)
    if split is not None:
        ctx, redex = split
        sub = _reduce(hh, ph, env, chi, redex, inp)
        return _wrap(sub, ("RGctxt", "RGctxtF", "RGctxtE"), ctx.plug)

    match t:
        case Var(x):
            hl = env.lookup(x)
            if hl is None:
                return _Err(("RGvarE",), f"unbound variable {x}")
            return ok(HL(hl), "RGvar")

        case Falses():
            return _Fail(("RGfalsesF",))

        case IntLit(i):
            hh2, hl = hh.extend(IntHead(i))
            return ok(HL(hl), "RGi", hh2=hh2)

        case Uop(op, HL(hl)):
            h = hh.get(hl)
            if not isinstance(h, IntHead):
                return _Err(("RGuopE",), f"{op.value} of non-integer {hl}")
            return ok(IntLit(apply_uop(op, h.value)), "RGuop")

        case Bop(op, HL(hl1), HL(hl2)):
            h1, h2 = hh.get(hl1), hh.get(hl2)
            if not (isinstance(h1, IntHead) and isinstance(h2, IntHead)):
                return _Err(("RGbopE",), f"{op.value} of non-integers {hl1}, {hl2}")
            result = apply_bop(op, h1.value, h2.value)
            if result is None:
                return _Err(("RGbopE",), f"{op.value} by zero")
            return ok(IntLit(result), "RGbop")

        case Cop(op, HL(hl1), HL(hl2)):
            h1, h2 = hh.get(hl1), hh.get(hl2)
            if not (isinstance(h1, IntHead) and isinstance(h2, IntHead)):
                return _Err(("RGcopE",), f"{op.value} of non-integers {hl1}, {hl2}")
            if apply_cop(op, h1.value, h2.value):
                return ok(HL(hl1), "RGcop")
            return _Fail(("RGcopF",))

        case FixedTable(entries):
            return _reduce_table(hh, ph, env, chi, entries, inp)

        case Arr(HL(hl), x, body):
            h = hh.get(hl)
            if not classify_head(h).is_nat:
                return _Err(("RGarrE",), f"array length {hl} is not a natural number")
            y = fresh_name("y", free_vars(body))
            table = FixedTable(tuple(TableEntry(y, k, Let(x, IntLit(k), body)) for k in range(h.value)))
            return ok(table, "RGarr")

        case Lambda() | AllQuant():
            if not _generates_closure(t):
                return _Err(("RGfunE",), f"function with domain kind {dk_of(t).value}")
            hh2, hl = hh.extend(Closure(env, t))
            return ok(HL(hl), "RGfun", hh2=hh2)

        case Len(HL(hl)):
            h = hh.get(hl)
            if not classify_head(h).is_arr:
                return _Err(("RGlenE",), f"length of non-array {hl}")
            return ok(IntLit(len(h.entries)), "RGlen")

        case AppE(HL(hl1), HL(hl2)):
            h1, h2 = hh.get(hl1), hh.get(hl2)
            match h1:
                case TableHead():
                    if isinstance(h2, IntHead) and h1.lookup(h2.value) is not None:
                        return ok(HL(h1.lookup(h2.value)), "RGappE1")
                    return _Err(("RGappEE2",), f"{hl2} not in the domain of table {hl1}")
                case Closure(cenv, Lambda() as f):
                    return ok(Frame(cenv.extend((f.param, hl2)), f.body, chi & f.range_fx), "RGappE2")
                case Closure(cenv, AllQuant() as f):
                    body = Let(f.type_var, f.instantiation, f.body)
                    return ok(Frame(cenv.extend((f.param, hl2)), body, chi & f.range_fx), "RGappE3")
                case _:
                    return _Err(("RGappEE1",), f"{hl1} is not applicable")

        case AppF(HL(hl1), HL(hl2)):
            h1, h2 = hh.get(hl1), hh.get(hl2)
            match h1:
                case TableHead():
                    if h2 is None:
                        return _Err(("RGappFE2",), f"argument {hl2} is undefined")
                    if isinstance(h2, IntHead) and h1.lookup(h2.value) is not None:
                        return ok(HL(h1.lookup(h2.value)), "RGappF1")
                    return _Fail(("RGappFF",))
                case Closure(cenv, AllQuant() as f):
                    body = Let(f.type_var, f.instantiation, f.body)
                    return ok(Frame(cenv.extend((f.param, hl2)), body, chi & f.range_fx), "RGappF3")
                case Closure(cenv, Lambda() as f) if f.dk is DomainKind.CONTRA:
                    return ok(Frame(cenv.extend((f.param, hl2)), f.body, chi & f.range_fx), "RGappF2")
                case Closure(cenv, Lambda() as f) if f.dk is DomainKind.INV:
                    run_body = Frame(cenv.extend((f.param, hl2)), f.body, chi & f.range_fx)
                    check = Chk(hl2, frozenset(), f.domain, run_body, Falses())
                    return ok(Frame(cenv, check, chi & f.dom_fx), "RGappF4")
                case Closure(_, f):
                    return _Err(("RGappFE3",), f"failing application of a {f.dk.value} function")
                case _:
                    return _Err(("RGappFE1",), f"{hl1} is not applicable")

        case New(ann, HL(hl)):
            if not (Effect.N & chi):
                return _Err(("RGnewE",), "new effects not allowed")
            ph2, pl = ph.allocate(PointerCell(env, ann, hl))
            hh2, hl2 = hh.extend(PtrHead(pl))
            return ok(HL(hl2), "RGnew", NEW, hh2, ph2)

        case Read(HL(hl)):
            h = hh.get(hl)
            if not isinstance(h, PtrHead):
                return _Err(("RGreadE",), f"read of non-pointer {hl}")
            cell = ph.get(h.label)
            if cell is None:
                return _Err(("RGreadE",), f"read of undefined pointer {h.label}")
            if not (Effect.R & chi):
                return _Err(("RGreadE",), "read effects not allowed")
            return ok(HL(cell.contents), "RGread", READ)

        case Write(HL(hl1), HL(hl2)):
            h = hh.get(hl1)
            if not isinstance(h, PtrHead):
                return _Err(("RGwriteE",), f"write to non-pointer {hl1}")
            if h.label not in ph:
                return _Err(("RGwriteE",), f"write to undefined pointer {h.label}")
            if not (Effect.W & chi):
                return _Err(("RGwriteE",), "write effects not allowed")
            return ok(HL(hl2), "RGwrite", WRITE, ph2=ph.set_contents(h.label, hl2))

        case In():
            if not (Effect.IO & chi):
                return _Err(("RGinE",), "IO effects not allowed")
            i = inp.next_input()
            return ok(IntLit(i), "RGin", input_action(i))

        case Out(HL(hl)):
            h = hh.get(hl)
            if not isinstance(h, IntHead):
                return _Err(("RGoutE",), f"output of non-integer {hl}")
            if not (Effect.IO & chi):
                return _Err(("RGoutE",), "IO effects not allowed")
            return ok(HL(hl), "RGout", output_action(h.value))

        case Unify(HL(hl), right):
            return ok(Chk(hl, frozenset(), right, HL(hl), Falses()), "RGunify")

        case Let(x, HL(hl), body):
            return ok(Frame(env.extend((x, hl)), body, chi), "RGlet")

        case Letrec(bindings, body):
            return _reduce_letrec(hh, ph, env, chi, bindings, body)

        case If(x, c, a, b):
            return ok(IfM(x, c, a, ph, b), "RGif")

        case IfM(x, HL(hl), a, _, _):
            return ok(Frame(env.extend((x, hl)), a, chi), "RGif1")

        case IfM(x, c, a, saved, b):
            sub = _reduce(hh, ph, env, chi & RV, c, inp)
            if isinstance(sub, _Fail):
                restored = restore_pointer_heap(ph, saved)
                return _Step(PURE, hh, restored, b, ("RGif3",) + sub.full)
            return _wrap(sub, ("RGif2", "", "RGifE"), lambda c2: IfM(x, c2, a, saved, b))

        case Stage(_, _, _, right):
            return ok(right, "RGstage")

        case Frame(_, HL(hl), _):
            return ok(HL(hl), "RGframe1")

        case Frame(fenv, body, fchi):
            sub = _reduce(hh, ph, fenv, fchi, body, inp)
            return _wrap(sub, ("RGframe2", "RGframeF", "RGframeE"), lambda b2: Frame(fenv, b2, fchi))

        case Chk():
            return _test(hh, ph, env, chi, t)

    raise MachineInvariantError(f"no generate rule for {t!r}")


def _reduce_tower(hh, ph, t: Frame, inp) -> _Result:
    """RGframe2/RGframeF/RGframeE over a run of directly nested frames.

    Deep object-level call stacks are towers of frames; walking them in a
    loop avoids one Python call per level.
    """
    tower = []
    while type(t) is Frame and not isinstance(t.body, HL):
        tower.append(t)
        t = t.body
    inner = tower[-1]
    r = _reduce(hh, ph, inner.env, inner.allowed, t, inp)
    if isinstance(r, _Step):
        term = r.term
        for f in reversed(tower):
            term = Frame(f.env, term, f.allowed)
        r.term = term
        r.outer.extend(["RGframe2"] * len(tower))
    elif isinstance(r, _Fail):
        r.outer.extend(["RGframeF"] * len(tower))
    elif isinstance(r, _Err):
        r.outer.extend(["RGframeE"] * len(tower))
    else:
        raise MachineInvariantError("congruence over a terminal subterm")
    return r


def _reduce_table(hh, ph, env, chi, entries, inp) -> _Result:
    for k, entry in enumerate(entries):
        if not isinstance(entry.term, HL):
            scope = env.extend(*((e.var, e.term.label) for e in entries[:k]))
            sub = _reduce(hh, ph, scope, chi, entry.term, inp)

            def rebuild(t2, k=k):
                updated = list(entries)
                updated[k] = TableEntry(entries[k].var, entries[k].index, t2)
                return FixedTable(tuple(updated))

            return _wrap(sub, ("RGtab2", "RGtabF", "RGtabE"), rebuild)
    hh2, hl = hh.extend(TableHead(tuple((e.index, e.term.label) for e in entries)))
    return _Step(PURE, hh2, ph, HL(hl), ("RGtab1",))


def _reduce_letrec(hh, ph, env, chi, bindings, body) -> _Result:
    scope = letrec_env(hh, env, bindings)
    for _, v in bindings:
        bad = value_erroneous(scope, v)
        if bad is not None:
            return _Err(("RGletrecE1", bad.rule), bad.detail)
    makes_pointers = any(isinstance(v, PtrValue) for _, v in bindings)
    if makes_pointers and not (Effect.N & chi):
        return _Err(("RGletrecE2",), "letrec allocates pointers but new effects not allowed")
    heads = []
    value_rules = []
    for _, v in bindings:
        head, ph, rule = eval_value(ph, scope, v)
        heads.append(head)
        value_rules.append(rule)
    for head in heads:
        hh, _ = hh.extend(head)
    action = NEW if makes_pointers else PURE
    return _Step(action, hh, ph, Frame(scope, body, chi), ("RGletrec", *value_rules))


# -- test mode ---------------------------------------------------------------


def _test(hh: HeadHeap, ph: PointerHeap, env: Env, chi: Effect, t: Chk) -> _Result:
    hl, ae, p, yes, no = t.subject, t.ae, t.pattern, t.then, t.else_
    h = hh.get(hl)
    defined = h is not None
    preds = classify_head(h)

    def ok(term: Term, rule: str, hh2=None) -> _Step:
        return _Step(PURE, hh if hh2 is None else hh2, ph, term, (rule,))

    def err(rule: str, detail: str) -> _Err:
        return _Err((rule,), detail)

    def undefined(rule: str) -> _Err:
        return err(rule, f"tested label {hl} is undefined")

    if is_revert_to_generate(p):
        x = fresh_name("g", free_vars(yes) | free_vars(no))
        return ok(Let(x, p, Chk(hl, ae, Var(x), yes, no)), "RTgen")

    match p:
        case Var(x):
            hl2 = env.lookup(x)
            if hl2 is None:
                return err("RTvarE", f"unbound variable {x}")
            return ok(Chk(hl, ae, HL(hl2), yes, no), "RTvar")

        case Falses():
            return ok(no, "RTfalses")

        case Anys():
            return ok(yes, "RTanys")

        case IntLit(i):
            if not defined:
                return undefined("RTiE")
            return ok(yes, "RTi1") if h == IntHead(i) else ok(no, "RTi2")

        case Ints():
            if not defined:
                return undefined("RTintsE")
            return ok(yes, "RTints1") if preds.is_int else ok(no, "RTints2")

        case Cop(op, left, right):
            x = fresh_name("c", free_vars(yes) | free_vars(no))
            cond = Cop(op, HL(hl), Frame(env, right, chi))
            return ok(Chk(hl, ae, left, If(x, cond, yes, no), no), "RTcop")

        case FixedTable(entries):
            if not defined:
                return undefined("RTtabE")
            if not preds.is_tab_fields(e.index for e in entries):
                return ok(no, "RTtab2")
            labels = [h.lookup(e.index) for e in entries]
            term = yes
            for k in range(len(entries) - 1, -1, -1):
                if k < len(entries) - 1:
                    scope = env.extend(*((e.var, lab) for e, lab in zip(entries[: k + 1], labels)))
                    term = Frame(scope, term, chi)
                term = Chk(labels[k], ae, entries[k].term, term, no)
            return ok(term, "RTtab1")

        case Arr(length, x, body):
            if not defined:
                return undefined("RTarrE")
            if not preds.is_arr:
                return ok(no, "RTarr2")
            n = len(h.entries)
            hh2, hl_len = hh.extend(IntHead(n))
            inner = yes
            for k in range(n - 1, -1, -1):
                inner = Frame(env, Chk(h.lookup(k), ae, Let(x, IntLit(k), body), inner, no), chi)
            return ok(Chk(hl_len, ae, length, inner, no), "RTarr1", hh2)

        case Tabs():
            if not defined:
                return undefined("RTtabsE")
            return ok(yes, "RTtabs1") if preds.is_tab else ok(no, "RTtabs2")

        case Lambda() | AllQuant():
            if not defined:
                return undefined("RTfunE2")
            if preds.is_fun:
                return err("RTfunE1", f"testing function {hl} against a function")
            return ok(no, "RTfun")

        case Funs():
            if not defined:
                return undefined("RTfunsE")
            return ok(yes, "RTfuns1") if preds.is_fun else ok(no, "RTfuns2")

        case From(Var(x)):
            hl2 = env.lookup(x)
            if hl2 is None:
                return err("RTfromE", f"unbound variable {x}")
            h2 = hh.get(hl2)
            if not classify_head(h2).is_typ:
                return err("RTfromE", f"{hl2} is not an invariant identity function")
            f = h2.fun
            return ok(Frame(h2.env, Chk(hl, ae, f.domain, yes, no), chi & f.dom_fx), "RTfrom2")

        case From(arg):
            x = fresh_name("f", free_vars(yes) | free_vars(no))
            return ok(Let(x, arg, Chk(hl, ae, From(Var(x)), yes, no)), "RTfrom1")

        case Ptrs():
            if not defined:
                return undefined("RTptrsE")
            return ok(yes, "RTptrs1") if preds.is_ptr else ok(no, "RTptrs2")

        case Unify(left, right):
            return ok(Chk(hl, ae, left, Frame(env, Chk(hl, ae, right, yes, no), chi), no), "RTunify")

        case Join(left, right):
            return ok(Chk(hl, ae, left, yes, Frame(env, Chk(hl, ae, right, yes, no), chi)), "RTjoin")

        case Let(x, bound, body):
            return ok(Let(x, bound, Chk(hl, ae, body, yes, no)), "RTlet")

        case Letrec(bindings, body):
            return ok(Letrec(bindings, Chk(hl, ae, body, yes, no)), "RTletrec")

        case If(x, c, a, b):
            return ok(If(x, c, Chk(hl, ae, a, yes, no), Chk(hl, ae, b, yes, no)), "RTif")

        case Stage(_, _, _, right):
            return ok(Chk(hl, ae, right, yes, no), "RTstage")

        case HL(hl2):
            return _test_labels(hh, ph, hl, hl2, ae, yes, no)

    raise MachineInvariantError(f"chk pattern {type(p).__name__} is not source syntax or a head label")


def _test_labels(hh, ph, hl1, hl2, ae, yes, no) -> _Result:
    def ok(term: Term, rule: str) -> _Step:
        return _Step(PURE, hh, ph, term, (rule,))

    if (hl1, hl2) in ae:
        return ok(yes, "RThl")
    h1, h2 = hh.get(hl1), hh.get(hl2)
    if h1 is None or h2 is None:
        missing = hl1 if h1 is None else hl2
        return _Err(("RThlE",), f"label {missing} is undefined")
    match h1:
        case IntHead():
            return ok(yes, "RThli1") if h2 == h1 else ok(no, "RThli2")
        case TableHead():
            if not classify_head(h2).is_tab_fields(h1.indices()):
                return ok(no, "RThltab2")
            assumed = ae | {(hl1, hl2)}
            term = yes
            for i, sub1 in reversed(h1.entries):
                term = Chk(sub1, assumed, HL(h2.lookup(i)), term, no)
            return ok(term, "RThltab1")
        case Closure():
            if isinstance(h2, Closure):
                return _Err(("RThlfunE",), f"comparing functions {hl1} and {hl2}")
            return ok(no, "RThlfun")
        case PtrHead():
            return ok(yes, "RThlpl1") if h2 == h1 else ok(no, "RThlpl2")
    raise MachineInvariantError(f"unknown head {h1!r}")


# -- canonical labelling -----------------------------------------------------


def canonicalize(m: MachineState) -> MachineState:
    """Relabel heads and pointers in first-occurrence order.

    The walk visits the term, then the environment, then the heads and cells
    reached from labels already numbered, and finally any unreached labels in
    their original order.  States equal up to renaming of labels canonicalize
    to equal states.
    """
    hmap, pmap = canonical_labels(m)

    def relabel(obj):
        if isinstance(obj, HeadLabel):
            return HeadLabel(hmap[obj])
        if isinstance(obj, PointerLabel):
            return PointerLabel(pmap[obj])
        if isinstance(obj, (Lambda, AllQuant)):
            return obj  # source functions carry no labels
        if isinstance(obj, PointerHeap):
            cells = {relabel(pl): relabel(cell) for pl, cell in obj.items()}
            return PointerHeap(cells, len(cells))
        if isinstance(obj, tuple):
            return tuple(relabel(x) for x in obj)
        if isinstance(obj, frozenset):
            return frozenset(relabel(x) for x in obj)
        names = _field_names(type(obj))
        if names:
            return type(obj)(*(relabel(getattr(obj, n)) for n in names))
        return obj

    cells: list = [None] * len(hmap)
    for hl, head in m.hh.items():
        cells[hmap[hl]] = relabel(head)
    ph_cells = {relabel(pl): relabel(cell) for pl, cell in m.ph.items()}
    return MachineState(
        HeadHeap.from_cells(cells),
        PointerHeap(ph_cells, len(pmap)),
        relabel(m.env),
        m.allowed,
        relabel(m.term),
    )


_LABEL_TEXT = re.compile(r"#(hl|pl)([0-9]+)")


def canonical_text(m: MachineState, text: str) -> str:
    """``text`` with label spellings renamed as ``canonicalize(m)`` renames them."""
    hmap, pmap = canonical_labels(m)

    def sub(match):
        kind, n = match.group(1), int(match.group(2))
        table, cls = (hmap, HeadLabel) if kind == "hl" else (pmap, PointerLabel)
        new = table.get(cls(n))
        return match.group(0) if new is None else f"#{kind}{new}"

    return _LABEL_TEXT.sub(sub, text)


@functools.cache
def _field_names(cls) -> tuple[str, ...]:
    if not dataclasses.is_dataclass(cls):
        return ()
    return tuple(f.name for f in dataclasses.fields(cls))


def canonical_labels(m: MachineState) -> tuple[dict, dict]:
    """The canonical number of every head and pointer label in ``m``."""
    hmap: dict[HeadLabel, int] = {}
    pmap: dict[PointerLabel, int] = {}
    queue: deque = deque()

    def see(obj) -> None:
        if isinstance(obj, HeadLabel):
            if obj not in hmap:
                hmap[obj] = len(hmap)
                queue.append(obj)
        elif isinstance(obj, PointerLabel):
            if obj not in pmap:
                pmap[obj] = len(pmap)
                queue.append(obj)
        elif isinstance(obj, (Lambda, AllQuant)):
            return
        elif isinstance(obj, PointerHeap):
            for pl, cell in obj.items():
                see(pl)
                see(cell)
        elif isinstance(obj, (tuple, list)):
            for x in obj:
                see(x)
        elif isinstance(obj, frozenset):
            for x in sorted(obj):
                see(x)
        else:
            for n in _field_names(type(obj)):
                see(getattr(obj, n))

    def drain() -> None:
        while queue:
            label = queue.popleft()
            see(m.hh.get(label) if isinstance(label, HeadLabel) else m.ph.get(label))

    see(m.term)
    see(m.env)
    drain()
    for hl in m.hh.labels():
        see(hl)
        drain()
    for pl in m.ph.labels():
        see(pl)
        drain()

    return hmap, pmap


def serialize_state(m: MachineState) -> str:
    """A complete, deterministic text form of a state (sets are sorted)."""
    out: list[str] = []

    def emit(obj) -> None:
        if isinstance(obj, (HeadLabel, PointerLabel)):
            out.append(str(obj))
        elif isinstance(obj, HeadHeap):
            out.append("HH{")
            for hl, head in obj.items():
                emit(hl)
                out.append("=")
                emit(head)
                out.append(";")
            out.append("}")
        elif isinstance(obj, PointerHeap):
            out.append(f"PH<{obj.next_id}>{{")
            for pl, cell in obj.items():
                emit(pl)
                out.append("=")
                emit(cell)
                out.append(";")
            out.append("}")
        elif isinstance(obj, frozenset):
            out.append("{")
            for x in sorted(obj):
                emit(x)
                out.append(",")
            out.append("}")
        elif isinstance(obj, tuple):
            out.append("(")
            for x in obj:
                emit(x)
                out.append(",")
            out.append(")")
        elif isinstance(obj, enum.Enum):
            out.append(f"{type(obj).__name__}.{obj.value}")
        elif (names := _field_names(type(obj))):
            out.append(type(obj).__name__ + "(")
            for n in names:
                emit(getattr(obj, n))
                out.append(",")
            out.append(")")
        else:
            out.append(repr(obj))

    emit(m)
    return "".join(out)
