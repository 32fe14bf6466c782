"""Rule names and an independent guard for every machine rule.

``step`` in :mod:`aleph.machine` picks a rule by dispatching on the term.
This module instead evaluates every rule's premise separately, so the two
can be cross-checked: for each state exactly one outcome class must match,
and if that class is a step then exactly one rule does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from aleph.effects import RV, Effect
from aleph.heap import (
    Closure,
    Env,
    HeadHeap,
    IntHead,
    MachineInvariantError,
    MachineState,
    PointerHeap,
    PtrHead,
    TableHead,
)
from aleph.machine import apply_cop, classify_head, value_erroneous, letrec_env
from aleph.syntax import (
    HL, AllQuant, Anys, AppE, AppF, Arr, BinaryOp, Bop, Chk, Cop, DomainKind,
    Falses, FixedTable, Frame, From, Funs, FxThen, If, IfM, In, IntLit, Ints,
    Join, Lambda, Len, Let, Letrec, New, Out, PtrTo, Ptrs, PtrValue, Read,
    Stage, Tabs, Term, Unify, Uop, Var, Write,
)

STEP, FAIL, ERROR, TERMINAL = "step", "fail", "error", "terminal"

VALUE_RULES = ("RVtable", "RVfun", "RVptr", "RVtableE", "RVfunE", "RVptrE")
PROGRAM_RULES = ("RP1", "RP2", "RPE1", "RPE2", "RPE3")


@dataclass
class _Ctx:
    hh: HeadHeap
    ph: PointerHeap
    env: Env
    chi: Effect
    t: Term
    cache: dict = field(default_factory=dict)

    def head(self, hl):
        return self.hh.get(hl)

    def sub(self, env: Env, chi: Effect, t: Term) -> str:
        # The step, fail and error guards of one congruence family share a premise.
        # A frame around a non-label body has the class of that body, so
        # towers of frames are descended without re-checking each level.
        while isinstance(t, Frame) and not isinstance(t.body, HL):
            env, chi, t = t.env, t.allowed, t.body
        key = (env, chi, id(t))
        if key not in self.cache:
            self.cache[key] = outcome_class(self.hh, self.ph, env, chi, t)
        return self.cache[key]


def _hl(t) -> bool:
    return isinstance(t, HL)


def _labels(*ts) -> bool:
    return all(isinstance(t, HL) for t in ts)


# -- evaluation contexts, written out production by production ----------------


def _hole(t) -> Optional[Term]:
    """The subterm in the hole when ``t`` matches an evaluation context."""
    match t:
        case Uop(_, a) | Len(a) | Read(a) | Out(a) if not _hl(a):
            return a
        case Bop(_, l, _) | Cop(_, l, _) | AppE(l, _) | AppF(l, _) | Write(l, _) if not _hl(l):
            return l
        case Bop(_, l, r) | Cop(_, l, r) | AppE(l, r) | AppF(l, r) | Write(l, r) if _hl(l) and not _hl(r):
            return r
        case Arr(n, _, _) if not _hl(n):
            return n
        case New(_, init) if not _hl(init):
            return init
        case Unify(l, _) if not _hl(l):
            return l
        case Let(_, b, _) if not _hl(b):
            return b
    return None


def _ctxt(cls: str) -> Callable[[_Ctx], bool]:
    def guard(c: _Ctx) -> bool:
        redex = _hole(c.t)
        return redex is not None and c.sub(c.env, c.chi, redex) == cls
    return guard


def _first_open_entry(t: FixedTable):
    for k, e in enumerate(t.entries):
        if not _hl(e.term):
            return k
    return None


def _tab(cls: str) -> Callable[[_Ctx], bool]:
    def guard(c: _Ctx) -> bool:
        if not isinstance(c.t, FixedTable):
            return False
        k = _first_open_entry(c.t)
        if k is None:
            return False
        scope = c.env.extend(*((e.var, e.term.label) for e in c.t.entries[:k]))
        return c.sub(scope, c.chi, c.t.entries[k].term) == cls
    return guard


def _ifm(cls: str) -> Callable[[_Ctx], bool]:
    def guard(c: _Ctx) -> bool:
        return isinstance(c.t, IfM) and not _hl(c.t.cond) and c.sub(c.env, c.chi & RV, c.t.cond) == cls
    return guard


def _frame(cls: str) -> Callable[[_Ctx], bool]:
    def guard(c: _Ctx) -> bool:
        return isinstance(c.t, Frame) and not _hl(c.t.body) and c.sub(c.t.env, c.t.allowed, c.t.body) == cls
    return guard


# -- helpers on heads --------------------------------------------------------


def _int(c: _Ctx, t) -> bool:
    return classify_head(c.head(t.label)).is_int


def _ints(c: _Ctx, *ts) -> bool:
    return all(_int(c, t) for t in ts)


def _zero_division(c: _Ctx) -> bool:
    t = c.t
    return t.op in (BinaryOp.DIV, BinaryOp.MOD) and c.head(t.right.label).value == 0


def _cop_holds(c: _Ctx) -> bool:
    return apply_cop(c.t.op, c.head(c.t.left.label).value, c.head(c.t.right.label).value)


def _index_hit(c: _Ctx) -> bool:
    table, arg = c.head(c.t.fn.label), c.head(c.t.arg.label)
    return isinstance(arg, IntHead) and arg.value in table.indices()


def _fn(c: _Ctx):
    return c.head(c.t.fn.label)


def _closure_of(c: _Ctx, kind) -> bool:
    h = _fn(c)
    return isinstance(h, Closure) and isinstance(h.fun, kind)


def _lambda_dk(c: _Ctx, dk) -> bool:
    h = _fn(c)
    return isinstance(h, Closure) and isinstance(h.fun, Lambda) and h.fun.dk is dk


def _allowed(c: _Ctx, atom: Effect) -> bool:
    return bool(c.chi & atom)


def _live_pointer(c: _Ctx, hl) -> bool:
    h = c.head(hl)
    return isinstance(h, PtrHead) and h.label in c.ph


def _letrec_bad(c: _Ctx) -> bool:
    scope = letrec_env(c.hh, c.env, c.t.bindings)
    return any(value_erroneous(scope, v) is not None for _, v in c.t.bindings)


def _letrec_ptrs(c: _Ctx) -> bool:
    return any(isinstance(v, PtrValue) for _, v in c.t.bindings)


def _generative(f) -> bool:
    dk = DomainKind.CONTRA if isinstance(f, AllQuant) else f.dk
    return dk in (DomainKind.CONTRA, DomainKind.INV)


# -- test-mode helpers ---------------------------------------------------------

_REVERT = (Uop, Bop, Len, AppE, AppF, New, Read, Write, PtrTo, In, Out, FxThen)


def _chk(pattern_type) -> Callable[[_Ctx], bool]:
    return lambda c: isinstance(c.t, Chk) and isinstance(c.t.pattern, pattern_type)


def _subject(c: _Ctx):
    return c.head(c.t.subject)


def _defined(c: _Ctx) -> bool:
    return c.t.subject in c.hh


def _pair(c: _Ctx):
    return (c.t.subject, c.t.pattern.label)


def _hl_case(c: _Ctx) -> bool:
    return isinstance(c.t, Chk) and _hl(c.t.pattern) and _pair(c) not in c.t.ae


def _second(c: _Ctx):
    return c.head(c.t.pattern.label)


def _second_defined(c: _Ctx) -> bool:
    return c.t.pattern.label in c.hh


def _from_var(c: _Ctx) -> bool:
    return isinstance(c.t, Chk) and isinstance(c.t.pattern, From) and isinstance(c.t.pattern.arg, Var)


def _from_typ(c: _Ctx) -> bool:
    hl = c.env.lookup(c.t.pattern.arg.name)
    return hl is not None and classify_head(c.head(hl)).is_typ


def _tabf(c: _Ctx) -> bool:
    return classify_head(_subject(c)).is_tab_fields(e.index for e in c.t.pattern.entries)


# -- the rule table ------------------------------------------------------------

_I = isinstance

RULES: list[tuple[str, str, Callable[[_Ctx], bool]]] = [
    ("RGctxt", STEP, _ctxt(STEP)),
    ("RGctxtF", FAIL, _ctxt(FAIL)),
    ("RGctxtE", ERROR, _ctxt(ERROR)),
    ("RGvar", STEP, lambda c: _I(c.t, Var) and c.t.name in c.env),
    ("RGvarE", ERROR, lambda c: _I(c.t, Var) and c.t.name not in c.env),
    ("RGfalsesF", FAIL, lambda c: _I(c.t, Falses)),
    ("RGanysE", ERROR, lambda c: _I(c.t, Anys)),
    ("RGi", STEP, lambda c: _I(c.t, IntLit)),
    ("RGintsE", ERROR, lambda c: _I(c.t, Ints)),
    ("RGuop", STEP, lambda c: _I(c.t, Uop) and _hl(c.t.arg) and _int(c, c.t.arg)),
    ("RGuopE", ERROR, lambda c: _I(c.t, Uop) and _hl(c.t.arg) and not _int(c, c.t.arg)),
    ("RGbop", STEP, lambda c: _I(c.t, Bop) and _labels(c.t.left, c.t.right)
        and _ints(c, c.t.left, c.t.right) and not _zero_division(c)),
    ("RGbopE", ERROR, lambda c: _I(c.t, Bop) and _labels(c.t.left, c.t.right)
        and (not _ints(c, c.t.left, c.t.right) or _zero_division(c))),
    ("RGcop", STEP, lambda c: _I(c.t, Cop) and _labels(c.t.left, c.t.right)
        and _ints(c, c.t.left, c.t.right) and _cop_holds(c)),
    ("RGcopF", FAIL, lambda c: _I(c.t, Cop) and _labels(c.t.left, c.t.right)
        and _ints(c, c.t.left, c.t.right) and not _cop_holds(c)),
    ("RGcopE", ERROR, lambda c: _I(c.t, Cop) and _labels(c.t.left, c.t.right)
        and not _ints(c, c.t.left, c.t.right)),
    ("RGtab1", STEP, lambda c: _I(c.t, FixedTable) and _first_open_entry(c.t) is None),
    ("RGtab2", STEP, _tab(STEP)),
    ("RGtabF", FAIL, _tab(FAIL)),
    ("RGtabE", ERROR, _tab(ERROR)),
    ("RGarr", STEP, lambda c: _I(c.t, Arr) and _hl(c.t.length) and classify_head(c.head(c.t.length.label)).is_nat),
    ("RGarrE", ERROR, lambda c: _I(c.t, Arr) and _hl(c.t.length)
        and not classify_head(c.head(c.t.length.label)).is_nat),
    ("RGtabsE", ERROR, lambda c: _I(c.t, Tabs)),
    ("RGfun", STEP, lambda c: _I(c.t, (Lambda, AllQuant)) and _generative(c.t)),
    ("RGfunE", ERROR, lambda c: _I(c.t, (Lambda, AllQuant)) and not _generative(c.t)),
    ("RGfunsE", ERROR, lambda c: _I(c.t, Funs)),
    ("RGlen", STEP, lambda c: _I(c.t, Len) and _hl(c.t.arg) and classify_head(c.head(c.t.arg.label)).is_arr),
    ("RGlenE", ERROR, lambda c: _I(c.t, Len) and _hl(c.t.arg) and not classify_head(c.head(c.t.arg.label)).is_arr),
    ("RGappE1", STEP, lambda c: _I(c.t, AppE) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), TableHead) and _index_hit(c)),
    ("RGappE2", STEP, lambda c: _I(c.t, AppE) and _labels(c.t.fn, c.t.arg) and _closure_of(c, Lambda)),
    ("RGappE3", STEP, lambda c: _I(c.t, AppE) and _labels(c.t.fn, c.t.arg) and _closure_of(c, AllQuant)),
    ("RGappEE1", ERROR, lambda c: _I(c.t, AppE) and _labels(c.t.fn, c.t.arg)
        and not classify_head(_fn(c)).is_app),
    ("RGappEE2", ERROR, lambda c: _I(c.t, AppE) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), TableHead) and not _index_hit(c)),
    ("RGappF1", STEP, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), TableHead) and _index_hit(c)),
    ("RGappFF", FAIL, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), TableHead) and c.t.arg.label in c.hh and not _index_hit(c)),
    ("RGappF2", STEP, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg) and _lambda_dk(c, DomainKind.CONTRA)),
    ("RGappF3", STEP, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg) and _closure_of(c, AllQuant)),
    ("RGappF4", STEP, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg) and _lambda_dk(c, DomainKind.INV)),
    ("RGappFE1", ERROR, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg)
        and not classify_head(_fn(c)).is_app),
    ("RGappFE2", ERROR, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), TableHead) and c.t.arg.label not in c.hh),
    ("RGappFE3", ERROR, lambda c: _I(c.t, AppF) and _labels(c.t.fn, c.t.arg)
        and _I(_fn(c), Closure) and not _generative(_fn(c).fun)),
    ("RGfromE", ERROR, lambda c: _I(c.t, From)),
    ("RGnew", STEP, lambda c: _I(c.t, New) and _hl(c.t.init) and _allowed(c, Effect.N)),
    ("RGnewE", ERROR, lambda c: _I(c.t, New) and _hl(c.t.init) and not _allowed(c, Effect.N)),
    ("RGread", STEP, lambda c: _I(c.t, Read) and _hl(c.t.ptr)
        and _live_pointer(c, c.t.ptr.label) and _allowed(c, Effect.R)),
    ("RGreadE", ERROR, lambda c: _I(c.t, Read) and _hl(c.t.ptr)
        and not (_live_pointer(c, c.t.ptr.label) and _allowed(c, Effect.R))),
    ("RGwrite", STEP, lambda c: _I(c.t, Write) and _labels(c.t.ptr, c.t.value)
        and _live_pointer(c, c.t.ptr.label) and _allowed(c, Effect.W)),
    ("RGwriteE", ERROR, lambda c: _I(c.t, Write) and _labels(c.t.ptr, c.t.value)
        and not (_live_pointer(c, c.t.ptr.label) and _allowed(c, Effect.W))),
    ("RGptrE", ERROR, lambda c: _I(c.t, PtrTo)),
    ("RGptrsE", ERROR, lambda c: _I(c.t, Ptrs)),
    ("RGin", STEP, lambda c: _I(c.t, In) and _allowed(c, Effect.IO)),
    ("RGout", STEP, lambda c: _I(c.t, Out) and _hl(c.t.arg) and _int(c, c.t.arg) and _allowed(c, Effect.IO)),
    ("RGinE", ERROR, lambda c: _I(c.t, In) and not _allowed(c, Effect.IO)),
    ("RGoutE", ERROR, lambda c: _I(c.t, Out) and _hl(c.t.arg)
        and not (_int(c, c.t.arg) and _allowed(c, Effect.IO))),
    ("RGunify", STEP, lambda c: _I(c.t, Unify) and _hl(c.t.left)),
    ("RGjoinE", ERROR, lambda c: _I(c.t, Join)),
    ("RGlet", STEP, lambda c: _I(c.t, Let) and _hl(c.t.bound)),
    ("RGletrec", STEP, lambda c: _I(c.t, Letrec) and not _letrec_bad(c)
        and (not _letrec_ptrs(c) or _allowed(c, Effect.N))),
    ("RGletrecE1", ERROR, lambda c: _I(c.t, Letrec) and _letrec_bad(c)),
    ("RGletrecE2", ERROR, lambda c: _I(c.t, Letrec) and _letrec_ptrs(c) and not _allowed(c, Effect.N)),
    ("RGif", STEP, lambda c: _I(c.t, If)),
    ("RGif1", STEP, lambda c: _I(c.t, IfM) and _hl(c.t.cond)),
    ("RGif2", STEP, _ifm(STEP)),
    ("RGif3", STEP, _ifm(FAIL)),
    ("RGifE", ERROR, _ifm(ERROR)),
    ("RGstage", STEP, lambda c: _I(c.t, Stage)),
    ("RGfxE", ERROR, lambda c: _I(c.t, FxThen)),
    ("RGframe1", STEP, lambda c: _I(c.t, Frame) and _hl(c.t.body)),
    ("RGframe2", STEP, _frame(STEP)),
    ("RGframeF", FAIL, _frame(FAIL)),
    ("RGframeE", ERROR, _frame(ERROR)),
    # test mode
    ("RTgen", STEP, _chk(_REVERT)),
    ("RTvar", STEP, lambda c: _chk(Var)(c) and c.t.pattern.name in c.env),
    ("RTvarE", ERROR, lambda c: _chk(Var)(c) and c.t.pattern.name not in c.env),
    ("RTfalses", STEP, _chk(Falses)),
    ("RTanys", STEP, _chk(Anys)),
    ("RTi1", STEP, lambda c: _chk(IntLit)(c) and _subject(c) == IntHead(c.t.pattern.value)),
    ("RTi2", STEP, lambda c: _chk(IntLit)(c) and _defined(c) and _subject(c) != IntHead(c.t.pattern.value)),
    ("RTiE", ERROR, lambda c: _chk(IntLit)(c) and not _defined(c)),
    ("RTints1", STEP, lambda c: _chk(Ints)(c) and classify_head(_subject(c)).is_int),
    ("RTints2", STEP, lambda c: _chk(Ints)(c) and _defined(c) and not classify_head(_subject(c)).is_int),
    ("RTintsE", ERROR, lambda c: _chk(Ints)(c) and not _defined(c)),
    ("RTcop", STEP, _chk(Cop)),
    ("RTtab1", STEP, lambda c: _chk(FixedTable)(c) and _tabf(c)),
    ("RTtab2", STEP, lambda c: _chk(FixedTable)(c) and _defined(c) and not _tabf(c)),
    ("RTarr1", STEP, lambda c: _chk(Arr)(c) and classify_head(_subject(c)).is_arr),
    ("RTarr2", STEP, lambda c: _chk(Arr)(c) and _defined(c) and not classify_head(_subject(c)).is_arr),
    ("RTtabs1", STEP, lambda c: _chk(Tabs)(c) and classify_head(_subject(c)).is_tab),
    ("RTtabs2", STEP, lambda c: _chk(Tabs)(c) and _defined(c) and not classify_head(_subject(c)).is_tab),
    ("RTtabE", ERROR, lambda c: _chk(FixedTable)(c) and not _defined(c)),
    ("RTarrE", ERROR, lambda c: _chk(Arr)(c) and not _defined(c)),
    ("RTtabsE", ERROR, lambda c: _chk(Tabs)(c) and not _defined(c)),
    ("RTfun", STEP, lambda c: _chk((Lambda, AllQuant))(c) and _defined(c)
        and not classify_head(_subject(c)).is_fun),
    ("RTfuns1", STEP, lambda c: _chk(Funs)(c) and classify_head(_subject(c)).is_fun),
    ("RTfuns2", STEP, lambda c: _chk(Funs)(c) and _defined(c) and not classify_head(_subject(c)).is_fun),
    ("RTfunE1", ERROR, lambda c: _chk((Lambda, AllQuant))(c) and _I(_subject(c), Closure)),
    ("RTfunE2", ERROR, lambda c: _chk((Lambda, AllQuant))(c) and not _defined(c)),
    ("RTfunsE", ERROR, lambda c: _chk(Funs)(c) and not _defined(c)),
    ("RTfrom1", STEP, lambda c: _chk(From)(c) and not _I(c.t.pattern.arg, Var)),
    ("RTfrom2", STEP, lambda c: _from_var(c) and _from_typ(c)),
    ("RTfromE", ERROR, lambda c: _from_var(c) and not _from_typ(c)),
    ("RTptrs1", STEP, lambda c: _chk(Ptrs)(c) and classify_head(_subject(c)).is_ptr),
    ("RTptrs2", STEP, lambda c: _chk(Ptrs)(c) and _defined(c) and not classify_head(_subject(c)).is_ptr),
    ("RTptrsE", ERROR, lambda c: _chk(Ptrs)(c) and not _defined(c)),
    ("RTunify", STEP, _chk(Unify)),
    ("RTjoin", STEP, _chk(Join)),
    ("RTlet", STEP, _chk(Let)),
    ("RTletrec", STEP, _chk(Letrec)),
    ("RTif", STEP, _chk(If)),
    ("RTstage", STEP, _chk(Stage)),
    ("RThl", STEP, lambda c: _chk(HL)(c) and _pair(c) in c.t.ae),
    ("RThli1", STEP, lambda c: _hl_case(c) and _I(_subject(c), IntHead) and _second(c) == _subject(c)),
    ("RThli2", STEP, lambda c: _hl_case(c) and _I(_subject(c), IntHead) and _second_defined(c)
        and _second(c) != _subject(c)),
    ("RThltab1", STEP, lambda c: _hl_case(c) and _I(_subject(c), TableHead)
        and classify_head(_second(c)).is_tab_fields(_subject(c).indices())),
    ("RThltab2", STEP, lambda c: _hl_case(c) and _I(_subject(c), TableHead) and _second_defined(c)
        and not classify_head(_second(c)).is_tab_fields(_subject(c).indices())),
    ("RThlfun", STEP, lambda c: _hl_case(c) and _I(_subject(c), Closure) and _second_defined(c)
        and not classify_head(_second(c)).is_fun),
    ("RThlpl1", STEP, lambda c: _hl_case(c) and _I(_subject(c), PtrHead) and _second(c) == _subject(c)),
    ("RThlpl2", STEP, lambda c: _hl_case(c) and _I(_subject(c), PtrHead) and _second_defined(c)
        and _second(c) != _subject(c)),
    ("RThlfunE", ERROR, lambda c: _hl_case(c) and _I(_subject(c), Closure) and _I(_second(c), Closure)),
    ("RThlE", ERROR, lambda c: _hl_case(c) and (not _defined(c) or not _second_defined(c))),
]

RULE_CLASS = {name: cls for name, cls, _ in RULES}
MACHINE_RULES = tuple(name for name, _, _ in RULES)
ALL_RULES = MACHINE_RULES + VALUE_RULES + PROGRAM_RULES


def matching_rules(hh, ph, env, chi, t) -> list[str]:
    c = _Ctx(hh, ph, env, chi, t)
    return [name for name, _, guard in RULES if guard(c)]


def outcome_class(hh, ph, env, chi, t) -> str:
    """The single outcome class for a state; raises if the rules disagree."""
    if isinstance(t, HL):
        return TERMINAL
    names = matching_rules(hh, ph, env, chi, t)
    return _unique_class(names, t)


def _unique_class(names: list[str], t) -> str:
    if not names:
        raise MachineInvariantError(f"no rule matches {type(t).__name__}")
    classes = {RULE_CLASS[n] for n in names}
    if len(classes) > 1:
        raise MachineInvariantError(f"rules of different outcomes match: {names}")
    (cls,) = classes
    if cls == STEP and len(names) > 1:
        raise MachineInvariantError(f"several step rules match: {names}")
    return cls


def applicable_rules(m: MachineState) -> list[str]:
    if isinstance(m.term, HL):
        return ["Terminal"]
    return matching_rules(m.hh, m.ph, m.env, m.allowed, m.term)


def applicable_rule(m: MachineState, inp=None) -> str:
    """The outermost rule ``step`` fires, or ``"Terminal"``.

    Raises ``MachineInvariantError`` when no rule or rules with different
    outcomes match.  Several error rules may match the same state (a letrec
    can be both erroneous and disallowed from allocating); the first listed
    wins, as in ``step``.  The next input never changes which rule applies,
    so ``inp`` is accepted only for symmetry with ``step``.
    """
    names = applicable_rules(m)
    if names == ["Terminal"]:
        return "Terminal"
    _unique_class(names, m.term)
    return names[0]
