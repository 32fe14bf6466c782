"""Seeded random generators for source terms and runnable programs."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from aleph.effects import ATOMS, Effect, T, A
from aleph.syntax import (
    AllQuant, Anys, AppE, AppF, Arr, BinaryOp, Bop, CompareOp, Cop,
    Decidability, DomainKind, Falses, FixedTable, From, Funs, FxThen, If, In,
    IntLit, Ints, Join, Lambda, Len, Let, Letrec, New, Out, PtrTo, Ptrs,
    PtrValue, Read, Stage, TableEntry, Tabs, TupleValue, UnaryOp, Unify, Uop,
    Var, Write,
)

NAMES = ["x", "y", "z", "a", "b", "f", "g", "n", "p", "q", "t", "u", "v", "w", "k", "m"]


def random_effect(rng: random.Random) -> Effect:
    e = T
    for atom in ATOMS:
        if rng.random() < 0.5:
            e |= atom
    return e


# -- arbitrary well-formed source terms (for printing round trips) ------------


class TermGen:
    """Any source constructor, names drawn from a small pool so shadowing
    and free variables both occur."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def name(self) -> str:
        return self.spell(self.rng.choice(NAMES))

    def spell(self, name: str) -> str:
        """Hook for generating a consistently renamed copy of a term."""
        return name

    def fx(self) -> Effect:
        return random_effect(self.rng)

    def term(self, depth: int):
        rng = self.rng
        if depth <= 0:
            return rng.choice([
                lambda: Var(self.name()), lambda: IntLit(rng.randint(-20, 20)),
                Falses, Anys, Ints, Tabs, Funs, Ptrs, In,
            ])()
        d = depth - 1
        t = self.term
        choices = [
            lambda: t(0),
            lambda: Uop(rng.choice(list(UnaryOp)), t(d)),
            lambda: Bop(rng.choice(list(BinaryOp)), t(d), t(d)),
            lambda: Cop(rng.choice(list(CompareOp)), t(d), t(d)),
            lambda: self.table(d),
            lambda: Arr(t(d), self.name(), t(d)),
            lambda: self.fun(d),
            lambda: self.allquant(d),
            lambda: Len(t(d)),
            lambda: AppE(t(d), t(d)),
            lambda: AppF(t(d), t(d)),
            lambda: From(t(d)),
            lambda: New(t(d), t(d)),
            lambda: Read(t(d)),
            lambda: Write(t(d), t(d)),
            lambda: PtrTo(t(d)),
            lambda: Out(t(d)),
            lambda: Unify(t(d), t(d)),
            lambda: Join(t(d), t(d)),
            lambda: Let(self.name(), t(d), t(d)),
            lambda: self.letrec(d),
            lambda: If(self.name(), t(d), t(d), t(d)),
            lambda: Stage(self.fx(), rng.choice(list(Decidability)), t(d), t(d)),
            lambda: FxThen(self.fx(), t(d)),
        ]
        return rng.choice(choices)()

    def table(self, d):
        indices = self.rng.sample(range(-3, 8), self.rng.randint(0, 3))
        return FixedTable(tuple(TableEntry(self.name(), i, self.term(d)) for i in indices))

    def fun(self, d):
        return Lambda(self.name(), self.term(d), self.rng.choice(list(DomainKind)),
                      self.fx(), self.fx(), self.term(d))

    def allquant(self, d):
        return AllQuant(self.name(), self.term(d), self.term(d), self.name(),
                        self.term(d), self.fx(), self.fx(), self.term(d))

    def letrec(self, d):
        names = [self.spell(x) for x in self.rng.sample(NAMES, self.rng.randint(1, 3))]
        bindings = []
        for x in names:
            kind = self.rng.randrange(4)
            if kind == 0:
                idx = self.rng.sample(range(0, 5), self.rng.randint(0, 3))
                v = TupleValue(tuple((i, self.name()) for i in idx))
            elif kind == 1:
                v = self.fun(d)
            elif kind == 2:
                v = self.allquant(d)
            else:
                v = PtrValue(self.term(d), self.name())
            bindings.append((x, v))
        return Letrec(tuple(bindings), self.term(d))


# -- runnable closed programs -------------------------------------------------


@dataclass
class Scope:
    ints: list = field(default_factory=list)
    tabs: list = field(default_factory=list)
    funs: list = field(default_factory=list)
    ptrs: list = field(default_factory=list)
    fresh: list = field(default_factory=lambda: [0])

    def new(self, stem: str) -> str:
        self.fresh[0] += 1
        return f"{stem}{self.fresh[0]}"

    def with_(self, kind: str, name: str) -> Scope:
        s = Scope(list(self.ints), list(self.tabs), list(self.funs), list(self.ptrs), self.fresh)
        getattr(s, kind).append(name)
        return s


class ProgramGen:
    """Closed programs built mostly from well-typed pieces, with a small rate
    of deliberate misuse so failures and errors also occur."""

    def __init__(self, rng: random.Random, io: bool = True):
        self.rng = rng
        self.io = io

    def program(self, depth: int = 4):
        return self.bindings(Scope(), depth, self.rng.randint(1, 5))

    def bindings(self, scope: Scope, depth: int, count: int):
        rng = self.rng
        if count == 0:
            r = rng.random()
            if r < 0.75:
                return FixedTable(())
            if r < 0.85:
                return self.int_expr(scope, 1, self.io)
            return If(scope.new("c"), self.cond(scope, 1), FixedTable(()), FixedTable(()))
        kind = rng.choice(["ints", "ints", "tabs", "funs", "ptrs", "rec", "out"])
        if kind == "ints":
            x = scope.new("i")
            return Let(x, self.int_expr(scope, depth, self.io), self.bindings(scope.with_("ints", x), depth, count - 1))
        if kind == "tabs":
            x = scope.new("t")
            return Let(x, self.table_expr(scope, depth), self.bindings(scope.with_("tabs", x), depth, count - 1))
        if kind == "funs":
            x = scope.new("f")
            return Let(x, self.fun_expr(scope, depth), self.bindings(scope.with_("funs", x), depth, count - 1))
        if kind == "ptrs":
            x = scope.new("p")
            return Let(x, New(Ints(), self.int_expr(scope, depth - 1, self.io)),
                       self.bindings(scope.with_("ptrs", x), depth, count - 1))
        if kind == "rec":
            return self.countdown(scope, depth, count)
        x = scope.new("o")
        body = Out(self.int_expr(scope, depth - 1, self.io)) if self.io else self.int_expr(scope, depth - 1, False)
        return Let(x, body, self.bindings(scope.with_("ints", x), depth, count - 1))

    def countdown(self, scope: Scope, depth: int, count: int):
        """A recursive function over a small natural number."""
        f, n, z = scope.new("r"), scope.new("n"), scope.new("z")
        inner = scope.with_("ints", n)
        step = self.int_expr(inner, 1, False)
        body = If(z, Cop(CompareOp.LE, Var(n), IntLit(0)), IntLit(0),
                  Bop(BinaryOp.ADD, step, AppF(Var(f), Bop(BinaryOp.SUB, Var(n), IntLit(1)))))
        dk = self.rng.choice([DomainKind.CONTRA, DomainKind.INV])
        fun = Lambda(n, Ints(), dk, T, T, body)
        rest = scope.with_("funs", f)
        x = scope.new("i")
        call = AppF(Var(f), IntLit(self.rng.randint(0, 6)))
        return Letrec(((f, fun),), Let(x, call, self.bindings(rest.with_("ints", x), depth, count - 1)))

    def int_expr(self, scope: Scope, depth: int, io: bool):
        rng = self.rng
        leaves = [lambda: IntLit(rng.randint(-3, 9))]
        if scope.ints:
            leaves.append(lambda: Var(rng.choice(scope.ints)))
        if depth <= 0:
            return rng.choice(leaves)()
        d = depth - 1
        options = leaves + [
            lambda: Uop(rng.choice(list(UnaryOp)), self.int_expr(scope, d, io)),
            lambda: Bop(rng.choice([BinaryOp.ADD, BinaryOp.SUB, BinaryOp.MUL]),
                        self.int_expr(scope, d, io), self.int_expr(scope, d, io)),
            lambda: Bop(rng.choice([BinaryOp.DIV, BinaryOp.MOD]),
                        self.int_expr(scope, d, io), IntLit(rng.choice([-2, 1, 2, 3, 0]))),
            lambda: self.let_int(scope, d, io),
            lambda: If(scope.new("c"), self.cond(scope, d), self.int_expr(scope, d, io),
                       self.int_expr(scope, d, io)),
            lambda: Unify(self.int_expr(scope, d, io), self.pattern(scope, d)),
            lambda: Stage(T, Decidability.D, Anys(), self.int_expr(scope, d, io)),
        ]
        if scope.funs:
            options.append(lambda: AppF(Var(rng.choice(scope.funs)), self.int_expr(scope, d, io)))
            options.append(lambda: AppE(Var(rng.choice(scope.funs)), self.int_expr(scope, d, io)))
        if scope.tabs:
            options.append(lambda: AppE(Var(rng.choice(scope.tabs)), IntLit(rng.randint(0, 2))))
            options.append(lambda: AppF(Var(rng.choice(scope.tabs)), IntLit(rng.randint(0, 3))))
            options.append(lambda: Len(Var(rng.choice(scope.tabs))))
        if scope.ptrs:
            options.append(lambda: Read(Var(rng.choice(scope.ptrs))))
            options.append(lambda: Write(Var(rng.choice(scope.ptrs)), self.int_expr(scope, d, io)))
        if io:
            options.append(lambda: In())
            options.append(lambda: Out(self.int_expr(scope, d, io)))
        return rng.choice(options)()

    def let_int(self, scope, d, io):
        x = scope.new("l")
        return Let(x, self.int_expr(scope, d, io), self.int_expr(scope.with_("ints", x), d, io))

    def cond(self, scope: Scope, depth: int):
        """Condition terms: no IO, since conditions may not perform it."""
        rng = self.rng
        r = rng.random()
        if r < 0.5:
            return Cop(rng.choice(list(CompareOp)), self.int_expr(scope, depth, False),
                       self.int_expr(scope, depth, False))
        if r < 0.85:
            return Unify(self.int_expr(scope, depth, False), self.pattern(scope, depth))
        if r < 0.95 and scope.ptrs:
            return Write(Var(rng.choice(scope.ptrs)), self.int_expr(scope, depth, False))
        return Falses()

    def pattern(self, scope: Scope, depth: int):
        rng = self.rng
        d = max(depth - 1, 0)
        options = [
            Ints, Anys, Tabs, Funs, Ptrs,
            lambda: IntLit(rng.randint(-2, 6)),
            lambda: Cop(rng.choice(list(CompareOp)), Ints(), self.int_expr(scope, d, False)),
            lambda: Join(self.pattern(scope, d), self.pattern(scope, d)),
            lambda: Unify(Ints(), self.pattern(scope, d)),
            lambda: Bop(BinaryOp.ADD, self.int_expr(scope, d, False), IntLit(1)),
            lambda: FixedTable(()),
            lambda: Arr(IntLit(1), scope.new("j"), Ints()),
        ]
        if scope.ints:
            options.append(lambda: Var(rng.choice(scope.ints)))
        return rng.choice(options)()

    def table_expr(self, scope: Scope, depth: int):
        rng = self.rng
        if rng.random() < 0.4:
            i = scope.new("e")
            return Arr(IntLit(rng.randint(0, 3)), i, self.int_expr(scope.with_("ints", i), depth - 1, False))
        n = rng.randint(0, 3)
        entries = []
        inner = scope
        for k in range(n):
            x = scope.new("e")
            entries.append(TableEntry(x, k, self.int_expr(inner, depth - 1, False)))
            inner = inner.with_("ints", x)
        return FixedTable(tuple(entries))

    def fun_expr(self, scope: Scope, depth: int):
        rng = self.rng
        x = scope.new("x")
        body = self.int_expr(scope.with_("ints", x), depth - 1, self.io and rng.random() < 0.5)
        dk = rng.choice([DomainKind.CONTRA, DomainKind.INV, DomainKind.INV])
        domain = rng.choice([Ints(), Cop(CompareOp.GE, Ints(), IntLit(0)), Anys()])
        return Lambda(x, domain, dk, T, A if rng.random() < 0.7 else random_effect(rng), body)


# -- programs with IO confined to places where it is not allowed -------------


class GatedIOGen:
    """Programs whose only IO inside conditions or function domains.

    A prefix of IO-free bindings (plus known top-level outputs) is followed
    by one gated construct whose first evaluated subterm performs IO.
    Returns the program and the outputs the prefix performs.
    """

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.safe = ProgramGen(rng, io=False)

    def site(self, scope: Scope):
        rng = self.rng
        k = IntLit(rng.randint(0, 9))
        return rng.choice([
            lambda: In(),
            lambda: Out(k),
            lambda: Bop(BinaryOp.ADD, In(), k),
            lambda: Uop(UnaryOp.NEG, In()),
            lambda: Cop(CompareOp.LT, Out(k), IntLit(5)),
            lambda: Let(scope.new("s"), In(), k),
            lambda: Unify(In(), Ints()),
        ])()

    def safe_int(self, scope: Scope):
        """Integer terms that never fail or err: no division, no lookups."""
        rng = self.rng
        if rng.random() < 0.5 or not scope.ints:
            return IntLit(rng.randint(-3, 9))
        return Bop(rng.choice([BinaryOp.ADD, BinaryOp.MUL]), Var(rng.choice(scope.ints)),
                   IntLit(rng.randint(0, 4)))

    def gated(self, scope: Scope):
        rng = self.rng
        site = self.site(scope)
        c = scope.new("c")
        kind = rng.randrange(6)
        if kind == 0:
            return If(c, site, FixedTable(()), FixedTable(()))
        if kind == 1:
            return If(c, Let(scope.new("l"), self.safe_int(scope), site), FixedTable(()), FixedTable(()))
        if kind == 2:
            inner = If(scope.new("d"), site, IntLit(1), IntLit(2))
            return If(c, inner, FixedTable(()), FixedTable(()))
        if kind == 3:
            pattern = Cop(CompareOp.GT, Ints(), site)
            return If(c, Unify(self.safe_int(scope), pattern), FixedTable(()), FixedTable(()))
        # an invariant function whose domain check performs IO
        f, x = scope.new("f"), scope.new("x")
        dom_fx = random_effect(rng) & ~Effect.IO
        if kind == 4:
            domain = Let(scope.new("s"), site, Ints())
        else:
            domain = Bop(BinaryOp.ADD, site, IntLit(0))
        fun = Lambda(x, domain, DomainKind.INV, dom_fx, A, Var(x))
        return Let(f, fun, AppF(Var(f), self.safe_int(scope)))

    def program(self):
        rng = self.rng
        scope = Scope()
        outputs = []
        steps = []
        for _ in range(rng.randint(0, 3)):
            x = scope.new("i")
            if rng.random() < 0.4:
                v = rng.randint(-5, 20)
                outputs.append(v)
                steps.append((x, Out(IntLit(v))))
            else:
                steps.append((x, self.safe_int(scope)))
            scope = scope.with_("ints", x)
        term = self.gated(scope)
        for x, bound in reversed(steps):
            term = Let(x, bound, term)
        return term, outputs
