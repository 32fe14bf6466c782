import random

import pytest

from aleph.effects import T
from aleph.syntax import (
    SOURCE_TYPES, Anys, AppE, Bop, BinaryOp, DomainKind, FixedTable, FxThen,
    IntLit, Ints, Lambda, Len, Let, Letrec, TableEntry, TupleValue, Var,
    alpha_equal, free_vars, is_revert_to_generate, well_formed_source,
)
from aleph.effects import Effect
from generators import NAMES, TermGen


def entry(x, i, t):
    return TableEntry(x, i, t)


def test_duplicate_table_index():
    t = FixedTable((entry("x", 0, IntLit(1)), entry("y", 0, IntLit(2))))
    diags = well_formed_source(t)
    assert len(diags) == 1
    assert "duplicate table index" in diags[0].message


def test_closed_let_is_clean():
    assert well_formed_source(Let("x", IntLit(5), Var("x"))) == []


def test_bare_variable_is_open_program():
    diags = well_formed_source(Var("x"))
    assert [d.message for d in diags] == ["unbound variable x"]
    assert well_formed_source(Var("x"), program=False) == []


def test_diagnostic_path_points_at_subterm():
    t = Let("x", IntLit(5), Bop(BinaryOp.ADD, Var("x"), Var("y")))
    (d,) = well_formed_source(t)
    assert d.path == (1, 1)


def test_duplicate_tuple_index_and_letrec_name():
    t = Letrec((("a", TupleValue(((0, "a"), (0, "a")))), ("a", TupleValue(()))), Var("a"))
    messages = sorted(d.message for d in well_formed_source(t))
    assert messages == ["duplicate letrec binding a", "duplicate tuple index 0"]


def test_free_vars_examples():
    assert free_vars(Var("x")) == {"x"}
    assert free_vars(Let("x", IntLit(5), Var("x"))) == set()
    dependent = FixedTable((entry("a", 0, IntLit(1)), entry("b", 1, Var("a"))))
    assert free_vars(dependent) == set()


def test_free_vars_binding_structure():
    # an entry does not see its own name, nor later ones
    t = FixedTable((entry("a", 0, Var("a")), entry("b", 1, Var("c"))))
    assert free_vars(t) == {"a", "c"}
    # let does not bind in its bound term
    assert free_vars(Let("x", Var("x"), Var("x"))) == {"x"}
    # letrec binds mutually, including inside values
    t = Letrec((("f", TupleValue(((0, "g"),))), ("g", TupleValue(((0, "f"),)))), Var("h"))
    assert free_vars(t) == {"h"}


def _fun(x, body):
    return Lambda(x, Ints(), DomainKind.INV, T, T, body)


def test_alpha_equal_examples():
    assert alpha_equal(_fun("x", Var("x")), _fun("y", Var("y")))
    assert not alpha_equal(Var("x"), Var("y"))
    assert not alpha_equal(Let("x", IntLit(5), Var("x")), Let("x", IntLit(6), Var("x")))


def test_alpha_equal_respects_shadowing():
    a = Let("x", IntLit(1), Let("y", IntLit(2), Var("x")))
    b = Let("y", IntLit(1), Let("y", IntLit(2), Var("y")))
    assert not alpha_equal(a, b)


def test_revert_to_generate_examples():
    assert is_revert_to_generate(Len(Var("t")))
    assert not is_revert_to_generate(Ints())
    assert is_revert_to_generate(FxThen(Effect.P, Var("t")))
    assert not is_revert_to_generate(Anys())
    assert is_revert_to_generate(AppE(Var("f"), Var("x")))


class _Renamed(TermGen):
    """Replays another generator's choices under a bijective renaming."""

    def __init__(self, rng, mapping):
        super().__init__(rng)
        self.mapping = mapping

    def spell(self, name):
        return self.mapping[name]


def _pair(seed, mapping, depth=4):
    return TermGen(random.Random(seed)).term(depth), _Renamed(random.Random(seed), mapping).term(depth)


def _close(t, fv, spell=lambda x: x):
    for x in sorted(fv):
        t = Let(spell(x), IntLit(0), t)
    return t


def test_alpha_equal_is_an_equivalence():
    terms = [TermGen(random.Random(s)).term(3) for s in range(150)]
    for a in terms[:40]:
        assert alpha_equal(a, a)
        for b in terms[:40]:
            assert alpha_equal(a, b) == alpha_equal(b, a)
    # transitivity over the classes that actually occur
    for a in terms[:30]:
        for b in terms[:30]:
            if alpha_equal(a, b):
                for c in terms[:30]:
                    if alpha_equal(b, c):
                        assert alpha_equal(a, c)


def test_renaming_bound_variables_preserves_alpha_equality():
    mapping = {x: x.upper() + "_" for x in NAMES}
    for seed in range(300):
        a, b = _pair(seed, mapping)
        fv = free_vars(a)
        assert free_vars(b) == {mapping[x] for x in fv}
        assert alpha_equal(_close(a, fv), _close(b, fv, mapping.get))


def test_renaming_free_variables_breaks_alpha_equality():
    mapping = {x: x.upper() + "_" for x in NAMES}
    checked = 0
    for seed in range(300):
        a, b = _pair(seed, mapping)
        if free_vars(a):
            checked += 1
            assert not alpha_equal(a, b)
    assert checked > 50


def test_every_source_constructor_is_distinct():
    assert len(SOURCE_TYPES) == len(set(SOURCE_TYPES)) == 32


@pytest.mark.parametrize("seed", range(5))
def test_closed_terms_have_no_unbound_diagnostics(seed):
    for k in range(60):
        t = TermGen(random.Random(seed * 1000 + k)).term(4)
        if not free_vars(t):
            assert not any("unbound" in d.message for d in well_formed_source(t))
