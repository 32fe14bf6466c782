import itertools

from aleph.effects import (
    A, ATOMS, RV, T, Effect, all_effects, effect_join, effect_leq, effect_meet,
    effect_seq, format_effect, parse_effect,
)

P, N, R, W, IO = Effect.P, Effect.N, Effect.R, Effect.W, Effect.IO


def test_bottom_below_everything():
    assert effect_leq(T, P)


def test_distinct_atoms_incomparable():
    assert not effect_leq(P, N)
    assert not effect_leq(N, P)


def test_reversible_below_top():
    assert effect_leq(P | N | R | W, A)
    assert RV == P | N | R | W


def test_join_meet_seq_examples():
    assert effect_join(P, IO) == P | IO
    assert effect_meet(A, P | N | R | W) == RV
    assert effect_seq(T, W) == W


def test_thirty_two_effects():
    effects = all_effects()
    assert len(effects) == 32
    assert len(set(effects)) == 32
    assert len(ATOMS) == 5


def test_orders_agree_on_every_pair():
    for a, b in itertools.product(all_effects(), repeat=2):
        # leq is subset, checked against an independent set model
        sa = {x for x in ATOMS if x & a}
        sb = {x for x in ATOMS if x & b}
        assert effect_leq(a, b) == (sa <= sb)
        assert effect_leq(a, b) == (effect_join(a, b) == b) == (effect_meet(a, b) == a)


def test_seq_associative_with_identity():
    for a, b in itertools.product(all_effects(), repeat=2):
        assert effect_seq(T, a) == a == effect_seq(a, T)
        for c in (T, P, IO | W, A):
            assert effect_seq(effect_seq(a, b), c) == effect_seq(a, effect_seq(b, c))


def test_text_forms():
    assert format_effect(T) == "T"
    assert format_effect(A) == "A"
    assert parse_effect("T") == T
    assert parse_effect("A") == A
    assert parse_effect("{P,IO}") == P | IO
    assert parse_effect("{}") == T
    for e in all_effects():
        assert parse_effect(format_effect(e)) == e
