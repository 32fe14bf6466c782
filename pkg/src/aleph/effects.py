"""The five-atom effects lattice.

An effect is a subset of {P, N, R, W, IO}: partiality, pointer creation,
pointer read, pointer write and input/output.  Ordering is inclusion,
join is union, meet is intersection and sequencing is join.
"""

from __future__ import annotations

import enum


class Effect(enum.Flag):
    P = 1
    N = 2
    R = 4
    W = 8
    IO = 16

    def __str__(self) -> str:
        return format_effect(self)


ATOMS = (Effect.P, Effect.N, Effect.R, Effect.W, Effect.IO)

T = Effect(0)
A = Effect.P | Effect.N | Effect.R | Effect.W | Effect.IO
RV = Effect.P | Effect.N | Effect.R | Effect.W


# Flag arithmetic goes through enum machinery; indexing by bits is cheaper.
_BY_BITS = tuple(Effect(bits) for bits in range(32))


def all_effects() -> list[Effect]:
    return list(_BY_BITS)


def effect_leq(a: Effect, b: Effect) -> bool:
    return a._value_ & b._value_ == a._value_


def effect_join(a: Effect, b: Effect) -> Effect:
    return _BY_BITS[a._value_ | b._value_]


def effect_meet(a: Effect, b: Effect) -> Effect:
    return _BY_BITS[a._value_ & b._value_]


def effect_seq(a: Effect, b: Effect) -> Effect:
    return effect_join(a, b)


def atoms_of(e: Effect) -> list[Effect]:
    return [atom for atom in ATOMS if atom & e]


def format_effect(e: Effect) -> str:
    if e == T:
        return "T"
    if e == A:
        return "A"
    return "{" + ",".join(atom.name for atom in atoms_of(e)) + "}"


def parse_effect(text: str) -> Effect:
    """Read ``T``, ``A`` or a braced atom list such as ``{P,IO}``."""
    text = text.strip()
    if text == "T":
        return T
    if text == "A":
        return A
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"malformed effect {text!r}")
    result = T
    body = text[1:-1].strip()
    if not body:
        return result
    for name in body.split(","):
        name = name.strip()
        try:
            result |= Effect[name]
        except KeyError:
            raise ValueError(f"unknown effect atom {name!r}") from None
    return result
