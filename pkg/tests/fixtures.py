"""Hand-built machine states for rules no closed source program reaches.

Most of these rules need a head label outside the heap; RGappFE3 needs a
closure with a ``ge`` domain, which letrec and fun both refuse to build.
Reduction from a closed program never produces either, so the states are
assembled directly.
"""

from __future__ import annotations

from aleph.effects import A
from aleph.heap import (
    EMPTY_ENV,
    Closure,
    HeadHeap,
    HeadLabel,
    IntHead,
    MachineState,
    PointerHeap,
    TableHead,
)
from aleph.syntax import (
    HL, AppF, Arr, Chk, DomainKind, Falses, FixedTable, Funs, Ints, IntLit,
    Lambda, Ptrs, Tabs, Var,
)

DANGLING = HeadLabel(99)
EMPTY = FixedTable(())


def _state(cells, term, ph=None) -> MachineState:
    return MachineState(HeadHeap.from_cells(cells), ph or PointerHeap(), EMPTY_ENV, A, term)


def _chk(pattern) -> Chk:
    return Chk(DANGLING, frozenset(), pattern, EMPTY, Falses())


_GE_FUN = Lambda("x", Ints(), DomainKind.GE, A, A, Var("x"))

# name -> (state, rule the machine must report)
FIXTURES = {
    "appf_undefined_argument": (
        _state([TableHead(())], AppF(HL(HeadLabel(0)), HL(DANGLING))), "RGappFE2"),
    "appf_covariant_closure": (
        _state([Closure(EMPTY_ENV, _GE_FUN), IntHead(1)], AppF(HL(HeadLabel(0)), HL(HeadLabel(1)))),
        "RGappFE3"),
    "test_int_undefined": (_state([], _chk(IntLit(1))), "RTiE"),
    "test_ints_undefined": (_state([], _chk(Ints())), "RTintsE"),
    "test_table_undefined": (_state([], _chk(EMPTY)), "RTtabE"),
    "test_arr_undefined": (_state([], _chk(Arr(IntLit(0), "i", Ints()))), "RTarrE"),
    "test_tabs_undefined": (_state([], _chk(Tabs())), "RTtabsE"),
    "test_fun_undefined": (
        _state([], _chk(Lambda("x", Ints(), DomainKind.CONTRA, A, A, Var("x")))), "RTfunE2"),
    "test_funs_undefined": (_state([], _chk(Funs())), "RTfunsE"),
    "test_ptrs_undefined": (_state([], _chk(Ptrs())), "RTptrsE"),
    "test_label_undefined": (
        _state([IntHead(1)], Chk(HeadLabel(0), frozenset(), HL(DANGLING), EMPTY, Falses())), "RThlE"),
}
