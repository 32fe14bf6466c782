"""Runtime values: labels, heads, environments, heaps and machine states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from aleph.effects import A, Effect
from aleph.syntax import AllQuant, Lambda, Term


@dataclass(frozen=True, order=True)
class HeadLabel:
    id: int

    def __str__(self) -> str:
        return f"#hl{self.id}"


@dataclass(frozen=True, order=True)
class PointerLabel:
    id: int

    def __str__(self) -> str:
        return f"#pl{self.id}"


@dataclass(frozen=True)
class Env:
    """Variable to head-label bindings; extension replaces any older binding."""

    bindings: tuple[tuple[str, HeadLabel], ...] = ()

    def lookup(self, x: str) -> HeadLabel | None:
        for name, hl in reversed(self.bindings):
            if name == x:
                return hl
        return None

    def __contains__(self, x: str) -> bool:
        return self.lookup(x) is not None

    def extend(self, *pairs: tuple[str, HeadLabel]) -> Env:
        bindings = list(self.bindings)
        for x, hl in pairs:
            bindings = [b for b in bindings if b[0] != x]
            bindings.append((x, hl))
        return Env(tuple(bindings))

    def dom(self) -> list[str]:
        return [x for x, _ in self.bindings]

    def __len__(self) -> int:
        return len(self.bindings)

    def __str__(self) -> str:
        return "[" + ", ".join(f"{x}={hl}" for x, hl in self.bindings) + "]"


EMPTY_ENV = Env()


# -- heads -------------------------------------------------------------------


@dataclass(frozen=True)
class IntHead:
    value: int


@dataclass(frozen=True)
class TableHead:
    entries: tuple[tuple[int, HeadLabel], ...] = ()

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    def lookup(self, index: int) -> HeadLabel | None:
        for i, hl in self.entries:
            if i == index:
                return hl
        return None


@dataclass(frozen=True)
class Closure:
    env: Env
    fun: Union[Lambda, AllQuant]


@dataclass(frozen=True)
class PtrHead:
    label: PointerLabel


Head = Union[IntHead, TableHead, Closure, PtrHead]


# -- heaps -------------------------------------------------------------------


class HeadHeap:
    """Persistent, append-only map from head labels to heads.

    Labels ``base .. base+size-1`` index into a list that may be shared with
    larger heaps built from this one.  Appending writes in place only when no
    other heap has already grown the shared list past ``size``.  ``None``
    cells are labels outside the domain (only hand-built states have them).
    """

    __slots__ = ("_cells", "_size", "_count", "base")

    def __init__(self, base: int = 0):
        self._cells: list[Head | None] = []
        self._size = 0
        self._count = 0
        self.base = base

    @classmethod
    def from_cells(cls, cells, base: int = 0) -> HeadHeap:
        heap = cls(base)
        heap._cells = list(cells)
        heap._size = len(heap._cells)
        heap._count = sum(c is not None for c in heap._cells)
        return heap

    def get(self, hl: HeadLabel) -> Head | None:
        i = hl.id - self.base
        if 0 <= i < self._size:
            return self._cells[i]
        return None

    def __contains__(self, hl: HeadLabel) -> bool:
        return self.get(hl) is not None

    def __len__(self) -> int:
        return self._count

    def next_label(self) -> HeadLabel:
        return HeadLabel(self.base + self._size)

    def extend(self, head: Head) -> tuple[HeadHeap, HeadLabel]:
        hl = self.next_label()
        cells = self._cells
        if len(cells) != self._size:
            cells = cells[: self._size]
        cells.append(head)
        heap = HeadHeap(self.base)
        heap._cells = cells
        heap._size = self._size + 1
        heap._count = self._count + 1
        return heap, hl

    def items(self) -> Iterator[tuple[HeadLabel, Head]]:
        for i in range(self._size):
            cell = self._cells[i]
            if cell is not None:
                yield HeadLabel(self.base + i), cell

    def labels(self) -> list[HeadLabel]:
        return [hl for hl, _ in self.items()]

    def _key(self):
        return (self.base, tuple(self._cells[: self._size]))

    def __eq__(self, other) -> bool:
        return isinstance(other, HeadHeap) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return "HeadHeap({" + ", ".join(f"{hl}: {h}" for hl, h in self.items()) + "})"


@dataclass(frozen=True)
class PointerCell:
    env: Env
    type_ann: Term
    contents: HeadLabel


class PointerHeap:
    """Immutable map from pointer labels to cells, with its own label counter."""

    __slots__ = ("_cells", "next_id")

    def __init__(self, cells: dict[PointerLabel, PointerCell] | None = None, next_id: int = 0):
        self._cells = dict(cells or {})
        self.next_id = next_id

    def get(self, pl: PointerLabel) -> PointerCell | None:
        return self._cells.get(pl)

    def __contains__(self, pl: PointerLabel) -> bool:
        return pl in self._cells

    def __len__(self) -> int:
        return len(self._cells)

    def items(self):
        return sorted(self._cells.items())

    def labels(self) -> list[PointerLabel]:
        return sorted(self._cells)

    def allocate(self, cell: PointerCell) -> tuple[PointerHeap, PointerLabel]:
        pl = PointerLabel(self.next_id)
        cells = dict(self._cells)
        cells[pl] = cell
        return PointerHeap(cells, self.next_id + 1), pl

    def set_contents(self, pl: PointerLabel, hl: HeadLabel) -> PointerHeap:
        cells = dict(self._cells)
        old = cells[pl]
        cells[pl] = PointerCell(old.env, old.type_ann, hl)
        return PointerHeap(cells, self.next_id)

    def _key(self):
        return (self.next_id, tuple(self.items()))

    def __eq__(self, other) -> bool:
        return isinstance(other, PointerHeap) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return "PointerHeap({" + ", ".join(f"{pl}: {c.contents}" for pl, c in self.items()) + "})"


class MachineInvariantError(AssertionError):
    """A state violates a structural precondition of the machine."""


def restore_pointer_heap(current: PointerHeap, saved: PointerHeap) -> PointerHeap:
    """``current`` with each cell replaced by its ``saved`` version where one exists.

    Pointers created after the snapshot stay in the heap.
    """
    cells = {}
    for pl, cell in current.items():
        cells[pl] = saved.get(pl) or cell
    for pl in saved.labels():
        if pl not in current:
            raise MachineInvariantError(f"saved pointer {pl} missing from the current heap")
    return PointerHeap(cells, current.next_id)


@dataclass(frozen=True)
class MachineState:
    hh: HeadHeap
    ph: PointerHeap
    env: Env
    allowed: Effect
    term: Term

    @classmethod
    def initial(cls, term: Term, offset: int = 0) -> MachineState:
        """The program start state with label counters starting at ``offset``."""
        return cls(HeadHeap(offset), PointerHeap(next_id=offset), EMPTY_ENV, A, term)
