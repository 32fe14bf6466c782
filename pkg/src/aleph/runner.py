"""Whole-program execution: outcomes, action sequences and step traces."""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import os
import sys
import threading
from dataclasses import dataclass, field
from typing import Optional, Union

from aleph.effects import A
from aleph.frontend import show
from aleph.heap import HeadLabel, MachineInvariantError, MachineState, PointerHeap, TableHead
from aleph.machine import (
    Action,
    Error,
    Fail,
    InputExhausted,
    InputSource,
    ScriptedInput,
    Stepped,
    Terminal,
    canonical_text,
    canonicalize,
    serialize_state,
    principal_rule,
    step,
)
from aleph.rules import applicable_rule
from aleph.syntax import HL, MACHINE_TYPES, AllQuant, Chk, Frame, Lambda, Term, free_vars, scoped_children, subterms

DEFAULT_MAX_STEPS = 1_000_000
SUMMARY_WIDTH = 160


def default_max_steps() -> int:
    value = os.environ.get("ALEPH_MAX_STEPS")
    return int(value) if value else DEFAULT_MAX_STEPS


# -- outcomes ----------------------------------------------------------------


@dataclass(frozen=True)
class NonEmptyTableResult:
    def __str__(self) -> str:
        return "NonEmptyTableResult"


@dataclass(frozen=True)
class ToplevelFailure:
    def __str__(self) -> str:
        return "ToplevelFailure"


@dataclass(frozen=True)
class MachineError:
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        return f"MachineError({self.rule})"


Cause = Union[NonEmptyTableResult, ToplevelFailure, MachineError]


@dataclass(frozen=True)
class Terminated:
    actions: tuple[Action, ...]
    rule = "RP1"


@dataclass(frozen=True)
class BudgetExhausted:
    actions: tuple[Action, ...]
    steps: int
    rule = "RP2"


@dataclass(frozen=True)
class ProgramError:
    actions: tuple[Action, ...]
    cause: Cause

    @property
    def rule(self) -> str:
        if isinstance(self.cause, NonEmptyTableResult):
            return "RPE1"
        if isinstance(self.cause, ToplevelFailure):
            return "RPE2"
        return "RPE3"


ProgramOutcome = Union[Terminated, BudgetExhausted, ProgramError]


def observable(actions) -> list[Action]:
    return [a for a in actions if not a.pure]


# -- traces ------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    step: int
    rule: str
    derivation: tuple[str, ...]
    action: Optional[Action]  # None for the closing Fail/Error record
    term: str
    head_count: int
    ptr_count: int
    outcome: str = "Stepped"
    digest: str = ""  # canonical state hash, only in canonical traces

    def to_json(self) -> str:
        record = {
            "step": self.step,
            "rule": self.rule,
            "derivation": compact_derivation(self.derivation),
            "action": None if self.action is None else str(self.action),
            "term": self.term,
            "headCount": self.head_count,
            "ptrCount": self.ptr_count,
            "outcome": self.outcome,
        }
        if self.digest:
            record["digest"] = self.digest
        return json.dumps(record, separators=(",", ":"))

    def to_text(self) -> str:
        action = "-" if self.action is None else str(self.action)
        return (f"{self.step:>6} {self.rule:<10} {action:<8} "
                f"hh={self.head_count} ph={self.ptr_count}  {self.term}")


def compact_derivation(derivation) -> str:
    """Space-separated rule names with repeats folded, e.g. ``RGframe2^3 RGvar``."""
    parts = []
    for name in derivation:
        if parts and parts[-1][0] == name:
            parts[-1][1] += 1
        else:
            parts.append([name, 1])
    return " ".join(name if n == 1 else f"{name}^{n}" for name, n in parts)


def summarize(term: Term, width: int = SUMMARY_WIDTH) -> str:
    return show(term, limit=width)


def outcome_to_json(outcome: ProgramOutcome) -> str:
    record = {
        "outcome": type(outcome).__name__,
        "rule": outcome.rule,
        "actions": [str(a) for a in observable(outcome.actions)],
    }
    if isinstance(outcome, BudgetExhausted):
        record["steps"] = outcome.steps
    if isinstance(outcome, ProgramError):
        record["cause"] = str(outcome.cause)
        if isinstance(outcome.cause, MachineError):
            record["detail"] = outcome.cause.detail
    return json.dumps(record, separators=(",", ":"))


def format_outcome(outcome: ProgramOutcome) -> str:
    actions = "[" + ", ".join(str(a) for a in observable(outcome.actions)) + "]"
    if isinstance(outcome, Terminated):
        head = "Terminated"
    elif isinstance(outcome, BudgetExhausted):
        head = f"BudgetExhausted after {outcome.steps} steps"
    elif isinstance(outcome.cause, MachineError):
        head = f"ProgramError {outcome.cause}: {outcome.cause.detail}"
    else:
        head = f"ProgramError {outcome.cause}"
    return f"{head}\nactions {actions}"


# -- checks used in debug mode -----------------------------------------------


def check_monotone(before: MachineState, after: MachineState) -> None:
    """Heaps only grow, cells keep their environment and annotation, and the
    environment and allowed effects are untouched."""
    for hl, head in before.hh.items():
        if after.hh.get(hl) != head:
            raise MachineInvariantError(f"head {hl} changed or vanished")
    for pl, cell in before.ph.items():
        later = after.ph.get(pl)
        if later is None:
            raise MachineInvariantError(f"pointer {pl} vanished")
        if later.env != cell.env or later.type_ann != cell.type_ann:
            raise MachineInvariantError(f"pointer {pl} changed its environment or annotation")
    if after.env != before.env:
        raise MachineInvariantError("environment changed")
    if after.allowed != before.allowed:
        raise MachineInvariantError("allowed effects changed")


def _labels_in(obj, found: list, seen: Optional[dict] = None) -> None:
    """Collect head labels under ``obj``; objects in ``seen`` are skipped and
    everything visited is added to it."""
    stack = [obj]
    while stack:
        x = stack.pop()
        if isinstance(x, HeadLabel):
            found.append(x)
            continue
        if seen is not None:
            if id(x) in seen:
                continue
            seen[id(x)] = x  # keeps x alive so its id stays unique
        if isinstance(x, PointerHeap):
            stack.extend(cell.contents for _, cell in x.items())
        elif isinstance(x, (tuple, frozenset)):
            stack.extend(x)
        elif isinstance(x, (Lambda, AllQuant)):
            continue  # source functions carry no labels
        else:
            names = _field_names(type(x))
            if names:
                stack.extend(getattr(x, n) for n in names)


@functools.cache
def _field_names(cls) -> tuple[str, ...]:
    if not dataclasses.is_dataclass(cls):
        return ()
    return tuple(f.name for f in dataclasses.fields(cls))


def check_no_dangling(before: MachineState, after: MachineState,
                      tolerated: frozenset = frozenset(),
                      seen: Optional[dict] = None) -> None:
    """Labels reachable from the term, environment, new heads and pointer
    contents are all allocated. ``tolerated`` lists labels that were already
    dangling in a hand-built start state.

    Heads never change and the heap only grows, so an object whose labels
    were all allocated once stays that way; passing the same ``seen`` dict
    across the steps of a run skips such objects.
    """
    found: list = []
    _labels_in(after.term, found, seen)
    _labels_in(after.env, found, seen)
    _labels_in(after.ph, found, seen)
    for k in range(before.hh.next_label().id, after.hh.next_label().id):
        _labels_in(after.hh.get(HeadLabel(k)), found, seen)
    for hl in found:
        if hl not in after.hh and hl not in tolerated:
            raise MachineInvariantError(f"dangling head label {hl}")


def dangling_labels(m: MachineState) -> frozenset:
    found: list = []
    _labels_in(m.term, found)
    _labels_in(m.env, found)
    _labels_in(m.ph, found)
    for _, head in m.hh.items():
        _labels_in(head, found)
    return frozenset(hl for hl in found if hl not in m.hh)


def _machine_children(t):
    if isinstance(t, Frame):
        return [t.body]
    return [child for child, _ in scoped_children(t)]


def check_chk_shapes(t: Term) -> None:
    """Every test node has a source or label pattern and closed branches."""
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, Chk):
            p = node.pattern
            if not isinstance(p, HL) and any(isinstance(sub, MACHINE_TYPES) for _, sub, _ in subterms(p)):
                raise MachineInvariantError(f"test pattern is extended syntax: {summarize(p)}")
            for branch in (node.then, node.else_):
                loose = free_vars(branch)
                if loose:
                    raise MachineInvariantError(f"test branch has free variables {sorted(loose)}")
        stack.extend(_machine_children(node))


# -- driver ------------------------------------------------------------------


@dataclass
class _Run:
    check: bool = False
    record: bool = False
    canonical: bool = False
    actions: list = field(default_factory=list)
    entries: list = field(default_factory=list)
    verified: dict = field(default_factory=dict)

    def entry(self, index, m, rule, deriv, action, outcome="Stepped"):
        if not self.record:
            return
        shown, digest = m, ""
        if self.canonical:
            shown = canonicalize(m)
            digest = hashlib.sha256(serialize_state(shown).encode()).hexdigest()[:16]
        self.entries.append(TraceEntry(
            index, rule, deriv, action, summarize(shown.term),
            len(m.hh), len(m.ph), outcome, digest,
        ))


def _drive(t: Term, inputs: InputSource, max_steps: int, run: _Run,
           state: Optional[MachineState] = None) -> ProgramOutcome:
    m = state or MachineState.initial(t)
    steps = 0
    tolerated = dangling_labels(m) if run.check else frozenset()
    while True:
        if run.check:
            expected = applicable_rule(m)
        try:
            outcome = None if steps >= max_steps and not _is_terminal(m) else step(m, inputs)
        except InputExhausted as exc:
            exc.actions = list(run.actions)
            exc.entries = list(run.entries)
            raise
        if outcome is None:
            return BudgetExhausted(tuple(run.actions), steps)
        if run.check:
            got = "Terminal" if isinstance(outcome, Terminal) else outcome.derivation[0]
            if got != expected:
                raise MachineInvariantError(f"step fired {got} but guards select {expected}")
        if isinstance(outcome, Terminal):
            head = m.hh.get(outcome.label)
            if isinstance(head, TableHead) and not head.entries:
                return Terminated(tuple(run.actions))
            return ProgramError(tuple(run.actions), NonEmptyTableResult())
        if isinstance(outcome, Fail):
            run.entry(steps, m, principal_rule(outcome.derivation), outcome.derivation, None, "Fail")
            return ProgramError(tuple(run.actions), ToplevelFailure())
        if isinstance(outcome, Error):
            run.entry(steps, m, outcome.rule, outcome.derivation, None, "Error")
            detail = canonical_text(m, outcome.detail) if run.canonical else outcome.detail
            return ProgramError(tuple(run.actions), MachineError(outcome.rule, detail))
        if run.check:
            check_monotone(m, outcome.next)
            check_chk_shapes(outcome.next.term)
            check_no_dangling(m, outcome.next, tolerated, run.verified)
        run.actions.append(outcome.action)
        run.entry(steps, outcome.next, principal_rule(outcome.derivation),
                  outcome.derivation, outcome.action)
        m = outcome.next
        steps += 1


def _is_terminal(m: MachineState) -> bool:
    return isinstance(m.term, HL)


STACK_BYTES = 512 * 1024 * 1024
RECURSION_LIMIT = 200_000


def deep_call(fn, *args, **kwargs):
    """Call ``fn`` on a thread with a large stack.

    Reduction recurses once per nested frame or context, so deep object-level
    call stacks need deep Python stacks.
    """
    box: dict = {}

    def target():
        try:
            box["value"] = fn(*args, **kwargs)
        except BaseException as exc:  # re-raised on the calling thread
            box["error"] = exc

    old_size = threading.stack_size()
    old_limit = sys.getrecursionlimit()
    threading.stack_size(STACK_BYTES)
    sys.setrecursionlimit(max(old_limit, RECURSION_LIMIT))
    try:
        worker = threading.Thread(target=target)
        worker.start()
        worker.join()
    finally:
        threading.stack_size(old_size)
        sys.setrecursionlimit(old_limit)
    if "error" in box:
        raise box["error"]
    return box["value"]


def run(t: Term, inputs: Optional[InputSource] = None, max_steps: Optional[int] = None,
        check: bool = False) -> ProgramOutcome:
    """Run program ``t`` from the empty state.

    With ``check`` every step is cross-checked against the rule guards and
    the heap monotonicity conditions; a violation raises
    ``MachineInvariantError``.
    """
    inputs = inputs if inputs is not None else ScriptedInput()
    budget = default_max_steps() if max_steps is None else max_steps
    return deep_call(_drive, t, inputs, budget, _Run(check=check))


def trace(t: Term, inputs: Optional[InputSource] = None, max_steps: Optional[int] = None,
          check: bool = False, canonical: bool = False,
          state: Optional[MachineState] = None) -> tuple[ProgramOutcome, list[TraceEntry]]:
    """``run`` plus one ``TraceEntry`` per step.

    Entries show the term after the step; the closing Fail or Error gets its
    own record with no action.  With ``canonical`` the summaries are taken
    from canonically relabelled states, so traces of runs that differ only
    in label numbering compare equal, and each entry also carries a hash of
the whole canonical state.  ``state`` overrides the start state.
    """
    inputs = inputs if inputs is not None else ScriptedInput()
    budget = default_max_steps() if max_steps is None else max_steps
    r = _Run(check=check, record=True, canonical=canonical)
    outcome = deep_call(_drive, t, inputs, budget, r, state)
    return outcome, r.entries


def rule_sequence(outcome: ProgramOutcome, entries: list[TraceEntry]) -> list[str]:
    """Golden-file form: each step's principal rule, then the program rule."""
    return [e.rule for e in entries] + [outcome.rule]
