import random

import pytest

from aleph.frontend import parse
from aleph.machine import PURE, InputExhausted, ScriptedInput, input_action, output_action
from aleph.runner import (
    BudgetExhausted, MachineError, NonEmptyTableResult, ProgramError, Terminated,
    ToplevelFailure, TraceEntry, compact_derivation, default_max_steps,
    format_outcome, observable, outcome_to_json, rule_sequence, run, trace,
)
from generators import ProgramGen

LOOP = "(letrec ((f (fun n ints inv T A (appf f n)))) (appf f 1))"


def test_empty_table_terminates_after_one_step():
    outcome = run(parse("(table)"))
    assert outcome == Terminated((PURE,))


def test_integer_result_is_an_error():
    assert run(parse("5")) == ProgramError((PURE,), NonEmptyTableResult())


def test_toplevel_failure():
    assert run(parse("falses")) == ProgramError((), ToplevelFailure())


def test_machine_error_names_rule():
    outcome = run(parse("anys"))
    assert isinstance(outcome, ProgramError)
    assert outcome.cause.rule == "RGanysE" and outcome.rule == "RPE3"


def test_let_out():
    outcome, entries = trace(parse("(let x (out 7) (table))"))
    assert isinstance(outcome, Terminated)
    assert observable(outcome.actions) == [output_action(7)]
    assert rule_sequence(outcome, entries) == ["RGi", "RGout", "RGlet", "RGtab1", "RGframe1", "RP1"]


def test_self_application_loop_exhausts_budget():
    outcome = run(parse(LOOP), max_steps=1000)
    assert isinstance(outcome, BudgetExhausted)
    assert outcome.steps == 1000 and len(outcome.actions) == 1000


def test_zero_budget():
    outcome, entries = trace(parse("(table)"), max_steps=0)
    assert outcome == BudgetExhausted((), 0) and entries == []


def test_trace_single_step():
    outcome, entries = trace(parse("5"))
    assert [(e.step, e.rule, e.action) for e in entries] == [(0, "RGi", PURE)]
    assert entries[0].term == "#hl0"


def test_trace_unify_and_conditional():
    _, entries = trace(parse("(unify 5 ints)"))
    rules = [e.rule for e in entries]
    assert rules.index("RGunify") < rules.index("RTints1")
    _, entries = trace(parse("(if x falses (table) (table))"))
    assert [e.rule for e in entries][:2] == ["RGif", "RGif3"]


def test_failure_gets_a_closing_record():
    outcome, entries = trace(parse("falses"))
    assert len(entries) == 1
    assert entries[0].outcome == "Fail" and entries[0].action is None
    assert entries[0].rule == "RGfalsesF"


def test_inputs_consumed_in_order():
    text = "(let a in (let b in (let c (out (bop sub a b)) (table))))"
    outcome = run(parse(text), ScriptedInput([10, 3]))
    assert observable(outcome.actions) == [input_action(10), input_action(3), output_action(7)]


def test_input_exhaustion_is_a_harness_fault():
    with pytest.raises(InputExhausted) as info:
        trace(parse("(let a (out 1) (let b in (table)))"), ScriptedInput([]))
    assert observable(info.value.actions) == [output_action(1)]
    assert info.value.entries


def test_default_budget_from_environment(monkeypatch):
    monkeypatch.delenv("ALEPH_MAX_STEPS", raising=False)
    assert default_max_steps() == 1_000_000
    monkeypatch.setenv("ALEPH_MAX_STEPS", "25")
    assert default_max_steps() == 25
    assert run(parse(LOOP)).steps == 25


def _programs(n, seed):
    gen = ProgramGen(random.Random(seed))
    return [gen.program() for _ in range(n)]


def test_run_and_trace_agree_and_are_deterministic():
    for t in _programs(60, 11):
        a = run(t, ScriptedInput(range(40)), 2000)
        b, entries = trace(t, ScriptedInput(range(40)), 2000)
        c, again = trace(t, ScriptedInput(range(40)), 2000)
        assert a == b == c
        assert entries == again
        assert [e.step for e in entries][: len(entries) - 1] == list(range(len(entries) - 1))


def test_heap_sizes_never_shrink():
    for t in _programs(40, 12):
        _, entries = trace(t, ScriptedInput(range(40)), 2000)
        for x, y in zip(entries, entries[1:]):
            assert y.head_count >= x.head_count and y.ptr_count >= x.ptr_count


def test_prefix_stability():
    for t in _programs(30, 13):
        _, full = trace(t, ScriptedInput(range(40)), 400)
        for m in (0, 1, 7, 50):
            _, part = trace(t, ScriptedInput(range(40)), m)
            steps = [e for e in full if e.outcome == "Stepped"]
            assert part[: len(steps[:m])] == steps[:m]


def test_input_actions_match_script():
    for t in _programs(60, 14):
        script = list(range(100, 140))
        outcome = run(t, ScriptedInput(script), 2000)
        got = [a.value for a in outcome.actions if a.kind == "in"]
        assert got == script[: len(got)]


def test_compact_derivation():
    assert compact_derivation(("RGframe2", "RGframe2", "RGframe2", "RGvar")) == "RGframe2^3 RGvar"
    assert compact_derivation(("RGi",)) == "RGi"


def test_outcome_formats():
    assert format_outcome(Terminated((PURE,))) == "Terminated\nactions []"
    outcome = ProgramError((output_action(7),), MachineError("RGanysE", "anys"))
    assert format_outcome(outcome) == "ProgramError MachineError(RGanysE): anys\nactions [out 7]"
    assert outcome_to_json(BudgetExhausted((), 3)) == (
        '{"outcome":"BudgetExhausted","rule":"RP2","actions":[],"steps":3}')


def test_trace_entry_json_has_every_field():
    import json
    entry = TraceEntry(0, "RGi", ("RGctxt", "RGi"), PURE, "#hl0", 1, 0)
    record = json.loads(entry.to_json())
    assert record == {"step": 0, "rule": "RGi", "derivation": "RGctxt RGi", "action": "T",
                      "term": "#hl0", "headCount": 1, "ptrCount": 0, "outcome": "Stepped"}
