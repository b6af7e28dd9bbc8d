import dataclasses
import random

import pytest
from conftest import sample
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import paths_by_sequences, paths_by_state_orders, random_machine

from dafsm import dsl, paths
from dafsm.core import CTOR, Declaration, Kind, UnknownState


def load(text):
    m = dsl.parse(text)
    assert not isinstance(m, list), m
    return m


DIAMOND = load("_ o:O > starts c() q0\nq0 o > c.l() q1\nq0 o > c.r() q1'\nq1 o > c.l() q2\nq1' o > c.r() q2\naccept q2")


def test_smp_paths(smp):
    assert paths.acyclic_paths_to(smp, "q0") == [(CTOR,)]
    assert paths.acyclic_paths_to(smp, "q1'") == [(CTOR, 0, 2)]
    assert paths.acyclic_paths_to(smp, "q2") == [(CTOR, 0, 1)]


def test_diamond():
    got = paths.acyclic_paths_to(DIAMOND, "q2")
    assert sorted(got) == [(CTOR, 0, 2), (CTOR, 1, 3)]
    assert set(got) == paths_by_sequences(DIAMOND, "q2")


def test_unknown_and_unreachable_states(smp):
    with pytest.raises(UnknownState):
        paths.acyclic_paths_to(smp, "zz")
    m = load("_ o:O > starts c() s0\ns1 o > c.f() s2\naccept s2")
    assert paths.acyclic_paths_to(m, "s2") == []
    assert paths.unreachable_transitions(m) == [0]


def test_count_matches_enumeration(smp):
    for m in (smp, DIAMOND, sample("d4")):
        assert paths.count_acyclic_paths(m) == sum(len(paths.acyclic_paths_to(m, s)) for s in m.states)


def test_binds_and_expands(smp):
    alpha_new = smp.transitions[4]
    assert paths.binds(alpha_new, "b")
    assert paths.expands(alpha_new, "B")
    assert not paths.binds(smp.transitions[1], "o")
    assert paths.binds(smp.constructor, "o") and paths.expands(smp.constructor, "O")
    give = load("_ o:O > starts c() s0\ns0 o > c.give(a:A, int _n) s1\naccept s1").transitions[0]
    assert paths.binds(give, "a") and paths.expands(give, "A")
    assert not paths.binds(give, "_n")


def test_d1_not_closed():
    (v,) = paths.check_closed(sample("d1"))
    assert (v.transition, v.var, v.witness) == (0, "p", (CTOR,))


def test_d2_empty_role():
    (v,) = paths.check_empty_role_free(sample("d2"))
    assert (v.transition, v.role, v.witness) == (0, "R", (CTOR,))


def test_smp_caller_checks(smp):
    assert paths.check_closed(smp) == []
    assert paths.check_empty_role_free(smp) == []


def test_one_of_two_paths_unbound():
    m = load(
        "_ o:O > starts c() s0\n"
        "s0 p:P > c.a() s1\ns0 o > c.b() s1'\ns1 o > c.c() s2\ns1' o > c.d() s2\ns2 p > c.e() s3\n"
        "accept s3"
    )
    (v,) = paths.check_closed(m)
    assert v.transition == 4 and v.witness == (CTOR, 1, 3)


def test_no_existing_callers():
    assert paths.check_empty_role_free(sample("d1")) == []


def test_stop_mode_reports_a_subset():
    m = load("_ o:O > starts c() s0\ns0 p > c.f() s1\ns1 q > c.g() s2\naccept s2")
    full = paths.caller_check(m)
    assert len(full.closed) == 2 and full.complete
    short = paths.caller_check(m, stop=True)
    assert len(short.closed) == 1 and short.closed[0] in full.closed


def test_format_path(smp):
    assert paths.format_path(smp, (CTOR, 0, 2)) == "ctor > q0 -makeOffer-> q1 -rejectOffer-> q1'"


# -- properties -------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_paths_match_oracle(seed):
    m = random_machine(random.Random(seed))
    small = len(m.states) <= 5 and len(m.transitions) <= 6
    for s in m.states:
        got = paths.acyclic_paths_to(m, s)
        assert len(got) == len(set(got))
        want = paths_by_state_orders(m, s)
        assert set(got) == want
        if small:
            assert paths_by_sequences(m, s) == want


def replay(machine):
    """Violations by direct replay of every acyclic path into each caller's source."""
    closed, empty = set(), set()
    steps = [machine.constructor] + [t.label for t in machine.transitions]
    for i, t in enumerate(machine.transitions):
        qp = t.label.participant
        if qp.kind is Kind.FRESH:
            continue
        for path in paths_by_state_orders(machine, t.source):
            labels = [steps[j + 1] for j in path]
            if qp.kind is Kind.BOUND:
                if not any(paths.binds(lab, qp.var) for lab in labels):
                    closed.add(i)
            elif not any(paths.expands(lab, qp.role) for lab in labels):
                empty.add(i)
    return closed, empty


def _violations(machine, **kw):
    r = paths.caller_check(machine, **kw)
    return {v.transition for v in r.closed}, {v.transition for v in r.empty_role}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_caller_check_matches_replay(seed):
    m = random_machine(random.Random(seed))
    assert _violations(m) == replay(m)
    r = paths.caller_check(m)
    for v in r.closed + r.empty_role:
        assert v.witness in paths_by_state_orders(m, m.transitions[v.transition].source)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_cache_is_transparent(seed):
    m = random_machine(random.Random(seed))
    cache = paths.CallerCache()
    plain = paths.caller_check(m)
    first = paths.caller_check(m, cache=cache)
    second = paths.caller_check(m, cache=cache)
    assert plain == first == second


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["A", "B"]))
def test_binders_are_monotone(seed, role):
    m = random_machine(random.Random(seed))
    var = next(v for v in ("z0", "z1", "z2") if all(t.label.participant.var != v for t in m.transitions))
    ctor = dataclasses.replace(m.constructor, params=m.constructor.params + (Declaration(var, role),))
    more = dataclasses.replace(m, constructor=ctor)
    c0, e0 = _violations(m)
    c1, e1 = _violations(more)
    assert c1 <= c0 and e1 <= e0
