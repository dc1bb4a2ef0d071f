"""The play and fast-forward feasibility relations."""

import pytest

from gai_lab.alloc_model import (
    NO_UPDATE,
    AllocEntry,
    ClientUpdate,
    Infeasible,
    SymFail,
    SymFree,
    SymMalloc,
    addresses_of,
    feasible_run,
    parse_symseq,
    play_step,
)
from gai_lab.allocators import bump, eager
from gai_lab.core import Heap

RESERVED = frozenset(range(0, 100))


def seeded_heap():
    return Heap({a: 0 for a in RESERVED})


def test_play_step_bump_malloc_ok():
    b = bump(0, 100, 200)
    h0, st = b.init(Heap())
    h1, st1, m1 = play_step(b, frozenset(), h0, st, (), SymMalloc(8))
    assert m1 == {AllocEntry(101, 8, 1)}
    assert st1 == 109


def test_play_step_bump_fail_demanded_but_succeeds():
    b = bump(0, 100, 200)
    h0, st = b.init(Heap())
    with pytest.raises(Infeasible):
        play_step(b, frozenset(), h0, st, (), SymFail(8))


def test_play_step_bump_fail_ok():
    b = bump(0, 100, 104)
    h0, st = b.init(Heap())
    h1, st1, m1 = play_step(b, frozenset(), h0, st, (), SymFail(8))
    assert m1 == frozenset()
    assert (h1, st1) == (h0, st)


def test_play_step_free_removes_entry():
    b = bump(0, 100, 200)
    h0, st = b.init(Heap())
    h1, st1, m1 = play_step(b, frozenset(), h0, st, (), SymMalloc(8))
    prefix = (SymMalloc(8),)
    h2, st2, m2 = play_step(b, m1, h1, st1, prefix, SymFree(0))
    assert m2 == frozenset()


def test_play_step_free_without_live_entry():
    b = bump(0, 100, 200)
    h0, st = b.init(Heap())
    with pytest.raises(Infeasible):
        play_step(b, frozenset(), h0, st, (SymFail(8),), SymFree(0))


def test_play_step_grows_and_shrinks_addresses():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    h1, st1, m1 = play_step(e, frozenset(), h0, st, (), SymMalloc(4))
    entry = next(iter(m1))
    assert addresses_of(m1) == frozenset(range(entry.addr, entry.addr + 4))
    h2, st2, m2 = play_step(e, m1, h1, st1, (SymMalloc(4),), SymFree(0))
    assert addresses_of(m2) == frozenset()


def test_feasible_run_empty():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    assert feasible_run(e, RESERVED, h0, st, (), ()) == (h0, st, frozenset())


def test_feasible_run_eager_picks_min():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    _, _, m = feasible_run(e, RESERVED, h0, st, (NO_UPDATE,), parse_symseq("M4"))
    assert m == {AllocEntry(101, 4, 1)}


def test_feasible_run_eager_free_undefines():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    h, _, m = feasible_run(e, RESERVED, h0, st, (NO_UPDATE, NO_UPDATE), parse_symseq("M4,F0"))
    assert m == frozenset()
    assert all(a not in h for a in range(101, 105))


def test_feasible_run_length_mismatch():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    with pytest.raises(ValueError):
        feasible_run(e, RESERVED, h0, st, (NO_UPDATE,), ())


def test_feasible_run_infeasible_propagates():
    b = bump(0, 100, 104)
    h0, st = b.init(Heap())
    with pytest.raises(Infeasible):
        feasible_run(b, frozenset(), h0, st, (NO_UPDATE,), parse_symseq("M8"))


def test_updates_only_touch_allowed_cells():
    # slot writes land inside addresses_of(m) | reserved and never extend past it
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    upd = ClientUpdate(((0, 42), (1, -3)))
    h, _, m = feasible_run(e, RESERVED, h0, st, (NO_UPDATE, upd), parse_symseq("M4,M2"))
    allowed = addresses_of({AllocEntry(101, 4, 1)}) | RESERVED
    changed = {a for a in h.domain() | h0.domain() if h.read(a) != h0.read(a)}
    assert changed - allowed <= addresses_of(m)  # the second malloc's zeroed cells


def test_no_op_updates_match_plain_play():
    e = eager(0, 100, 200)
    h0, st = e.init(seeded_heap())
    seq = parse_symseq("M4,MF1000000,M2,F1")
    via_run = feasible_run(e, RESERVED, h0, st, tuple(NO_UPDATE for _ in seq), seq)
    h, s, m = h0, st, frozenset()
    for i, ev in enumerate(seq):
        h, s, m = play_step(e, m, h, s, seq[:i], ev)
    assert via_run == (h, s, m)
