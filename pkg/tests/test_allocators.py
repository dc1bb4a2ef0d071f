"""Unit behavior of the shipped allocation strategies."""

import pytest

from gai_lab.allocators import (
    CuriousAlloc,
    SegmentParams,
    bump,
    curious,
    eager,
    guarded_eager,
    lenient_bump,
    no_zero,
    null_alloc,
    parse_alloc_spec,
)
from gai_lab.core import Heap


def reserved_heap(n=100):
    return Heap({a: 0 for a in range(n)})


def test_segment_validation():
    with pytest.raises(ValueError):
        SegmentParams(10, 5, 20)


class TestEager:
    def test_first_fit_and_zeroing(self):
        e = eager(0, 100, 200)
        h, st = e.init(reserved_heap())
        h, st, a = e.malloc(h, st, 4)
        assert a == 101  # availF requires n2 < a
        assert [h.read(x) for x in range(101, 105)] == [0, 0, 0, 0]

    def test_zero_sized_allocation_gets_a_free_cell(self):
        e = eager(0, 100, 200)
        h, st = e.init(reserved_heap())
        h, st, a = e.malloc(h, st, 4)
        h, st, z = e.malloc(h, st, 0)
        assert z == 105
        assert z not in h  # no cells defined

    def test_zero_allocations_never_covered_later(self):
        # regression for the availability repair: a freed block next to a
        # zero-sized allocation must not be re-extended over its address
        e = eager(0, 100, 200)
        h, st = e.init(reserved_heap())
        h, st, a4 = e.malloc(h, st, 4)
        h, st, z = e.malloc(h, st, 0)
        h, st = e.free(h, st, a4)
        h, st, a5 = e.malloc(h, st, 5)
        assert z not in range(a5, a5 + 5)

    def test_free_then_reuse(self):
        e = eager(0, 100, 200)
        h, st = e.init(reserved_heap())
        h, st, a = e.malloc(h, st, 4)
        h, st = e.free(h, st, a)
        h, st, b = e.malloc(h, st, 4)
        assert b == a == 101

    def test_unregistered_free_is_ignored(self):
        e = eager(0, 100, 200)
        h, st = e.init(reserved_heap())
        h2, st2 = e.free(h, st, 150)
        assert (h2, st2) == (h, st)
        h3, st3 = e.free(h, st, -7)
        assert (h3, st3) == (h, st)

    def test_init_preserves_reserved_and_outside(self):
        e = eager(0, 100, 200)
        seed = reserved_heap().define([300], 9).define([150], 5)
        h, st = e.init(seed)
        assert h.read(50) == 0  # reserved kept
        assert h.read(300) == 9  # outside the segment kept
        assert 150 not in h  # arena wiped

    def test_block_fits_inside_segment(self):
        e = eager(0, 100, 110)
        h, st = e.init(reserved_heap())
        h, st, a = e.malloc(h, st, 9)
        assert a == 101
        h, st, b = e.malloc(h, st, 1)
        assert b == e.null(st)  # 9 cells + null leave no room


class TestGuardedEager:
    def test_one_cell_gap_between_blocks(self):
        g = guarded_eager(0, 100, 200)
        h, st = g.init(reserved_heap())
        h, st, p = g.malloc(h, st, 4)
        h, st, q = g.malloc(h, st, 4)
        assert (p, q) == (101, 106)
        assert 105 not in h  # the guard cell stays undefined


class TestBump:
    def test_bump_formula(self):
        b = bump(0, 100, 200)
        h, st = b.init(Heap())
        assert st == 101
        h, st, a = b.malloc(h, st, 8)
        assert (a, st) == (101, 109)

    def test_zero_size_acts_as_one(self):
        b = bump(0, 100, 200)
        h, st = b.init(Heap())
        h, st, _ = b.malloc(h, st, 8)
        h, st, a = b.malloc(h, st, 0)
        assert (a, st) == (109, 110)

    def test_failure_when_out_of_space(self):
        b = bump(0, 100, 104)
        h, st = b.init(Heap())
        h, st, a = b.malloc(h, st, 8)
        assert a == b.null(st) == 100

    def test_init_fills_arena_and_protects_null(self):
        b = bump(0, 100, 110)
        h, st = b.init(Heap({50: 3, 105: 7}))
        assert h.read(105) == 7  # existing entries kept
        assert h.read(101) == 0  # fresh cells zeroed
        assert 100 not in h  # null cell inaccessible
        assert h.read(50) == 3

    def test_free_is_noop(self):
        b = bump(0, 100, 200)
        h, st = b.init(Heap())
        h1, st1, a = b.malloc(h, st, 8)
        assert b.free(h1, st1, a) == (h1, st1)


class TestLenientBump:
    def test_null_cell_is_accessible(self):
        lb = lenient_bump(0, 100, 200)
        h, st = lb.init(Heap())
        assert h.read(100) == 0
        h2, st2 = bump(0, 100, 200).init(Heap())
        assert 100 not in h2


class TestCurious:
    def test_world_split(self):
        c = curious(9, 2047)
        assert (c.lower_max, c.upper_max) == (256, 512)
        with pytest.raises(ValueError):
            CuriousAlloc(4, 16)  # no room above upper_max

    def test_first_allocation_location(self):
        c = curious(9, 2047)
        h, st = c.init(Heap())
        h, st, a = c.malloc(h, st, 4)
        assert a == 513
        assert [h.read(x) for x in range(513, 517)] == [0, 0, 0, 0]

    def test_second_commits_by_cell_sign(self):
        c = curious(9, 2047)
        h, st = c.init(Heap())
        h, st, a = c.malloc(h, st, 4)
        positive = h.write(a, 5)
        _, st_pos, b = c.malloc(positive, st, 4)
        assert (b, st_pos) == (257, ("span", 257, 512))
        _, st_zero, b2 = c.malloc(h, st, 4)  # cell still zero
        assert (b2, st_zero) == (1, ("span", 1, 256))

    def test_later_allocations_stay_in_semispace(self):
        c = curious(9, 2047)
        h, st = c.init(Heap())
        h, st, a = c.malloc(h, st, 4)
        h, st, b = c.malloc(h, st, 4)
        h, st, d = c.malloc(h, st, 8)
        assert b == 1 and d == 5
        assert all(1 <= x <= 256 for x in (b, d))

    def test_zero_sized_allocation_fails(self):
        c = curious(9, 2047)
        h, st = c.init(Heap())
        assert c.malloc(h, st, 0)[2] == 0

    def test_semispace_exhaustion_fails(self):
        c = curious(4, 47)  # semispaces hold 8 cells each
        h, st = c.init(Heap())
        h, st, a = c.malloc(h, st, 2)
        h, st, b = c.malloc(h, st, 8)
        assert b == 1
        h, st, d = c.malloc(h, st, 1)
        assert d == 0  # the chosen semispace is full

    def test_init_wipes_world_only(self):
        c = curious(4, 47)
        h, st = c.init(Heap({3: 9, 60: 4}))
        assert 3 not in h
        assert h.read(60) == 4


class TestNullAlloc:
    def test_always_fails(self):
        n = null_alloc()
        h, st = n.init(Heap({0: 1}))
        assert n.null(st) == 1  # smallest address outside the domain
        assert n.malloc(h, st, 1)[2] == 1
        assert n.malloc(h, st, 0)[2] == 1

    def test_null_cell_inaccessible(self):
        n = null_alloc()
        h, st = n.init(reserved_heap())
        assert n.null(st) not in h


class TestNoZero:
    def test_zero_fails_without_state_change(self):
        nz = no_zero(bump(0, 100, 200))
        h, st = nz.init(Heap())
        h2, st2, a = nz.malloc(h, st, 0)
        assert a == 100
        assert (h2, st2) == (h, st)

    def test_nonzero_delegates(self):
        inner = bump(0, 100, 200)
        nz = no_zero(inner)
        h, st = nz.init(Heap())
        assert nz.malloc(h, st, 8) == inner.malloc(h, st, 8)


def test_determinism():
    for spec in ("eager:0,100,200", "bump:0,100,200", "curious:9,2047",
                 "null", "nozero(bump:0,100,200)", "lenient-bump:0,100,200",
                 "guarded-eager:0,100,200"):
        s1, s2 = parse_alloc_spec(spec), parse_alloc_spec(spec)
        seed = reserved_heap()
        h1, st1 = s1.init(seed)
        h2, st2 = s2.init(seed)
        assert (h1, st1) == (h2, st2)
        assert s1.malloc(h1, st1, 8) == s2.malloc(h2, st2, 8)


def test_parse_alloc_spec():
    assert parse_alloc_spec("eager:0,64,4096").name == "eager:0,64,4096"
    assert parse_alloc_spec("nozero(bump:0,8,72)").name == "nozero(bump:0,8,72)"
    assert parse_alloc_spec("null").name == "null"
    for bad in ("eager:1,2", "mystery:1,2,3", "nozero(", "curious:9"):
        with pytest.raises(ValueError):
            parse_alloc_spec(bad)
