"""Concrete allocation strategies.

Shipped strategies:

* ``eager``          -- first-fit over a segment, frees release memory
* ``bump``           -- bump pointer, frees are no-ops
* ``curious``        -- commits to a semispace based on client memory
* ``null``           -- every allocation fails
* ``nozero(inner)``  -- wrapper failing zero-sized allocations
* ``lenient-bump``   -- bump, but the null cell stays accessible
* ``guarded-eager``  -- eager with one-cell guards around each block

The last two are discriminators: deliberately permissive (or defensive)
behaviors that are still well-formed, used by the differential GAI checker
to separate programs that depend on allocator internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .alloc_model import Strategy
from .core import Addr, Heap, interval


@dataclass(frozen=True)
class SegmentParams:
    """Memory segment [n1, n3) whose initial part [n1, n2) is reserved."""

    n1: Addr
    n2: Addr
    n3: Addr

    def __post_init__(self):
        if not (0 <= self.n1 <= self.n2 <= self.n3):
            raise ValueError(f"bad segment {self}")

    def __str__(self) -> str:
        return f"{self.n1},{self.n2},{self.n3}"


class EagerAlloc(Strategy):
    """First-fit allocator; null is n2, frees undefine the freed block.

    Availability of a block at ``a`` requires [a, a+max(s,1)) to avoid both
    the heap domain and the addresses of live allocations (the latter covers
    zero-sized allocations, whose addresses occupy no heap cells), and the
    block to fit inside the segment.
    """

    guard = 0  # cells kept free around each block; nonzero in guarded-eager

    def __init__(self, params: SegmentParams):
        self.params = params
        self.name = f"eager:{params}"

    def init(self, heap: Heap):
        p = self.params
        return heap.undefine(interval(p.n2, p.n3)), frozenset()

    def null(self, state) -> Addr:
        return self.params.n2

    def _find(self, heap: Heap, state: frozenset, size: int) -> Optional[Addr]:
        p = self.params
        starts = {a for (a, _s) in state}
        span = max(size, 1)
        a = p.n2 + 1
        while a + size <= p.n3 and a < p.n3:
            clash = next(
                (c for c in range(a - self.guard, a + span + self.guard) if c in heap or c in starts),
                None,
            )
            if clash is None:
                return a
            a = max(a + 1, clash + 1)
        return None

    def malloc(self, heap: Heap, state, size: int):
        a = self._find(heap, state, size)
        if a is None:
            return heap, state, self.null(state)
        if size > 0:
            heap = heap.define(interval(a, a + size), 0)
        return heap, state | {(a, size)}, a

    def free(self, heap: Heap, state, addr: Addr):
        entry = next((e for e in state if e[0] == addr), None)
        if entry is None:
            # Unregistered frees are ignored.
            return heap, state
        a, size = entry
        return heap.undefine(interval(a, a + size)), state - {entry}


class GuardedEagerAlloc(EagerAlloc):
    """Eager, but every block keeps one undefined guard cell on each side."""

    guard = 1

    def __init__(self, params: SegmentParams):
        super().__init__(params)
        self.name = f"guarded-eager:{params}"


class BumpAlloc(Strategy):
    """Bump-pointer allocator; null is n2, frees are no-ops.

    Init zero-fills the undefined cells of (n2, n3) and undefines the null
    cell; zero-sized requests bump by one.
    """

    def __init__(self, params: SegmentParams):
        self.params = params
        self.name = f"bump:{params}"

    def init(self, heap: Heap):
        p = self.params
        fresh = [a for a in interval(p.n2 + 1, p.n3) if a not in heap]
        heap = heap.define(fresh, 0)
        return self._init_null_cell(heap), p.n2 + 1

    def _init_null_cell(self, heap: Heap) -> Heap:
        return heap.undefine([self.params.n2])

    def null(self, state) -> Addr:
        return self.params.n2

    def malloc(self, heap: Heap, state: int, size: int):
        bump = state + (1 if size == 0 else size)
        if bump <= self.params.n3:
            return heap, bump, state
        return heap, state, self.null(state)

    def free(self, heap: Heap, state, addr: Addr):
        return heap, state


class LenientBumpAlloc(BumpAlloc):
    """Bump whose null cell stays defined (0), so null dereference succeeds."""

    def __init__(self, params: SegmentParams):
        super().__init__(params)
        self.name = f"lenient-bump:{params}"

    def _init_null_cell(self, heap: Heap) -> Heap:
        return heap.define([self.params.n2], 0)


class CuriousAlloc(Strategy):
    """Two-semispace allocator whose placement depends on client memory.

    The heap world is [0, h_max]; null is 0.  The first allocation lands at
    upper_max+1.  The second commits to one of the equally sized semispaces
    [1, lower_max] / [lower_max+1, upper_max] depending on the sign of the
    client-visible first cell of the first allocation, and all later
    allocations are served from the chosen semispace.  Zero-sized
    allocations fail; frees are no-ops.
    """

    def __init__(self, m: int, h_max: int):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = m
        self.h_max = h_max
        self.lower_max = 2 ** (m - 1)
        self.upper_max = 2**m
        if h_max <= self.upper_max:
            raise ValueError(f"h_max {h_max} leaves no room above upper_max {self.upper_max}")
        self.name = f"curious:{m},{h_max}"

    def init(self, heap: Heap):
        return heap.undefine(range(0, self.h_max + 1)), ("none",)

    def null(self, state) -> Addr:
        return 0

    def _avail(self, heap: Heap, lo: Addr, hi: Addr, size: int) -> Optional[Addr]:
        # Minimal a with [a, a+size) inside the inclusive bounds and free.
        a = lo
        while a + size - 1 <= hi:
            clash = next((c for c in range(a, a + size) if c in heap), None)
            if clash is None:
                return a
            a = clash + 1
        return None

    def malloc(self, heap: Heap, state, size: int):
        if size <= 0:
            return heap, state, 0
        tag = state[0]
        if tag == "none":
            if self._avail(heap, self.upper_max + 1, self.h_max, size) is None:
                return heap, state, 0
            a = self.upper_max + 1
            return heap.define(interval(a, a + size), 0), ("first", a, size), a
        if tag == "first":
            first_addr = state[1]
            v = heap.read(first_addr)
            if v is not None and v > 0:
                span = (self.lower_max + 1, self.upper_max)
            else:
                span = (1, self.lower_max)
            state = ("span", span[0], span[1])
            # Committed regardless of whether this allocation succeeds.
        lo, hi = state[1], state[2]
        a = self._avail(heap, lo, hi, size)
        if a is None:
            return heap, state, 0
        return heap.define(interval(a, a + size), 0), state, a

    def free(self, heap: Heap, state, addr: Addr):
        return heap, state


class NullAlloc(Strategy):
    """Every allocation fails; the null address is picked at init time."""

    name = "null"

    def init(self, heap: Heap):
        null_ptr = 0
        while null_ptr in heap:
            null_ptr += 1
        return heap, null_ptr

    def null(self, state) -> Addr:
        return state

    def malloc(self, heap: Heap, state, size: int):
        return heap, state, state

    def free(self, heap: Heap, state, addr: Addr):
        return heap, state


class NoZeroAlloc(Strategy):
    """Wrapper that fails zero-sized allocations, delegating everything else."""

    def __init__(self, inner: Strategy):
        self.inner = inner
        self.name = f"nozero({inner.name})"

    def init(self, heap: Heap):
        return self.inner.init(heap)

    def null(self, state) -> Addr:
        return self.inner.null(state)

    def malloc(self, heap: Heap, state, size: int):
        if size == 0:
            return heap, state, self.inner.null(state)
        return self.inner.malloc(heap, state, size)

    def free(self, heap: Heap, state, addr: Addr):
        return self.inner.free(heap, state, addr)


# ---------------------------------------------------------------------------
# Constructors matching the CLI selection grammar


def eager(n1: Addr, n2: Addr, n3: Addr) -> EagerAlloc:
    return EagerAlloc(SegmentParams(n1, n2, n3))


def guarded_eager(n1: Addr, n2: Addr, n3: Addr) -> GuardedEagerAlloc:
    return GuardedEagerAlloc(SegmentParams(n1, n2, n3))


def bump(n1: Addr, n2: Addr, n3: Addr) -> BumpAlloc:
    return BumpAlloc(SegmentParams(n1, n2, n3))


def lenient_bump(n1: Addr, n2: Addr, n3: Addr) -> LenientBumpAlloc:
    return LenientBumpAlloc(SegmentParams(n1, n2, n3))


def curious(m: int, h_max: int) -> CuriousAlloc:
    return CuriousAlloc(m, h_max)


def null_alloc() -> NullAlloc:
    return NullAlloc()


def no_zero(inner: Strategy) -> NoZeroAlloc:
    return NoZeroAlloc(inner)


def reserved_window(strategy: Strategy) -> Optional[tuple]:
    """The [n1, n2) window a segment strategy preserves, if it has one.

    Used to pick a default variable base address consistent with the
    allocator's geometry.
    """
    if isinstance(strategy, NoZeroAlloc):
        return reserved_window(strategy.inner)
    if isinstance(strategy, (EagerAlloc, BumpAlloc)):
        return (strategy.params.n1, strategy.params.n2)
    return None


def parse_alloc_spec(text: str) -> Strategy:
    """Parse an allocator selection string.

    Grammar: ``eager:N1,N2,N3`` | ``bump:N1,N2,N3`` | ``curious:m,heapMax``
    | ``null`` | ``nozero(<inner>)`` | ``lenient-bump:N1,N2,N3``
    | ``guarded-eager:N1,N2,N3``.
    """
    text = text.strip()
    if text == "null":
        return null_alloc()
    if text.startswith("nozero(") and text.endswith(")"):
        return no_zero(parse_alloc_spec(text[len("nozero(") : -1]))
    if ":" not in text:
        raise ValueError(f"bad allocator spec {text!r}")
    kind, _, args = text.partition(":")
    nums = [int(x) for x in args.split(",")]
    makers = {
        "eager": (eager, 3),
        "bump": (bump, 3),
        "lenient-bump": (lenient_bump, 3),
        "guarded-eager": (guarded_eager, 3),
        "curious": (curious, 2),
    }
    if kind not in makers or len(nums) != makers[kind][1]:
        raise ValueError(f"bad allocator spec {text!r}")
    return makers[kind][0](*nums)
