"""Symbolic filter, concrete residue, and trace similarity.

A symbolic allocation sequence acts as a filter over a trace: malloc/mfail
events must match it event for event, a free passes exactly when it
releases an allocation the filter knows about (the allocation map never
shrinks, so double frees are filterable), and observe/cast events always
fall into the *residue*.  Two traces are similar when one symbolic sequence
filters both with identical residues.

``similar`` decides similarity with a memoized two-cursor search over both
traces; ``similar_bruteforce`` is its independent oracle, enumerating all
pass/residue labelings of the first trace.  A subtlety both must respect:
filtering is deterministic -- a free that is filterable at its position
*must* pass -- so a residue labeling is only legal when the filter's next
symbolic event does not match the free.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .alloc_model import AllocEntry, SymbolicSeq, SymFail, SymFree, SymMalloc, free_index
from .notac import CastEv, Event, FreeEv, MallocEv, MallocFailEv, ObsEv, Trace

# ---------------------------------------------------------------------------
# The deterministic filter


@dataclass(frozen=True)
class FilterOutcome:
    residue: Trace
    passed_map: frozenset  # frozenset[AllocEntry]
    consumed: SymbolicSeq


def x_filter_free(m: frozenset, addr: int, prefix: SymbolicSeq, rest: SymbolicSeq) -> bool:
    """Is a free of ``addr`` filterable right now?

    True iff ``rest`` starts with a free whose back-index resolves to a
    malloc position ``i`` of ``prefix`` and the map holds (addr, size; i).
    """
    if not rest or not isinstance(rest[0], SymFree):
        return False
    i = free_index(prefix, rest[0].back)
    if i is None or not isinstance(prefix[i - 1], SymMalloc):
        return False
    return AllocEntry(addr, prefix[i - 1].size, i) in m


def sym_filter(trace: Sequence[Event], seq) -> Optional[FilterOutcome]:
    """Run the filter; ``None`` when the trace and sequence do not match."""
    seq = tuple(seq)
    m: frozenset = frozenset()
    residue: list[Event] = []
    k = 0  # cursor into seq
    for ev in trace:
        if isinstance(ev, MallocEv):
            if k >= len(seq) or seq[k] != SymMalloc(ev.size):
                return None
            m = m | {AllocEntry(ev.addr, ev.size, k + 1)}
            k += 1
        elif isinstance(ev, MallocFailEv):
            if k >= len(seq) or seq[k] != SymFail(ev.size):
                return None
            k += 1
        elif isinstance(ev, FreeEv):
            if x_filter_free(m, ev.addr, seq[:k], seq[k:]):
                k += 1  # the map deliberately does not shrink
            else:
                residue.append(ev)
        else:  # observe/cast are never filtered
            residue.append(ev)
    if k != len(seq):
        return None
    return FilterOutcome(tuple(residue), m, seq)


# ---------------------------------------------------------------------------
# Similarity

# Cheap necessary conditions used for pruning: any common filter forces the
# two traces' malloc/mfail (kind, size) subsequences to be equal, and equal
# residues force equal observe/cast subsequences.


def _alloc_shape(trace: Trace) -> tuple:
    out = []
    for ev in trace:
        if isinstance(ev, MallocEv):
            out.append(("m", ev.size))
        elif isinstance(ev, MallocFailEv):
            out.append(("mf", ev.size))
    return tuple(out)


def _forced_residue(trace: Trace) -> tuple:
    return tuple(ev for ev in trace if isinstance(ev, (ObsEv, CastEv)))


def _matches(item: tuple, forbidden: frozenset) -> bool:
    return item[0] == "f" and item[1] in forbidden


@lru_cache(maxsize=200_000)
def _similar_search(t1: Trace, t2: Trace) -> Optional[tuple]:
    """Joint scan of both traces; returns the shared filter-item list or None.

    Both traces consume the same symbolic sequence and must leave the same
    residue; the two streams interleave independently, so the state carries
    the pending unmatched items of whichever trace ran ahead on each stream.

    State per trace: cursor, count of emitted filter items (its next item
    lands at shared position count+1), its map of shared malloc positions
    to addresses, and the *pending residue constraint*: targets that the
    next symbolic event must not free, because an already-emitted residue
    free would have been forced to pass.  Filter items are ("m", size),
    ("mf", size), ("f", target position); residue items are concrete events
    and must match exactly.
    """
    memo: dict = {}
    end1, end2 = len(t1), len(t2)

    def go(i1, i2, n1, n2, fq, fq_own, rq, rq_own, phi1, phi2, pend1, pend2):
        key = (i1, i2, n1, n2, fq, fq_own, rq, rq_own, phi1, phi2, pend1, pend2)
        if key in memo:
            return memo[key]
        if i1 == end1 and i2 == end2:
            # Pending constraints are vacuous at the end: there is no next
            # symbolic event left to match the residue frees.
            result = () if not fq and not rq else None
            memo[key] = result
            return result

        def emit_f(owner, item, i1_, i2_, phi1_, phi2_):
            # The item occupies shared position p = own count + 1; it also
            # discharges (or violates) any pending residue constraints on
            # that position.
            if owner == 1:
                p, n_other, my_pend, other_pend = n1 + 1, n2, pend1, pend2
            else:
                p, n_other, my_pend, other_pend = n2 + 1, n1, pend2, pend1
            if _matches(item, my_pend):
                return None
            my_pend = frozenset()
            if n_other == p - 1:
                if _matches(item, other_pend):
                    return None
                other_pend = frozenset()
            p1_, p2_ = (my_pend, other_pend) if owner == 1 else (other_pend, my_pend)
            n1_, n2_ = (p, n2) if owner == 1 else (n1, p)
            if fq and fq_own != owner:
                if fq[0] != item:
                    return None
                rest = go(i1_, i2_, n1_, n2_, fq[1:], fq_own if len(fq) > 1 else 0,
                          rq, rq_own, phi1_, phi2_, p1_, p2_)
                return None if rest is None else (item,) + rest
            return go(i1_, i2_, n1_, n2_, fq + (item,), owner,
                      rq, rq_own, phi1_, phi2_, p1_, p2_)

        def emit_r(owner, ev, i1_, i2_, pend1_, pend2_):
            if rq and rq_own != owner:
                if rq[0] != ev:
                    return None
                return go(i1_, i2_, n1, n2, fq, fq_own, rq[1:],
                          rq_own if len(rq) > 1 else 0, phi1, phi2, pend1_, pend2_)
            return go(i1_, i2_, n1, n2, fq, fq_own, rq + (ev,), owner,
                      phi1, phi2, pend1_, pend2_)

        def advance(owner):
            if owner == 1:
                if i1 == end1:
                    return None
                ev, i1_, i2_, n, phi, pend = t1[i1], i1 + 1, i2, n1, phi1, pend1
            else:
                if i2 == end2:
                    return None
                ev, i1_, i2_, n, phi, pend = t2[i2], i1, i2 + 1, n2, phi2, pend2
            if isinstance(ev, MallocEv):
                phi_ = phi + ((n + 1, ev.addr),)
                p1_, p2_ = (phi_, phi2) if owner == 1 else (phi1, phi_)
                return emit_f(owner, ("m", ev.size), i1_, i2_, p1_, p2_)
            if isinstance(ev, MallocFailEv):
                return emit_f(owner, ("mf", ev.size), i1_, i2_, phi1, phi2)
            if isinstance(ev, (ObsEv, CastEv)):
                return emit_r(owner, ev, i1_, i2_, pend1, pend2)
            # A free: pass through the filter, or join the residue.
            targets = frozenset(pos for (pos, a) in phi if a == ev.addr)
            for target in sorted(targets):
                got = emit_f(owner, ("f", target), i1_, i2_, phi1, phi2)
                if got is not None:
                    return got
            if targets:
                # Residue is only legal when the next symbolic event does
                # not free one of the matching allocations.  If the opposing
                # queue already pins that event, check now; otherwise defer.
                if fq and fq_own != owner:
                    if _matches(fq[0], targets):
                        return None
                    return emit_r(owner, ev, i1_, i2_, pend1, pend2)
                if owner == 1:
                    return emit_r(owner, ev, i1_, i2_, pend1 | targets, pend2)
                return emit_r(owner, ev, i1_, i2_, pend1, pend2 | targets)
            return emit_r(owner, ev, i1_, i2_, pend1, pend2)

        result = advance(1)
        if result is None:
            result = advance(2)
        memo[key] = result
        return result

    return go(0, 0, 0, 0, (), 0, (), 0, (), (), frozenset(), frozenset())


def _items_to_sigma(items: Sequence[tuple]) -> SymbolicSeq:
    sigma = []
    for item in items:
        if item[0] == "m":
            sigma.append(SymMalloc(item[1]))
        elif item[0] == "mf":
            sigma.append(SymFail(item[1]))
        else:
            target = item[1]
            back = sum(1 for j in range(target, len(sigma)) if isinstance(sigma[j], SymMalloc))
            sigma.append(SymFree(back))
    return tuple(sigma)


def similar(t1: Sequence[Event], t2: Sequence[Event]) -> tuple[bool, Optional[SymbolicSeq]]:
    """Decide trace similarity; on success also return a witness filter."""
    t1, t2 = tuple(t1), tuple(t2)
    if _alloc_shape(t1) != _alloc_shape(t2) or _forced_residue(t1) != _forced_residue(t2):
        return False, None
    items = _similar_search(t1, t2)
    if items is None:
        return False, None
    sigma = _items_to_sigma(items)
    f1, f2 = sym_filter(t1, sigma), sym_filter(t2, sigma)
    assert f1 is not None and f2 is not None and f1.residue == f2.residue, (
        f"similarity witness failed to validate: {sigma}"
    )
    return True, sigma


def _sigma_candidates(trace: Trace) -> list:
    """All symbolic sequences that could filter ``trace``.

    Enumerates pass/residue labelings of the trace's frees (and for passes,
    the matching allocation entries).  Every sequence accepted by
    ``sym_filter(trace, .)`` arises from some labeling, so validating the
    candidates against the deterministic filter is exhaustive.
    """
    results: list = []

    def go(i: int, sigma: list, phi: list):
        if i == len(trace):
            results.append(tuple(sigma))
            return
        ev = trace[i]
        if isinstance(ev, MallocEv):
            sigma.append(SymMalloc(ev.size))
            phi.append((len(sigma), ev.addr))
            go(i + 1, sigma, phi)
            phi.pop()
            sigma.pop()
        elif isinstance(ev, MallocFailEv):
            sigma.append(SymFail(ev.size))
            go(i + 1, sigma, phi)
            sigma.pop()
        elif isinstance(ev, FreeEv):
            go(i + 1, sigma, phi)  # residue labeling
            for pos, addr in phi:
                if addr == ev.addr:
                    back = sum(1 for j in range(pos, len(sigma)) if isinstance(sigma[j], SymMalloc))
                    sigma.append(SymFree(back))
                    go(i + 1, sigma, phi)
                    sigma.pop()
        else:
            go(i + 1, sigma, phi)

    go(0, [], [])
    return results


def similar_bruteforce(t1: Sequence[Event], t2: Sequence[Event], bound: int = 10) -> bool:
    """Ground-truth similarity by exhaustive filter enumeration."""
    t1, t2 = tuple(t1), tuple(t2)
    if max(len(t1), len(t2)) > bound:
        raise ValueError(f"traces longer than the brute-force bound {bound}")
    seen = set()
    for sigma in _sigma_candidates(t1):
        if sigma in seen:
            continue
        seen.add(sigma)
        f1 = sym_filter(t1, sigma)
        if f1 is None:
            continue
        f2 = sym_filter(t2, sigma)
        if f2 is not None and f1.residue == f2.residue:
            return True
    return False


def prefixes_similar_to(t: Sequence[Event], run: Sequence[Event]) -> list[int]:
    """All prefix lengths ``p`` of ``run`` with ``run[:p]`` similar to ``t``."""
    t, run = tuple(t), tuple(run)
    return [p for p in range(len(run) + 1) if similar(t, run[:p])[0]]
