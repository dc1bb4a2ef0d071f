"""Flat memory model: addresses, values, heaps, and address-set helpers.

Addresses are natural numbers, values are unbounded Python ints, and a heap
is a finite partial map from addresses to values.  An address outside the
map's domain is *inaccessible*; reads report that distinctly (``None``)
rather than returning a default, and client-level writes to inaccessible
addresses raise -- that is exactly what makes client programs get stuck.

Heaps are immutable: every mutator returns a fresh heap, so values can be
shared freely across threads and replays.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Optional

Addr = int
Val = int

# Upper bound on representable addresses.  Allocators all work inside
# explicit segments well below this; the bound just keeps heaps finite.
H_MAX_DEFAULT = 2**32


class InaccessibleWrite(Exception):
    """Client write to an address outside the heap domain."""

    def __init__(self, addr: Addr):
        super().__init__(f"write to inaccessible address {addr}")
        self.addr = addr


def _check_addr(a: Addr, h_max: int) -> None:
    if not isinstance(a, int) or a < 0 or a >= h_max:
        raise ValueError(f"address {a!r} outside [0, {h_max})")


class Heap:
    """Immutable finite partial map ``Addr -> Val``.

    Mutators (:meth:`write`, :meth:`define`, :meth:`undefine`) return new
    heaps; the receiver is never changed.
    """

    __slots__ = ("_m", "h_max")

    def __init__(self, entries: Optional[Mapping[Addr, Val]] = None, h_max: int = H_MAX_DEFAULT):
        m = dict(entries) if entries else {}
        for a in m:
            _check_addr(a, h_max)
        self._m = m
        self.h_max = h_max

    def read(self, a: Addr) -> Optional[Val]:
        """Mapped value, or ``None`` when the address is inaccessible."""
        return self._m.get(a)

    def write(self, a: Addr, v: Val) -> "Heap":
        """Remap an existing address.  The domain never changes here."""
        if a not in self._m:
            raise InaccessibleWrite(a)
        m = dict(self._m)
        m[a] = v
        return self._wrap(m)

    def define(self, addrs: Iterable[Addr], v: Val) -> "Heap":
        """Allocator-side domain extension: map every address in ``addrs`` to ``v``."""
        m = dict(self._m)
        for a in addrs:
            _check_addr(a, self.h_max)
            m[a] = v
        return self._wrap(m)

    def undefine(self, addrs: Iterable[Addr]) -> "Heap":
        """Drop addresses from the domain (make them inaccessible)."""
        m = dict(self._m)
        for a in addrs:
            m.pop(a, None)
        return self._wrap(m)

    def _wrap(self, m: dict) -> "Heap":
        h = Heap.__new__(Heap)
        h._m = m
        h.h_max = self.h_max
        return h

    def domain(self) -> frozenset:
        return frozenset(self._m)

    def items(self) -> Iterator[tuple[Addr, Val]]:
        return iter(sorted(self._m.items()))

    def __contains__(self, a: Addr) -> bool:
        return a in self._m

    def __len__(self) -> int:
        return len(self._m)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Heap) and self._m == other._m

    def __hash__(self):  # pragma: no cover - heaps are not used as keys
        return hash(frozenset(self._m.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{a}:{v}" for a, v in sorted(self._m.items())[:12])
        more = "" if len(self._m) <= 12 else f", ... ({len(self._m)} entries)"
        return f"Heap({{{inner}{more}}})"


def heap_eq_on(h1: Heap, h2: Heap, addrs: Iterable[Addr]) -> bool:
    """True iff both heaps give the same result on every address in ``addrs``.

    "Same result" includes both addresses being inaccessible.
    """
    return all(h1.read(a) == h2.read(a) for a in addrs)


def interval(lo: Addr, hi: Addr) -> range:
    """The half-open address interval [lo, hi)."""
    return range(lo, max(lo, hi))
