"""Multi-index sets.

Multi-indices are plain tuples of non-negative integers. A
:class:`DownwardClosedSet` is an immutable, lexicographically ordered
collection of such tuples that contains every componentwise-smaller index of
each of its members. Polynomial spaces, the dyadic blocks used by the
adaptive algorithm and its (d+1)-dimensional space/level index sets are all
built from these.
"""

from __future__ import annotations

import itertools
from functools import cached_property
from math import comb
from typing import Iterable, Iterator, Sequence

MultiIndex = tuple[int, ...]


class DimensionMismatchError(ValueError):
    """Multi-indices of different lengths were mixed."""


class NotDownwardClosedError(ValueError):
    """An operation required a downward closed set."""


def as_multi_index(idx: Iterable[int]) -> MultiIndex:
    out = tuple(int(i) for i in idx)
    if any(i < 0 for i in out):
        raise ValueError(f"multi-index entries must be non-negative, got {out}")
    return out


def _common_dim(members: Iterable[MultiIndex]) -> int | None:
    dims = {len(m) for m in members}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed multi-index dimensions {sorted(dims)}")
    return dims.pop() if dims else None


def _lower_neighbors(idx: MultiIndex) -> Iterator[MultiIndex]:
    for j, v in enumerate(idx):
        if v > 0:
            yield idx[:j] + (v - 1,) + idx[j + 1:]


def is_downward_closed(members: Iterable[Sequence[int]]) -> bool:
    """Return True iff every componentwise-smaller index of a member is a member.

    Checking the unit-step predecessors of every member is sufficient, since
    any ``q <= p`` is reached from ``p`` by a chain of unit decrements.
    """
    s = {as_multi_index(m) for m in members}
    _common_dim(s)
    return all(q in s for p in s for q in _lower_neighbors(p))


class DownwardClosedSet:
    """Immutable downward closed set of multi-indices of a common dimension.

    Members are stored sorted lexicographically; iteration, ``index_of`` and
    serialization all follow that order.

    Args:
        members: Multi-indices. Duplicates are dropped.
        dim: Lattice dimension. Required only for the empty set.
        check: Verify downward closedness (raises
            :class:`NotDownwardClosedError` otherwise).
    """

    def __init__(self, members: Iterable[Sequence[int]] = (), dim: int | None = None,
                 check: bool = True):
        uniq = {as_multi_index(m) for m in members}
        found = _common_dim(uniq)
        if found is None:
            if dim is None:
                raise ValueError("dimension is required for an empty set")
            found = dim
        elif dim is not None and dim != found:
            raise DimensionMismatchError(f"expected dimension {dim}, members have {found}")
        self.dim = int(found)
        self._members = tuple(sorted(uniq))
        self._lookup = {m: i for i, m in enumerate(self._members)}
        if check and not all(q in self._lookup for p in self._members
                             for q in _lower_neighbors(p)):
            raise NotDownwardClosedError("set is not downward closed")

    @classmethod
    def _trusted(cls, members: Iterable[MultiIndex], dim: int) -> "DownwardClosedSet":
        return cls(members, dim=dim, check=False)

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._members)

    def __contains__(self, idx) -> bool:
        return tuple(idx) in self._lookup

    def __eq__(self, other) -> bool:
        if isinstance(other, DownwardClosedSet):
            return self.dim == other.dim and self._members == other._members
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.dim, self._members))

    def __repr__(self) -> str:
        if len(self) <= 6:
            return f"DownwardClosedSet({list(self._members)})"
        return f"DownwardClosedSet(dim={self.dim}, size={len(self)})"

    @property
    def members(self) -> tuple[MultiIndex, ...]:
        return self._members

    def index_of(self, idx: Sequence[int]) -> int:
        return self._lookup[tuple(idx)]

    def max_degrees(self) -> tuple[int, ...]:
        if not self._members:
            return (0,) * self.dim
        return tuple(max(col) for col in zip(*self._members))

    @cached_property
    def admissible(self) -> tuple[MultiIndex, ...]:
        """Indices outside the set whose insertion keeps it downward closed."""
        if not self._members:
            return ((0,) * self.dim,)
        cands = set()
        for p in self._members:
            for j in range(self.dim):
                q = p[:j] + (p[j] + 1,) + p[j + 1:]
                if q not in self._lookup:
                    cands.add(q)
        return tuple(sorted(q for q in cands
                            if all(r in self._lookup for r in _lower_neighbors(q))))

    def add(self, idx: Sequence[int]) -> "DownwardClosedSet":
        """Return a new set with ``idx`` inserted; ``idx`` must be admissible."""
        idx = as_multi_index(idx)
        if idx in self._lookup:
            return self
        if idx not in self.admissible:
            raise NotDownwardClosedError(f"{idx} is not admissible")
        return DownwardClosedSet._trusted(self._members + (idx,), self.dim)

    def to_text(self) -> str:
        """Newline-delimited, space-separated integer tuples."""
        return "".join(" ".join(map(str, m)) + "\n" for m in self._members)

    @classmethod
    def from_text(cls, text: str, dim: int | None = None) -> "DownwardClosedSet":
        rows = [tuple(int(t) for t in line.split()) for line in text.splitlines()
                if line.strip()]
        return cls(rows, dim=dim)


def admissible_set(index_set: DownwardClosedSet | Iterable[Sequence[int]],
                   dim: int | None = None) -> set[MultiIndex]:
    """Admissible indices of a downward closed set."""
    if not isinstance(index_set, DownwardClosedSet):
        members = [as_multi_index(m) for m in index_set]
        if not is_downward_closed(members):
            raise NotDownwardClosedError("admissible set requires a downward closed set")
        index_set = DownwardClosedSet(members, dim=dim)
    return set(index_set.admissible)


def neighbors(idx: Sequence[int], index_set: Iterable[Sequence[int]]) -> set[MultiIndex]:
    """Members of ``index_set`` differing from ``idx`` by exactly 1 in one entry."""
    idx = as_multi_index(idx)
    members = index_set if isinstance(index_set, DownwardClosedSet) else \
        {as_multi_index(m) for m in index_set}
    out = set()
    for j, v in enumerate(idx):
        for step in (-1, 1):
            if v + step < 0:
                continue
            q = idx[:j] + (v + step,) + idx[j + 1:]
            if q in members:
                out.add(q)
    return out


def total_degree_set(d: int, m: int) -> DownwardClosedSet:
    """All multi-indices in dimension ``d`` with entry sum at most ``m``."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    members = [idx for idx in _bounded_sum(d, m)]
    assert len(members) == comb(m + d, d)
    return DownwardClosedSet._trusted(members, d)


def _bounded_sum(d: int, m: int) -> Iterator[MultiIndex]:
    if d == 1:
        for i in range(m + 1):
            yield (i,)
        return
    for i in range(m + 1):
        for rest in _bounded_sum(d - 1, m - i):
            yield (i,) + rest


def smallest_total_degree_set(d: int, min_size: float) -> DownwardClosedSet:
    """Smallest total-degree set with at least ``ceil(min_size)`` members."""
    m = 0
    while comb(m + d, d) < min_size - 1e-9:
        m += 1
    return total_degree_set(d, m)


def block_indices(k: Sequence[int]) -> list[MultiIndex]:
    """Exponents of the dyadic block ``2^k - 1 <= p < 2^(k+1) - 1`` (componentwise).

    The block itself is not downward closed; unions of blocks over a downward
    closed set of block indices are.
    """
    k = as_multi_index(k)
    ranges = [range(2 ** kj - 1, 2 ** (kj + 1) - 1) for kj in k]
    return [tuple(p) for p in itertools.product(*ranges)]


def union_of_blocks(blocks: Iterable[Sequence[int]], d: int) -> DownwardClosedSet:
    """Exponent set spanned by a collection of dyadic blocks."""
    members: set[MultiIndex] = set()
    for k in blocks:
        members.update(block_indices(k))
    return DownwardClosedSet(members, dim=d)
