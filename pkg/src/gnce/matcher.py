"""Exact conjunctive-query evaluation by backtracking join.

Solutions are homomorphisms: total assignments of the query's variables to
store atoms such that every instantiated pattern is a stored triple. Distinct
variables may map to the same atom. At every recursion level the pattern with
the fewest index candidates under the current partial binding is evaluated
next (ties broken by pattern position), so the search order adapts as
variables become bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

from .errors import UsageError
from .kg import Atom, TripleStore
from .queries import QueryGraph

#: How many candidate triples are scanned between deadline checks.
_TIME_CHECK_STRIDE = 4096

Binding = dict[str, Atom]


@dataclass(frozen=True, slots=True)
class CountResult:
    """Either an exact solution count or a lower bound with the reason."""

    value: int
    exact: bool
    reason: str | None = None

    @classmethod
    def exact_count(cls, n: int) -> "CountResult":
        return cls(n, True)

    @classmethod
    def at_least(cls, n: int, reason: str) -> "CountResult":
        return cls(n, False, reason)


class _Pattern:
    """A triple pattern compiled to atom ids and variable slots."""

    __slots__ = ("spec", "vars")

    def __init__(self, spec: tuple, vars_: frozenset[str]):
        self.spec = spec      # per position: int atom id, or str variable name
        self.vars = vars_


def _compile(store: TripleStore, q: QueryGraph) -> list[_Pattern] | None:
    """Map bound atoms to store ids; None if some bound atom cannot match."""
    out = []
    for tp in q.patterns:
        spec = []
        names = set()
        for qa in tp.positions():
            if qa.is_var:
                spec.append(qa.var)
                names.add(qa.var)
            else:
                i = store.id_of(qa.atom)
                if i is None:
                    return None
                spec.append(i)
        out.append(_Pattern(tuple(spec), frozenset(names)))
    return out


def _instantiate(p: _Pattern, binding: dict[str, int]):
    """Split the pattern into index-bound positions and open variable slots.

    Returns (lookup, slots) where lookup is the (s, p, o) tuple with None for
    open positions and slots lists (position, name) pairs for them.
    """
    lookup: list[int | None] = []
    slots: list[tuple[int, str]] = []
    for pos, x in enumerate(p.spec):
        if isinstance(x, int):
            lookup.append(x)
        else:
            b = binding.get(x)
            if b is not None:
                lookup.append(b)
            else:
                lookup.append(None)
                slots.append((pos, x))
    return lookup, slots


class _Search:
    def __init__(self, store: TripleStore, patterns: list[_Pattern],
                 limit: int | None, deadline: float | None,
                 collect: list[dict[str, int]] | None):
        self.store = store
        self.patterns = patterns
        self.limit = limit
        self.deadline = deadline
        self.collect = collect
        self.count = 0
        self.scanned = 0
        self.stop_reason: str | None = None

    def _tick(self) -> bool:
        """True when the search must stop (deadline passed)."""
        self.scanned += 1
        if self.deadline is not None and self.scanned % _TIME_CHECK_STRIDE == 0:
            if time.monotonic() > self.deadline:
                self.stop_reason = "timeout"
                return True
        return False

    def run(self) -> None:
        self._rec(list(range(len(self.patterns))), {})

    def _rec(self, remaining: list[int], binding: dict[str, int]) -> bool:
        """Returns True when the search should unwind (limit/timeout hit)."""
        if not remaining:
            self.count += 1
            if self.collect is not None:
                self.collect.append(dict(binding))
            if self.limit is not None and self.count >= self.limit:
                self.stop_reason = self.stop_reason or "limit"
                return True
            return False

        store = self.store
        # Pick the remaining pattern with the fewest candidates right now.
        best_i = -1
        best_m = -1
        best_inst = None
        for i in remaining:
            lookup, slots = _instantiate(self.patterns[i], binding)
            m = store.count_ids(*lookup)
            if m == 0:
                return False
            if best_m < 0 or m < best_m:
                best_i, best_m, best_inst = i, m, (lookup, slots)
        lookup, slots = best_inst
        rest = [i for i in remaining if i != best_i]

        if not slots:
            # Fully bound: a membership filter.
            if self._tick():
                return True
            return self._rec(rest, binding)

        for cand in store.match_ids(*lookup):
            if self._tick():
                return True
            ok = True
            bound_here: list[str] = []
            for pos, name in slots:
                val = cand[pos]
                prev = binding.get(name)
                if prev is None:
                    binding[name] = val
                    bound_here.append(name)
                elif prev != val:
                    # the same new variable appears twice in this pattern
                    ok = False
                    break
            if ok and self._rec(rest, binding):
                for name in bound_here:
                    del binding[name]
                return True
            for name in bound_here:
                del binding[name]
        return False


def count_solutions(store: TripleStore, q: QueryGraph,
                    limit: int | None = None,
                    timeout: float | None = None) -> CountResult:
    """Count homomorphic solutions of ``q`` over ``store``.

    ``limit`` stops the search once that many solutions have been found and
    returns ``AtLeast(limit)``; ``timeout`` (seconds) likewise returns the
    partial count found so far. With neither, the result is exact.
    """
    if limit is not None and limit < 1:
        raise UsageError("limit must be >= 1")
    patterns = _compile(store, q)
    if patterns is None:
        return CountResult.exact_count(0)
    deadline = time.monotonic() + timeout if timeout is not None else None
    search = _Search(store, patterns, limit, deadline, None)
    search.run()
    if search.stop_reason is not None:
        return CountResult.at_least(search.count, search.stop_reason)
    return CountResult.exact_count(search.count)


def enumerate_solutions(store: TripleStore, q: QueryGraph,
                        limit: int | None = None) -> list[Binding]:
    """Materialize solutions as variable->Atom maps, deterministic order.

    The order is fixed by the store's index enumeration order and the join
    order; two calls over the same store and query return the same list.
    """
    patterns = _compile(store, q)
    if patterns is None:
        return []
    collect: list[dict[str, int]] = []
    search = _Search(store, patterns, limit, None, collect)
    search.run()
    names = q.variables()
    out: list[Binding] = []
    for row in collect:
        # solutions are total by construction: every variable occurs in some
        # pattern and every pattern was consumed
        out.append({name: store.atom(row[name]) for name in names})
    return out
