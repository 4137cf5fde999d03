"""Classical cardinality estimators used as comparison points.

Characteristic sets summarize subjects by their outgoing predicate
histogram; stars over distinct variables are then counted exactly from the
class table, and bound terms or star-to-star joins degrade to independence
style corrections. Random-walk sampling estimates arbitrary conjunctive
patterns without precomputation by sampling one consistent candidate per
pattern and averaging the Horvitz-Thompson weights.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EstimatorError
from .kg import TripleStore
from .queries import QueryAtom, QueryGraph, TriplePattern, canonical_form
from .seeding import STAGE_WANDERJOIN, rng_for


class CharacteristicSets:
    """Subjects grouped by their exact multiset of outgoing predicates.

    Keying classes on the full histogram rather than the predicate set means
    every subject in a class has the same out-degree per predicate, so the
    per-class product of (occurrences / count) recovers star cardinalities
    exactly when subject and objects are distinct variables.
    """

    def __init__(self, store: TripleStore,
                 classes: list[tuple[int, dict[int, int]]]) -> None:
        self._store = store
        self._classes = classes
        self._n_triples = max(1, len(store))
        self._n_subjects = max(1, store.distinct_subject_count())
        self._by_pred: dict[int, list[int]] = {}
        for i, (_, preds) in enumerate(classes):
            for p in preds:
                self._by_pred.setdefault(p, []).append(i)

    @classmethod
    def build(cls, store: TripleStore) -> "CharacteristicSets":
        grouped: dict[tuple[tuple[int, int], ...], list] = {}
        for s in store.subject_ids():
            hist = Counter(p for p, _ in store.out_edges(s))
            key = tuple(sorted(hist.items()))
            entry = grouped.get(key)
            if entry is None:
                grouped[key] = [1, dict(hist)]
            else:
                entry[0] += 1
                preds = entry[1]
                for p, mult in hist.items():
                    preds[p] += mult
        classes = [(count, preds) for count, preds in grouped.values()]
        return cls(store, classes)

    @property
    def n_classes(self) -> int:
        return len(self._classes)

    def _star_estimate(self, subject: QueryAtom,
                       patterns: Sequence[TriplePattern]) -> float:
        store = self._store
        pred_ids: list[int] = []
        for p in patterns:
            if p.p.is_var:
                raise EstimatorError(
                    "characteristic sets require bound predicates")
            pid = store.id_of(p.p.atom)
            if pid is None:
                return 0.0
            pred_ids.append(pid)

        candidate_lists = [self._by_pred.get(pid, []) for pid in set(pred_ids)]
        if not candidate_lists:
            return 0.0
        candidates = min(candidate_lists, key=len)
        needed = set(pred_ids)
        total = 0.0
        for ci in candidates:
            count, preds = self._classes[ci]
            if not needed.issubset(preds):
                continue
            prod = float(count)
            for pid in pred_ids:
                prod *= preds[pid] / count
            total += prod

        if not subject.is_var:
            sid = store.id_of(subject.atom)
            occ = store.occ_id(sid) if sid is not None else 0
            total *= occ / self._n_triples
        for p in patterns:
            if not p.o.is_var:
                oid = store.id_of(p.o.atom)
                occ = store.occ_id(oid) if oid is not None else 0
                total *= occ / self._n_triples
        return total

    def estimate(self, q: QueryGraph) -> float:
        """Estimated cardinality; refuses queries with predicate variables."""
        groups: dict[QueryAtom, list[TriplePattern]] = {}
        for p in q.patterns:
            groups.setdefault(p.s, []).append(p)

        result = 1.0
        for subject, patterns in groups.items():
            result *= self._star_estimate(subject, patterns)

        star_subject_vars = {s.var for s in groups if s.is_var}
        links = 0
        for p in q.patterns:
            if p.o.is_var and p.o.var in star_subject_vars:
                links += 1
        if links:
            result /= float(self._n_subjects) ** links
        return result


@dataclass(frozen=True, slots=True)
class WanderJoinResult:
    estimate: float
    failures: int
    runs: int


class WanderJoin:
    """Random-walk sampling estimator for conjunctive patterns.

    The walk order is fixed per query: the statically smallest pattern
    first, then always a pattern sharing a variable with what is already
    bound (smallest static count first, position as tiebreak). Each run
    samples one candidate per pattern uniformly among those consistent with
    the bindings so far and multiplies the candidate counts; dead ends
    contribute zero. The estimate is the mean over runs.
    """

    def __init__(self, store: TripleStore, runs: int = 30,
                 seed: int = 0) -> None:
        if runs < 1:
            raise EstimatorError("runs must be >= 1")
        self._store = store
        self.runs = runs
        self.seed = seed

    def _static_count(self, p: TriplePattern) -> int:
        store = self._store
        spec = []
        for qa in (p.s, p.p, p.o):
            if qa.is_var:
                spec.append(None)
            else:
                i = store.id_of(qa.atom)
                if i is None:
                    return 0
                spec.append(i)
        return store.count_ids(*spec)

    def plan(self, q: QueryGraph) -> tuple[int, ...]:
        counts = [self._static_count(p) for p in q.patterns]
        n = len(q.patterns)
        remaining = set(range(n))
        order: list[int] = []
        bound_vars: set[str] = set()

        def pattern_vars(i: int) -> set[str]:
            return {qa.var for qa in (q.patterns[i].s, q.patterns[i].p,
                                      q.patterns[i].o) if qa.is_var}

        while remaining:
            if order:
                connected = [i for i in sorted(remaining)
                             if pattern_vars(i) & bound_vars]
                pool = connected if connected else sorted(remaining)
            else:
                pool = sorted(remaining)
            best = min(pool, key=lambda i: (counts[i], i))
            order.append(best)
            remaining.discard(best)
            bound_vars |= pattern_vars(best)
        return tuple(order)

    def _query_rng(self, q: QueryGraph) -> np.random.Generator:
        digest = hashlib.blake2b(canonical_form(q), digest_size=8).digest()
        return rng_for(self.seed, STAGE_WANDERJOIN,
                       int.from_bytes(digest, "little"))

    def estimate(self, q: QueryGraph, runs: int | None = None,
                 rng: np.random.Generator | None = None) -> float:
        """Mean Horvitz-Thompson weight over random walk runs."""
        return self.run(q, runs, rng).estimate

    def run(self, q: QueryGraph, runs: int | None = None,
            rng: np.random.Generator | None = None) -> WanderJoinResult:
        """Estimate plus the count of dead-end (zero weight) runs.

        Without an explicit generator the randomness is derived from the
        estimator seed and the query's canonical form, so repeated calls
        agree.
        """
        store = self._store
        n_runs = self.runs if runs is None else runs
        if n_runs < 1:
            raise EstimatorError("runs must be >= 1")
        gen = rng if rng is not None else self._query_rng(q)
        order = self.plan(q)
        patterns = [q.patterns[i] for i in order]

        compiled = []
        for p in patterns:
            slots = []
            for qa in (p.s, p.p, p.o):
                if qa.is_var:
                    slots.append(qa.var)
                else:
                    i = store.id_of(qa.atom)
                    if i is None:
                        return WanderJoinResult(0.0, n_runs, n_runs)
                    slots.append(i)
            compiled.append(tuple(slots))

        total = 0.0
        failures = 0
        for _ in range(n_runs):
            binding: dict[str, int] = {}
            weight = 1.0
            for slots in compiled:
                spec = []
                open_slots: dict[str, list[int]] = {}
                for pos, slot in enumerate(slots):
                    if isinstance(slot, str):
                        known = binding.get(slot)
                        spec.append(known)
                        if known is None:
                            open_slots.setdefault(slot, []).append(pos)
                    else:
                        spec.append(slot)
                candidates = list(store.match_ids(*spec))
                repeated = {v: ps for v, ps in open_slots.items()
                            if len(ps) > 1}
                if repeated:
                    candidates = [
                        t for t in candidates
                        if all(len({t[p] for p in ps}) == 1
                               for ps in repeated.values())
                    ]
                m = len(candidates)
                if m == 0:
                    weight = 0.0
                    break
                chosen = candidates[int(gen.integers(m))]
                for v, ps in open_slots.items():
                    binding[v] = chosen[ps[0]]
                weight *= m
            if weight == 0.0:
                failures += 1
            total += weight
        return WanderJoinResult(total / n_runs, failures, n_runs)
