"""Conjunctive query graphs: patterns over atoms and variables.

A query is a non-empty tuple of triple patterns whose subject/object atoms
form one connected component. ``canonical_form`` produces a bytes key that is
identical for two queries exactly when one can be turned into the other by
renaming variables and reordering patterns, which is what workload
deduplication needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import CanonicalisationError, CorpusFormatError, InvalidQueryError
from .kg import _ATOM_KINDS, Atom

SHAPE_TAGS = ("star", "path", "flower", "snowflake", "other")

_RESERVED_KEYS = frozenset({"triples", "cardinality", "shape"})


@dataclass(frozen=True, slots=True)
class QueryAtom:
    """Either a ground atom or a named variable (exactly one of the two)."""

    atom: Atom | None = None
    var: str | None = None

    def __post_init__(self) -> None:
        if (self.atom is None) == (self.var is None):
            raise InvalidQueryError("query atom must be exactly one of bound/variable")
        if self.var is not None and not self.var:
            raise InvalidQueryError("variable name must be non-empty")

    @classmethod
    def bound(cls, atom: Atom) -> "QueryAtom":
        return cls(atom=atom)

    @classmethod
    def variable(cls, name: str) -> "QueryAtom":
        return cls(var=name)

    @property
    def is_var(self) -> bool:
        return self.var is not None


@dataclass(frozen=True, slots=True)
class TriplePattern:
    s: QueryAtom
    p: QueryAtom
    o: QueryAtom

    def positions(self) -> tuple[QueryAtom, QueryAtom, QueryAtom]:
        return (self.s, self.p, self.o)


def bound(atom: Atom) -> QueryAtom:
    return QueryAtom.bound(atom)


def var(name: str) -> QueryAtom:
    return QueryAtom.variable(name)


def pattern(s: QueryAtom, p: QueryAtom, o: QueryAtom) -> TriplePattern:
    return TriplePattern(s, p, o)


@dataclass(frozen=True)
class QueryGraph:
    patterns: tuple[TriplePattern, ...]
    true_cardinality: int | None = None
    shape_tag: str | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.patterns:
            raise InvalidQueryError("query must have at least one pattern")
        if not any(qa.is_var for tp in self.patterns for qa in tp.positions()):
            raise InvalidQueryError("query must contain at least one variable")
        if self.true_cardinality is not None and self.true_cardinality < 0:
            raise InvalidQueryError("cardinality must be non-negative")
        if self.shape_tag is not None and self.shape_tag not in SHAPE_TAGS:
            raise InvalidQueryError(f"unknown shape tag {self.shape_tag!r}")
        self._check_connected()

    def _check_connected(self) -> None:
        # Union-find over the subject/object node atoms; each pattern is an edge.
        parent: dict[QueryAtom, QueryAtom] = {}

        def find(x: QueryAtom) -> QueryAtom:
            while parent[x] is not x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for tp in self.patterns:
            for node in (tp.s, tp.o):
                if node not in parent:
                    parent[node] = node
            rs, ro = find(tp.s), find(tp.o)
            if rs is not ro:
                parent[rs] = ro
        roots = {find(n) for n in parent}
        if len(roots) > 1:
            raise InvalidQueryError("query graph is not connected")

    def variables(self) -> tuple[str, ...]:
        """Distinct variable names in first-occurrence order (s, p, o scan)."""
        seen: dict[str, None] = {}
        for tp in self.patterns:
            for qa in tp.positions():
                if qa.is_var and qa.var not in seen:
                    seen[qa.var] = None
        return tuple(seen)

    def nodes(self) -> tuple[QueryAtom, ...]:
        """Distinct subject/object query atoms in first-occurrence order."""
        seen: dict[QueryAtom, None] = {}
        for tp in self.patterns:
            for qa in (tp.s, tp.o):
                if qa not in seen:
                    seen[qa] = None
        return tuple(seen)

    def bound_atoms(self) -> tuple[Atom, ...]:
        """Distinct ground atoms anywhere in the query, first-occurrence order."""
        seen: dict[Atom, None] = {}
        for tp in self.patterns:
            for qa in tp.positions():
                if not qa.is_var and qa.atom not in seen:
                    seen[qa.atom] = None
        return tuple(seen)


def with_cardinality(q: QueryGraph, n: int) -> QueryGraph:
    return replace(q, true_cardinality=n)


# -- canonical form -----------------------------------------------------------


def _encode_pattern(tp: TriplePattern, var_map: dict[str, int],
                    n_assigned: int) -> tuple[bytes, list[str]]:
    """Serialize one pattern under ``var_map``, assigning fresh ids on the fly.

    Returns the bytes and the list of newly assigned variable names (in
    assignment order); the caller decides whether to keep the assignment.
    """
    parts: list[bytes] = []
    new_vars: list[str] = []
    for qa in tp.positions():
        if qa.is_var:
            vid = var_map.get(qa.var)
            if vid is None:
                vid = n_assigned + len(new_vars)
                var_map[qa.var] = vid
                new_vars.append(qa.var)
            parts.append(b"V" + bytes([vid]))
        else:
            a = qa.atom
            raw = a.value.encode("utf-8")
            parts.append(b"B" + a.kind.encode("ascii")[:1]
                         + len(raw).to_bytes(4, "big") + raw)
    return b"|".join(parts) + b";", new_vars


def canonical_form(q: QueryGraph, max_variables: int = 16) -> bytes:
    """Canonical bytes key, equal for queries identical up to variable
    renaming and pattern reordering.

    Computed as the lexicographic minimum, over all pattern orderings with
    variables relabeled by first occurrence, of the serialized pattern list.
    The search memoizes on (remaining patterns, relabeling restricted to the
    variables still relevant, number of ids assigned), which collapses the
    symmetric branches that make naive enumeration factorial.
    """
    names = q.variables()
    if len(names) > max_variables:
        raise CanonicalisationError(
            f"query has {len(names)} variables; canonical form supports at most "
            f"{max_variables}")

    pats = q.patterns
    n = len(pats)
    pattern_vars: list[frozenset[str]] = [
        frozenset(qa.var for qa in tp.positions() if qa.is_var) for tp in pats
    ]

    memo: dict[tuple, bytes] = {}

    def best(remaining: frozenset[int], var_map: dict[str, int], n_assigned: int) -> bytes:
        if not remaining:
            return b""
        relevant: set[str] = set()
        for i in remaining:
            relevant |= pattern_vars[i]
        key = (remaining,
               tuple(sorted((v, var_map[v]) for v in relevant if v in var_map)),
               n_assigned)
        hit = memo.get(key)
        if hit is not None:
            return hit
        result: bytes | None = None
        for i in remaining:
            trial_map = dict(var_map)
            head, new_vars = _encode_pattern(pats[i], trial_map, n_assigned)
            if result is not None and head > result[:len(head)]:
                # the first pattern alone already exceeds the best serialization
                continue
            tail = best(remaining - {i}, trial_map, n_assigned + len(new_vars))
            cand = head + tail
            if result is None or cand < result:
                result = cand
        assert result is not None
        memo[key] = result
        return result

    return best(frozenset(range(n)), {}, 0)


# -- corpus IO ----------------------------------------------------------------


def _atom_to_json(qa: QueryAtom) -> dict[str, str]:
    if qa.is_var:
        return {"kind": "var", "value": qa.var}
    return {"kind": qa.atom.kind, "value": qa.atom.value}


def _atom_from_json(obj, path: str) -> QueryAtom:
    if not isinstance(obj, dict):
        raise CorpusFormatError("term must be an object", path)
    kind = obj.get("kind")
    value = obj.get("value")
    if not isinstance(kind, str):
        raise CorpusFormatError("missing or non-string 'kind'", path + ".kind")
    if not isinstance(value, str) or not value:
        raise CorpusFormatError("missing or empty 'value'", path + ".value")
    unknown = set(obj) - {"kind", "value"}
    if unknown:
        raise CorpusFormatError(f"unknown term fields {sorted(unknown)}", path)
    if kind == "var":
        return QueryAtom.variable(value)
    if kind in _ATOM_KINDS:
        try:
            return QueryAtom.bound(Atom(kind, value))
        except ValueError as exc:
            raise CorpusFormatError(str(exc), path + ".value") from exc
    raise CorpusFormatError(f"unknown kind {kind!r}", path + ".kind")


def query_to_json(q: QueryGraph) -> dict:
    entry: dict = {
        "triples": [[_atom_to_json(qa) for qa in tp.positions()]
                    for tp in q.patterns],
    }
    if q.true_cardinality is not None:
        entry["cardinality"] = q.true_cardinality
    if q.shape_tag is not None:
        entry["shape"] = q.shape_tag
    for k, v in q.extra.items():
        entry[k] = v
    return entry


def query_from_json(entry, path: str = "$", strict: bool = False) -> QueryGraph:
    if not isinstance(entry, dict):
        raise CorpusFormatError("corpus entry must be an object", path)
    triples = entry.get("triples")
    if not isinstance(triples, list) or not triples:
        raise CorpusFormatError("'triples' must be a non-empty array", path + ".triples")
    patterns = []
    for i, row in enumerate(triples):
        rp = f"{path}.triples[{i}]"
        if not isinstance(row, list) or len(row) != 3:
            raise CorpusFormatError("pattern must be an array of 3 terms", rp)
        patterns.append(TriplePattern(*[
            _atom_from_json(row[j], f"{rp}[{j}]") for j in range(3)
        ]))
    cardinality = entry.get("cardinality")
    if cardinality is not None and (not isinstance(cardinality, int)
                                    or isinstance(cardinality, bool)):
        raise CorpusFormatError("'cardinality' must be an integer",
                                path + ".cardinality")
    shape = entry.get("shape")
    if shape is not None and not isinstance(shape, str):
        raise CorpusFormatError("'shape' must be a string", path + ".shape")
    extra = {k: v for k, v in entry.items() if k not in _RESERVED_KEYS}
    if strict and extra:
        raise CorpusFormatError(
            f"unknown fields {sorted(extra)}", path)
    try:
        return QueryGraph(tuple(patterns), true_cardinality=cardinality,
                          shape_tag=shape, extra=extra)
    except InvalidQueryError as exc:
        raise CorpusFormatError(str(exc), path) from exc


def write_corpus(queries: Sequence[QueryGraph], path) -> None:
    payload = [query_to_json(q) for q in queries]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_corpus(path, strict: bool = False) -> list[QueryGraph]:
    """Load a JSON query corpus.

    In strict mode unknown entry fields are rejected; otherwise they are
    preserved on ``QueryGraph.extra`` and re-emitted by ``write_corpus``.
    Schema violations raise ``CorpusFormatError`` carrying a JSON path.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise CorpusFormatError("corpus must be a JSON array")
    return [query_from_json(entry, f"$[{i}]", strict=strict)
            for i, entry in enumerate(payload)]
