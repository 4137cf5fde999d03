"""Query graphs, canonical keys, and the JSON corpus format."""

import itertools
import json

import numpy as np
import pytest

from gnce.errors import (CanonicalisationError, CorpusFormatError,
                         InvalidQueryError)
from gnce.kg import Atom, iri
from gnce.queries import (QueryAtom, QueryGraph, TriplePattern, bound,
                          canonical_form, pattern, query_from_json,
                          query_to_json, read_corpus, var, with_cardinality,
                          write_corpus)
from conftest import make_store, random_connected_query

P, Q, O1, O2 = iri("urn:p"), iri("urn:q"), iri("urn:o1"), iri("urn:o2")


def single(s, p, o) -> QueryGraph:
    return QueryGraph((pattern(s, p, o),))


class TestQueryGraphInvariants:
    def test_query_atom_exactly_one_side(self):
        with pytest.raises(InvalidQueryError):
            QueryAtom(atom=P, var="x")
        with pytest.raises(InvalidQueryError):
            QueryAtom()
        with pytest.raises(InvalidQueryError):
            QueryAtom.variable("")

    def test_at_least_one_pattern(self):
        with pytest.raises(InvalidQueryError):
            QueryGraph(())

    def test_at_least_one_variable(self):
        with pytest.raises(InvalidQueryError):
            single(bound(iri("urn:a")), bound(P), bound(O1))

    def test_connectivity_required(self):
        disconnected = (pattern(var("x"), bound(P), bound(O1)),
                        pattern(var("y"), bound(Q), bound(O2)))
        with pytest.raises(InvalidQueryError):
            QueryGraph(disconnected)

    def test_predicate_only_sharing_does_not_connect(self):
        shared_pred = (pattern(var("x"), bound(P), bound(O1)),
                       pattern(var("y"), bound(P), bound(O2)))
        with pytest.raises(InvalidQueryError):
            QueryGraph(shared_pred)

    def test_variable_predicate_connects_when_endpoint_shared(self):
        q = QueryGraph((pattern(var("x"), bound(P), var("y")),
                        pattern(var("y"), var("p2"), bound(O1))))
        assert q.variables() == ("x", "y", "p2")

    def test_variables_first_occurrence_order(self):
        q = QueryGraph((pattern(var("b"), bound(P), var("a")),
                        pattern(var("a"), bound(Q), var("c"))))
        assert q.variables() == ("b", "a", "c")

    def test_negative_cardinality_rejected(self):
        with pytest.raises(InvalidQueryError):
            QueryGraph((pattern(var("x"), bound(P), bound(O1)),),
                       true_cardinality=-1)

    def test_with_cardinality(self):
        q = single(var("x"), bound(P), bound(O1))
        q2 = with_cardinality(q, 7)
        assert q2.true_cardinality == 7
        assert q.true_cardinality is None
        assert q2.patterns == q.patterns


class TestCanonicalForm:
    def test_pure_renaming_same_key(self):
        a = single(var("x"), bound(P), var("y"))
        b = single(var("a"), bound(P), var("b"))
        assert canonical_form(a) == canonical_form(b)

    def test_pattern_reorder_same_key(self):
        a = QueryGraph((pattern(var("x"), bound(P), bound(O1)),
                        pattern(var("x"), bound(Q), bound(O2))))
        b = QueryGraph((pattern(var("x"), bound(Q), bound(O2)),
                        pattern(var("x"), bound(P), bound(O1))))
        assert canonical_form(a) == canonical_form(b)

    def test_reversed_variables_same_key_but_bound_swap_differs(self):
        a = single(var("x"), bound(P), var("y"))
        b = single(var("y"), bound(P), var("x"))
        assert canonical_form(a) == canonical_form(b)
        c = single(var("x"), bound(P), bound(O1))
        d = single(bound(O1), bound(P), var("x"))
        assert canonical_form(c) != canonical_form(d)

    def test_invariant_under_rename_and_reorder(self):
        store = make_store(n_triples=150, seed=2)
        rng = np.random.default_rng(7)
        for trial in range(1000):
            q = random_connected_query(store, rng,
                                       n_patterns=int(rng.integers(1, 5)))
            key = canonical_form(q)
            names = q.variables()
            mapping = dict(zip(names, [f"w{int(i)}" for i in
                                       rng.permutation(len(names))]))

            def ren(qa: QueryAtom) -> QueryAtom:
                return QueryAtom.variable(mapping[qa.var]) if qa.is_var else qa

            pats = [TriplePattern(ren(tp.s), ren(tp.p), ren(tp.o))
                    for tp in q.patterns]
            order = rng.permutation(len(pats))
            shuffled = QueryGraph(tuple(pats[int(i)] for i in order))
            assert canonical_form(shuffled) == key, f"trial {trial}"

    def test_distinct_small_queries_distinct_keys(self):
        # Brute-force isomorphism oracle over all <= 2 pattern queries built
        # from a tiny term universe.
        terms = [var("x"), var("y"), bound(P), bound(O1)]
        pats = []
        for s, p, o in itertools.product(terms, repeat=3):
            if p.is_var or p.atom.is_iri_like:
                pats.append(TriplePattern(s, p, o))
        queries = []
        for tp in pats:
            try:
                queries.append(QueryGraph((tp,)))
            except InvalidQueryError:
                continue
        for n in range(2):
            for a, b in itertools.combinations(queries, 2):
                iso = _isomorphic(a, b)
                same = canonical_form(a) == canonical_form(b)
                assert iso == same, (a, b)

    def test_variable_limit(self):
        pats = []
        for i in range(17):
            pats.append(pattern(var("hub"), bound(P), var(f"v{i}")))
        q = QueryGraph(tuple(pats))
        with pytest.raises(CanonicalisationError):
            canonical_form(q)
        assert canonical_form(q, max_variables=18)


def _isomorphic(a: QueryGraph, b: QueryGraph) -> bool:
    va, vb = a.variables(), b.variables()
    if len(a.patterns) != len(b.patterns) or len(va) != len(vb):
        return False

    def key(q: QueryGraph, mapping: dict) -> frozenset:
        rows = []
        for tp in q.patterns:
            row = []
            for qa in tp.positions():
                row.append(("v", mapping[qa.var]) if qa.is_var
                           else ("b", qa.atom.kind, qa.atom.value))
            rows.append(tuple(row))
        return frozenset((r, rows.count(r)) for r in rows)

    base = key(a, {v: i for i, v in enumerate(va)})
    for perm in itertools.permutations(range(len(vb))):
        if key(b, dict(zip(vb, perm))) == base:
            return True
    return False


class TestCorpus:
    def test_round_trip_100_random_queries(self, tmp_path):
        store = make_store(n_triples=120, seed=5)
        rng = np.random.default_rng(11)
        queries = []
        for i in range(100):
            q = random_connected_query(store, rng,
                                       n_patterns=int(rng.integers(1, 5)))
            if i % 3 == 0:
                q = with_cardinality(q, int(rng.integers(0, 50)))
            queries.append(q)
        path = tmp_path / "corpus.json"
        write_corpus(queries, path)
        assert read_corpus(path) == queries

    def test_missing_triples_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([{"cardinality": 3}]), encoding="utf-8")
        with pytest.raises(CorpusFormatError) as err:
            read_corpus(path)
        assert "triples" in str(err.value)

    def test_error_carries_json_path(self):
        entry = {"triples": [[{"kind": "var", "value": "x"},
                              {"kind": "iri", "value": "urn:p"},
                              {"kind": "nope", "value": "urn:o"}]]}
        with pytest.raises(CorpusFormatError) as err:
            query_from_json(entry, path="$[0]")
        assert err.value.path == "$[0].triples[0][2].kind"

    def test_cardinality_zero_accepted(self):
        entry = {"triples": [[{"kind": "var", "value": "x"},
                              {"kind": "iri", "value": "urn:p"},
                              {"kind": "iri", "value": "urn:o"}]],
                 "cardinality": 0}
        q = query_from_json(entry)
        assert q.true_cardinality == 0

    def test_non_integer_cardinality_rejected(self):
        entry = {"triples": [[{"kind": "var", "value": "x"},
                              {"kind": "iri", "value": "urn:p"},
                              {"kind": "iri", "value": "urn:o"}]],
                 "cardinality": True}
        with pytest.raises(CorpusFormatError):
            query_from_json(entry)

    def test_unknown_fields_preserved_or_rejected(self, tmp_path):
        entry = {"triples": [[{"kind": "var", "value": "x"},
                              {"kind": "iri", "value": "urn:p"},
                              {"kind": "iri", "value": "urn:o"}]],
                 "note": "hand written"}
        q = query_from_json(entry)
        assert q.extra == {"note": "hand written"}
        assert query_to_json(q)["note"] == "hand written"
        with pytest.raises(CorpusFormatError):
            query_from_json(entry, strict=True)

    def test_disconnected_corpus_entry_rejected(self):
        entry = {"triples": [
            [{"kind": "var", "value": "x"},
             {"kind": "iri", "value": "urn:p"},
             {"kind": "iri", "value": "urn:o1"}],
            [{"kind": "var", "value": "y"},
             {"kind": "iri", "value": "urn:p"},
             {"kind": "iri", "value": "urn:o2"}],
        ]}
        with pytest.raises(CorpusFormatError):
            query_from_json(entry)

    def test_literal_and_blank_kinds_round_trip(self):
        q = QueryGraph((TriplePattern(
            QueryAtom.bound(Atom("blank", "urn:skolem:b1")),
            QueryAtom.bound(P),
            QueryAtom.variable("x")),))
        assert query_from_json(query_to_json(q)) == q

    def test_corpus_must_be_array(self, tmp_path):
        path = tmp_path / "obj.json"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            read_corpus(path)

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "nope.json"
        path.write_text("[{", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            read_corpus(path)
