"""Featurizer tests: bound/variable/unseen encodings and graph tensors."""

import numpy as np
import pytest

from gnce.embeddings import EmbeddingTable
from gnce.errors import ConfigMismatchError, UsageError
from gnce.featurizer import (
    DEFAULT_ID_WIDTH,
    binary_featurizer,
    embedding_featurizer,
    featurize,
    featurize_binary,
    masked_occ,
)
from gnce.kg import Triple, TripleStore, iri
from gnce.queries import QueryGraph, bound, pattern, var


def small_table(dim=3, names=("urn:a", "urn:b", "urn:p", "urn:q")):
    rng = np.random.default_rng(7)
    atoms = tuple(iri(n) for n in names)
    vecs = rng.uniform(-1.0, 1.0, size=(len(atoms), dim))
    return EmbeddingTable(dim=dim, atoms=atoms,
                          input_vectors=vecs,
                          output_vectors=np.zeros_like(vecs))


def occ_map(pairs):
    table = {iri(k): float(v) for k, v in pairs.items()}
    return lambda a: table.get(a, 0.0)


def star_query():
    return QueryGraph((
        pattern(bound(iri("urn:a")), bound(iri("urn:p")), var("x")),
        pattern(bound(iri("urn:a")), bound(iri("urn:q")), var("y")),
    ))


class TestEmbeddingRows:
    def test_bound_atom_embedding_plus_log_occ(self):
        table = small_table()
        occ = occ_map({"urn:a": 6, "urn:p": 2})
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize(q, table, occ, np.zeros(3))
        row = feats.node_features[0]
        np.testing.assert_allclose(row[:3], table.lookup(iri("urn:a")))
        assert row[3] == pytest.approx(np.log1p(6.0))

    def test_zero_occurrence_gives_zero_slot(self):
        table = small_table()
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        assert feats.node_features[0, 3] == 0.0

    def test_raw_occ_scale(self):
        table = small_table()
        occ = occ_map({"urn:a": 6})
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize(q, table, occ, np.zeros(3), occ_scale="raw")
        assert feats.node_features[0, 3] == 6.0

    def test_unknown_occ_scale_rejected(self):
        table = small_table()
        with pytest.raises(UsageError):
            featurize(star_query(), table, occ_map({}), np.zeros(3),
                      occ_scale="sqrt")

    def test_variable_row_id_then_ones(self):
        table = small_table()
        q = QueryGraph((pattern(var("x"), bound(iri("urn:p")), var("y")),))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        np.testing.assert_array_equal(feats.node_features[1],
                                      [2.0, 1.0, 1.0, 1.0])

    def test_unseen_atom_fixed_vector_and_zero_occ(self):
        table = small_table()
        r = np.array([0.25, -0.5, 0.125])
        qa = QueryGraph((pattern(bound(iri("urn:z")), bound(iri("urn:p")),
                                 var("x")),))
        qb = QueryGraph((pattern(var("x"), bound(iri("urn:q")),
                                 bound(iri("urn:z"))),))
        fa = featurize(qa, table, occ_map({"urn:z": 9}), r)
        fb = featurize(qb, table, occ_map({"urn:z": 9}), r)
        np.testing.assert_array_equal(fa.node_features[0],
                                      np.concatenate([r, [0.0]]))
        # The stand-in is shared verbatim across queries.
        np.testing.assert_array_equal(fa.node_features[0], fb.node_features[1])
        assert fa.unseen_atoms == (iri("urn:z"),)

    def test_repeated_unseen_atom_recorded_once(self):
        table = small_table()
        q = QueryGraph((
            pattern(bound(iri("urn:z")), bound(iri("urn:p")), var("x")),
            pattern(bound(iri("urn:z")), bound(iri("urn:q")), var("y")),
        ))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        assert feats.unseen_atoms == (iri("urn:z"),)

    def test_unseen_vector_shape_mismatch(self):
        table = small_table()
        with pytest.raises(ConfigMismatchError):
            featurize(star_query(), table, occ_map({}), np.zeros(4))

    def test_all_entries_finite(self):
        table = small_table()
        occ = occ_map({"urn:a": 1e7, "urn:p": 3})
        feats = featurize(star_query(), table, occ, np.zeros(3))
        assert np.isfinite(feats.node_features).all()
        assert np.isfinite(feats.edge_features).all()


class TestGraphStructure:
    def test_counts_and_edge_alignment(self):
        table = small_table()
        q = star_query()
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        assert feats.n_nodes == 3  # a, ?x, ?y
        assert feats.n_edges == 2
        assert feats.dim == 4
        # Edge k keeps pattern k's direction: subject -> object.
        assert feats.edge_list == [(0, 1), (0, 2)]

    def test_node_order_first_occurrence(self):
        table = small_table()
        q = QueryGraph((
            pattern(var("x"), bound(iri("urn:p")), bound(iri("urn:a"))),
            pattern(bound(iri("urn:a")), bound(iri("urn:q")), var("y")),
        ))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        assert feats.node_order == (var("x"), bound(iri("urn:a")), var("y"))

    def test_reversing_a_pattern_swaps_only_that_edge(self):
        table = small_table()
        occ = occ_map({"urn:a": 2, "urn:b": 3, "urn:p": 4})
        fwd = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                  var("x")),
                          pattern(var("x"), bound(iri("urn:q")),
                                  bound(iri("urn:b")))))
        rev = QueryGraph((pattern(var("x"), bound(iri("urn:p")),
                                  bound(iri("urn:a"))),
                          pattern(var("x"), bound(iri("urn:q")),
                                  bound(iri("urn:b")))))
        ff = featurize(fwd, table, occ, np.zeros(3))
        fr = featurize(rev, table, occ, np.zeros(3))
        assert ff.edge_list[0] == (ff.node_order.index(bound(iri("urn:a"))),
                                   ff.node_order.index(var("x")))
        assert fr.edge_list[0] == (fr.node_order.index(var("x")),
                                   fr.node_order.index(bound(iri("urn:a"))))
        np.testing.assert_array_equal(ff.edge_features, fr.edge_features)
        rows_f = {tuple(r) for r in ff.node_features}
        rows_r = {tuple(r) for r in fr.node_features}
        assert rows_f == rows_r

    def test_parallel_duplicate_patterns_kept(self):
        table = small_table()
        tp = pattern(bound(iri("urn:a")), bound(iri("urn:p")), var("x"))
        feats = featurize(QueryGraph((tp, tp)), table, occ_map({}),
                          np.zeros(3))
        assert feats.n_edges == 2
        assert feats.edge_list == [(0, 1), (0, 1)]
        np.testing.assert_array_equal(feats.edge_features[0],
                                      feats.edge_features[1])

    def test_bound_predicate_featurized_like_nodes(self):
        table = small_table()
        occ = occ_map({"urn:p": 5})
        q = QueryGraph((pattern(var("x"), bound(iri("urn:p")), var("y")),))
        feats = featurize(q, table, occ, np.zeros(3))
        np.testing.assert_allclose(feats.edge_features[0, :3],
                                   table.lookup(iri("urn:p")))
        assert feats.edge_features[0, 3] == pytest.approx(np.log1p(5.0))

    def test_variable_predicate_gets_var_row(self):
        table = small_table()
        q = QueryGraph((pattern(var("x"), var("p"), bound(iri("urn:a"))),))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        np.testing.assert_array_equal(feats.edge_features[0],
                                      [2.0, 1.0, 1.0, 1.0])

    def test_same_variable_shares_row_distinct_vars_distinct_ids(self):
        table = small_table()
        q = QueryGraph((
            pattern(var("x"), bound(iri("urn:p")), var("y")),
            pattern(var("y"), bound(iri("urn:q")), var("x")),
        ))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        x_rows = [feats.node_features[i] for i, qa in
                  enumerate(feats.node_order) if qa == var("x")]
        assert len(x_rows) == 1  # one node per variable
        ids = {feats.node_features[i, 0] for i in range(feats.n_nodes)}
        assert ids == {1.0, 2.0}


class TestVariableIds:
    def test_first_occurrence_ids_without_rng(self):
        table = small_table()
        q = QueryGraph((
            pattern(var("b"), bound(iri("urn:p")), var("a")),
            pattern(var("a"), bound(iri("urn:q")), var("c")),
        ))
        feats = featurize(q, table, occ_map({}), np.zeros(3))
        assert feats.var_ids == {"b": 1, "a": 2, "c": 3}

    def test_rng_draws_permutation_of_ids(self):
        table = small_table()
        q = QueryGraph((
            pattern(var("x"), bound(iri("urn:p")), var("y")),
            pattern(var("y"), bound(iri("urn:q")), var("z")),
        ))
        seen = set()
        for seed in range(20):
            feats = featurize(q, table, occ_map({}), np.zeros(3),
                              rng=np.random.default_rng(seed))
            assert sorted(feats.var_ids.values()) == [1, 2, 3]
            seen.add(tuple(feats.var_ids[v] for v in ("x", "y", "z")))
        assert len(seen) > 1  # ids actually shuffle across draws

    def test_same_seed_same_featurization(self):
        table = small_table()
        q = star_query()
        a = featurize(q, table, occ_map({}), np.zeros(3),
                      rng=np.random.default_rng(11))
        b = featurize(q, table, occ_map({}), np.zeros(3),
                      rng=np.random.default_rng(11))
        np.testing.assert_array_equal(a.node_features, b.node_features)
        assert a.var_ids == b.var_ids


def binary_store():
    # Ids are dense in first-seen order: a=0, p=1, b=2, c=3, q=4, d=5.
    return TripleStore.from_triples([
        Triple(iri("urn:a"), iri("urn:p"), iri("urn:b")),
        Triple(iri("urn:c"), iri("urn:q"), iri("urn:d")),
    ])


class TestBinaryIds:
    def test_id_five_lsb_first(self):
        store = binary_store()
        q = QueryGraph((pattern(var("x"), bound(iri("urn:q")),
                                bound(iri("urn:d"))),))
        feats = featurize_binary(q, store, id_width=8)
        row = feats.node_features[1]
        np.testing.assert_array_equal(row[:8], [1, 0, 1, 0, 0, 0, 0, 0])
        assert row[8] == pytest.approx(np.log1p(store.occ(iri("urn:d"))))

    def test_id_zero_all_zero_prefix(self):
        store = binary_store()
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize_binary(q, store, id_width=8)
        row = feats.node_features[0]
        np.testing.assert_array_equal(row[:8], np.zeros(8))
        assert row[8] > 0.0  # occurrence still distinguishes it from unknowns

    def test_distinct_atoms_distinct_prefixes(self):
        store = binary_store()
        q = QueryGraph((
            pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                    bound(iri("urn:b"))),
            pattern(bound(iri("urn:b")), var("p2"), bound(iri("urn:d"))),
        ))
        feats = featurize_binary(q, store, id_width=8)
        prefixes = {tuple(feats.node_features[i, :8])
                    for i in range(feats.n_nodes)
                    if not feats.node_order[i].is_var}
        assert len(prefixes) == 3

    def test_unknown_atom_all_zero_row(self):
        store = binary_store()
        q = QueryGraph((pattern(bound(iri("urn:missing")),
                                bound(iri("urn:p")), var("x")),))
        feats = featurize_binary(q, store, id_width=8)
        np.testing.assert_array_equal(feats.node_features[0], np.zeros(9))
        assert feats.unseen_atoms == (iri("urn:missing"),)

    def test_width_must_cover_store(self):
        store = binary_store()  # 6 atoms
        with pytest.raises(UsageError):
            featurize_binary(star_query(), store, id_width=2)

    def test_width_exactly_sufficient_allowed(self):
        store = TripleStore.from_triples([
            Triple(iri("urn:a"), iri("urn:p"), iri("urn:b")),
            Triple(iri("urn:a"), iri("urn:p"), iri("urn:c")),  # 4 atoms
        ])
        q = QueryGraph((pattern(bound(iri("urn:c")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize_binary(q, store, id_width=2)
        np.testing.assert_array_equal(feats.node_features[0, :2], [1, 1])

    def test_width_floor(self):
        with pytest.raises(UsageError):
            featurize_binary(star_query(), binary_store(), id_width=0)

    def test_default_width_and_dim(self):
        store = binary_store()
        feats = featurize_binary(star_query(), store)
        assert feats.dim == DEFAULT_ID_WIDTH + 1

    def test_variables_encoded_as_in_embedding_arm(self):
        store = binary_store()
        q = QueryGraph((pattern(var("x"), bound(iri("urn:p")), var("y")),))
        feats = featurize_binary(q, store, id_width=4)
        np.testing.assert_array_equal(feats.node_features[0],
                                      [1.0, 1.0, 1.0, 1.0, 1.0])
        np.testing.assert_array_equal(feats.node_features[1],
                                      [2.0, 1.0, 1.0, 1.0, 1.0])

    def test_custom_occ_function(self):
        store = binary_store()
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize_binary(q, store, occ=lambda a: 0.0, id_width=8)
        assert feats.node_features[0, 8] == 0.0


class TestFactoriesAndMasking:
    def test_embedding_factory_matches_direct_call(self):
        table = small_table()
        occ = occ_map({"urn:a": 3, "urn:p": 1, "urn:q": 2})
        r = np.full(3, 0.1)
        fn = embedding_featurizer(table, occ, r)
        q = star_query()
        direct = featurize(q, table, occ, r)
        via = fn(q)
        np.testing.assert_array_equal(via.node_features, direct.node_features)
        np.testing.assert_array_equal(via.edge_features, direct.edge_features)

    def test_binary_factory_matches_direct_call(self):
        store = binary_store()
        fn = binary_featurizer(store, id_width=8)
        q = star_query()
        direct = featurize_binary(q, store, id_width=8)
        via = fn(q)
        np.testing.assert_array_equal(via.node_features, direct.node_features)

    def test_factory_threads_rng(self):
        table = small_table()
        fn = embedding_featurizer(table, occ_map({}), np.zeros(3))
        q = QueryGraph((
            pattern(var("x"), bound(iri("urn:p")), var("y")),
            pattern(var("y"), bound(iri("urn:q")), var("z")),
        ))
        a = fn(q, np.random.default_rng(3))
        b = fn(q, np.random.default_rng(3))
        assert a.var_ids == b.var_ids

    def test_masked_occ_hides_selected_atoms(self):
        base = occ_map({"urn:a": 5, "urn:b": 7})
        fn = masked_occ(base, [iri("urn:a")])
        assert fn(iri("urn:a")) == 0.0
        assert fn(iri("urn:b")) == 7.0

    def test_masked_occ_in_featurization(self):
        table = small_table()
        occ = masked_occ(occ_map({"urn:a": 5}), [iri("urn:a")])
        q = QueryGraph((pattern(bound(iri("urn:a")), bound(iri("urn:p")),
                                var("x")),))
        feats = featurize(q, table, occ, np.zeros(3))
        assert feats.node_features[0, 3] == 0.0
