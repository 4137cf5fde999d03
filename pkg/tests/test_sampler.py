"""Workload sampling: shape structure, binding policy, dedup, determinism."""

import numpy as np
import pytest

from gnce.errors import SamplingExhausted, UsageError
from gnce.kg import TripleStore, parse_ntriples
from gnce.matcher import count_solutions
from gnce.queries import QueryGraph, canonical_form
from gnce.sampler import (SamplerConfig, build_workload, sample_flower,
                          sample_path, sample_snowflake, sample_star)
from conftest import make_store

STAR3 = "<urn:a> <urn:p> <urn:b> .\n<urn:a> <urn:q> <urn:c> .\n<urn:a> <urn:r> <urn:d> .\n"
CHAIN2 = "<urn:a> <urn:p> <urn:b> .\n<urn:b> <urn:q> <urn:c> .\n"


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def star_subject_var(q: QueryGraph) -> str:
    subjects = {tp.s.var for tp in q.patterns}
    assert len(subjects) == 1, "star must share one subject variable"
    (name,) = subjects
    assert name is not None
    return name


def is_directed_chain(q: QueryGraph) -> bool:
    for left, right in zip(q.patterns, q.patterns[1:]):
        lo, rs = left.o, right.s
        if lo.is_var != rs.is_var:
            return False
        if lo.is_var and lo.var != rs.var:
            return False
        if not lo.is_var and lo.atom != rs.atom:
            return False
    return True


class TestStar:
    def test_all_objects_variable(self):
        store = parse_ntriples(STAR3)
        q = sample_star(store, 2, rng(), p_var_object=1.0)
        assert len(q.patterns) == 2
        star_subject_var(q)
        assert all(tp.o.is_var for tp in q.patterns)
        assert all(not tp.p.is_var for tp in q.patterns)

    def test_all_objects_bound(self):
        store = parse_ntriples(STAR3)
        q = sample_star(store, 2, rng(1), p_var_object=0.0)
        star_subject_var(q)
        assert all(not tp.o.is_var for tp in q.patterns)
        # objects come from the subject's real out-triples
        objects = {tp.o.atom.value for tp in q.patterns}
        assert objects <= {"urn:b", "urn:c", "urn:d"}

    def test_infeasible_size_exhausts(self):
        store = parse_ntriples(STAR3)
        with pytest.raises(SamplingExhausted):
            sample_star(store, 4, rng(), p_var_object=0.5)

    def test_patterns_are_distinct_out_triples(self):
        store = make_store(n_triples=300, seed=6)
        for seed in range(10):
            q = sample_star(store, 3, rng(seed), p_var_object=0.0)
            rows = {(tp.p.atom, tp.o.atom) for tp in q.patterns}
            assert len(rows) == 3


class TestPath:
    def test_two_hop_chain_shape(self):
        store = parse_ntriples(CHAIN2)
        q = sample_path(store, 2, rng(3), p_var_subject=1.0,
                        p_var_object=1.0, p_var_predicate=0.0)
        assert len(q.patterns) == 2
        assert is_directed_chain(q)
        assert q.patterns[0].s.is_var and q.patterns[-1].o.is_var
        assert q.patterns[0].o.is_var  # interior joins always variables

    def test_endpoints_bound_when_probability_zero(self):
        store = parse_ntriples(CHAIN2)
        q = sample_path(store, 2, rng(5), p_var_subject=0.0, p_var_object=0.0,
                        p_var_predicate=0.0)
        assert q.patterns[0].s.atom.value == "urn:a"
        assert q.patterns[-1].o.atom.value == "urn:c"
        assert q.patterns[0].o.is_var

    def test_infeasible_length_exhausts(self):
        store = parse_ntriples(CHAIN2)
        with pytest.raises(SamplingExhausted):
            sample_path(store, 3, rng(), p_var_subject=0.5,
                        p_var_object=0.5, p_var_predicate=0.0)

    def test_no_repeated_nodes_along_walk(self):
        store = make_store(n_triples=400, seed=9)
        for seed in range(20):
            try:
                q = sample_path(store, 3, rng(seed), 1.0, 1.0, 0.0)
            except SamplingExhausted:
                continue
            names = [q.patterns[0].s.var]
            names += [tp.o.var for tp in q.patterns]
            assert len(set(names)) == len(names)


class TestComposites:
    def test_flower_is_star_plus_path(self):
        store = make_store(n_triples=500, seed=12)
        q = sample_flower(store, 3, rng(2), p_var_object=1.0,
                          p_var_predicate=0.0)
        assert len(q.patterns) == 3
        # one shared subject variable with out-degree >= 2 (the star core)
        subjects = [tp.s.var for tp in q.patterns if tp.s.is_var]
        core = max(set(subjects), key=subjects.count)
        assert subjects.count(core) >= 2

    def test_snowflake_has_two_hubs(self):
        store = make_store(n_triples=800, seed=4)
        q = sample_snowflake(store, 5, rng(6), p_var_object=1.0,
                             p_var_predicate=0.0)
        assert len(q.patterns) == 5
        subjects = [tp.s.var for tp in q.patterns if tp.s.is_var]
        hubs = {name for name in set(subjects) if subjects.count(name) >= 2}
        assert len(hubs) >= 2

    def test_size_floors(self):
        with pytest.raises(UsageError):
            SamplerConfig(shape="flower", sizes=(2,))
        with pytest.raises(UsageError):
            SamplerConfig(shape="snowflake", sizes=(4,))


class TestBuildWorkload:
    def test_emitted_cardinalities_are_exact_and_positive(self):
        store = make_store(n_triples=600, seed=20)
        config = SamplerConfig(shape="star", sizes=(2, 3), count_per_size=25,
                               seed=3)
        queries, report = build_workload(store, config)
        assert queries
        for q in queries:
            assert q.true_cardinality is not None and q.true_cardinality >= 1
            res = count_solutions(store, q)
            assert res.exact and res.value == q.true_cardinality
            assert q.shape_tag == "star"

    def test_no_duplicate_canonical_keys(self):
        store = make_store(n_triples=600, seed=21)
        config = SamplerConfig(shape="path", sizes=(2,), count_per_size=40,
                               seed=9)
        queries, _ = build_workload(store, config)
        keys = [canonical_form(q) for q in queries]
        assert len(set(keys)) == len(keys)

    def test_fixed_seed_reproduces_corpus(self):
        store = make_store(n_triples=500, seed=22)
        config = SamplerConfig(shape="star", sizes=(2, 3), count_per_size=15,
                               seed=77)
        first, _ = build_workload(store, config)
        second, _ = build_workload(store, config)
        assert first == second

    def test_max_cardinality_respected(self):
        store = make_store(n_triples=700, seed=23)
        config = SamplerConfig(shape="star", sizes=(2,), count_per_size=30,
                               max_cardinality=10, seed=5)
        queries, report = build_workload(store, config)
        for q in queries:
            assert q.true_cardinality <= 10

    def test_seen_keys_deduplicate_across_calls(self):
        store = make_store(n_triples=500, seed=24)
        seen: set[bytes] = set()
        a, _ = build_workload(store, SamplerConfig(shape="star", sizes=(2,),
                                                   count_per_size=20, seed=1),
                              seen_keys=seen)
        b, _ = build_workload(store, SamplerConfig(shape="star", sizes=(2,),
                                                   count_per_size=20, seed=2),
                              seen_keys=seen)
        keys = [canonical_form(q) for q in a + b]
        assert len(set(keys)) == len(keys)

    def test_report_accounts_for_attempts(self):
        store = make_store(n_triples=400, seed=25)
        config = SamplerConfig(shape="star", sizes=(2,), count_per_size=10,
                               seed=3)
        queries, report = build_workload(store, config)
        assert report.emitted[("star", 2)] == len(queries)
        assert report.attempts[("star", 2)] >= len(queries)

    def test_per_size_streams_independent(self):
        # adding a size must not change what an existing size produces
        store = make_store(n_triples=500, seed=26)
        one, _ = build_workload(store, SamplerConfig(
            shape="star", sizes=(2,), count_per_size=10, seed=11))
        both, _ = build_workload(store, SamplerConfig(
            shape="star", sizes=(2, 3), count_per_size=10, seed=11))
        assert both[:len(one)] == one


class TestConfigValidation:
    def test_probability_bounds(self):
        with pytest.raises(UsageError):
            SamplerConfig(p_var_object=1.5)

    def test_unknown_shape(self):
        with pytest.raises(UsageError):
            SamplerConfig(shape="cycle")

    def test_sizes_floor(self):
        with pytest.raises(UsageError):
            SamplerConfig(sizes=(1,))
        with pytest.raises(UsageError):
            SamplerConfig(sizes=())
