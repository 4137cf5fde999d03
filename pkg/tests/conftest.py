"""Shared fixtures: random stores and random connected queries.

The store factory draws triples over a small IRI universe so exhaustive
oracles stay tractable; the query factory grows connected queries out of
actual store triples, so sampled queries always have at least one solution.
"""

import numpy as np
import pytest

from gnce.kg import Triple, TripleStore, iri
from gnce.queries import QueryAtom, QueryGraph, TriplePattern


def pytest_configure(config):
    config.criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


def make_store(n_triples: int = 200, seed: int = 0,
               n_entities: int | None = None,
               n_predicates: int | None = None) -> TripleStore:
    rng = np.random.default_rng(seed)
    if n_entities is None:
        n_entities = max(4, min(70, n_triples // 3))
    if n_predicates is None:
        n_predicates = max(2, min(8, n_triples // 40))
    capacity = n_entities * n_predicates * n_entities
    n_triples = min(n_triples, capacity)
    seen: set[tuple[int, int, int]] = set()
    triples: list[Triple] = []
    while len(triples) < n_triples:
        key = (int(rng.integers(n_entities)), int(rng.integers(n_predicates)),
               int(rng.integers(n_entities)))
        if key in seen:
            continue
        seen.add(key)
        s, p, o = key
        triples.append(Triple(iri(f"urn:e{s}"), iri(f"urn:p{p}"),
                              iri(f"urn:e{o}")))
    return TripleStore.from_triples(triples)


def random_connected_query(store: TripleStore, rng: np.random.Generator,
                           n_patterns: int, max_vars: int = 4,
                           p_var: float = 0.6,
                           p_var_predicate: float = 0.1) -> QueryGraph:
    """Grow a connected query from store triples; >= 1 solution guaranteed."""
    triples = list(store.triples())
    base = [triples[int(rng.integers(len(triples)))]]
    nodes = {base[0].s, base[0].o}
    attempts = 0
    while len(base) < n_patterns and attempts < 400:
        attempts += 1
        t = triples[int(rng.integers(len(triples)))]
        if t.s in nodes or t.o in nodes:
            base.append(t)
            nodes.update((t.s, t.o))

    var_map: dict = {}
    node_list = sorted(nodes, key=lambda a: a.value)
    order = rng.permutation(len(node_list))
    for idx in order:
        if len(var_map) >= max_vars:
            break
        if rng.random() < p_var:
            var_map[node_list[idx]] = f"v{len(var_map)}"
    if not var_map:
        var_map[node_list[int(order[0])]] = "v0"

    def node(a):
        return (QueryAtom.variable(var_map[a]) if a in var_map
                else QueryAtom.bound(a))

    patterns = []
    for t in base:
        p = QueryAtom.bound(t.p)
        if (rng.random() < p_var_predicate
                and len(var_map) < max_vars):
            name = f"v{len(var_map)}"
            var_map[t.p] = name
            p = QueryAtom.variable(name)
        elif t.p in var_map:
            p = QueryAtom.variable(var_map[t.p])
        patterns.append(TriplePattern(node(t.s), p, node(t.o)))
    return QueryGraph(tuple(patterns))


@pytest.fixture
def rng_store():
    def make(n_triples: int = 200, seed: int = 0,
             n_entities: int | None = None, n_predicates: int | None = None):
        store = make_store(n_triples, seed, n_entities, n_predicates)
        return store, np.random.default_rng(seed + 1)
    return make
