"""Query-workload sampling from a triple store.

Queries are sampled as instantiated subgraphs and then partially
variabilized, so every emitted query has at least one solution (the subgraph
it came from). Four shapes are supported:

* star: one subject joined to ``size`` of its outgoing triples,
* path: a directed simple walk of ``size`` triples,
* flower (size >= 3): a star and a path sharing the star's subject,
* snowflake (size >= 5): a path with a star attached at each end.

Binding policy: join nodes (star centers, path interiors) are always
variables; other endpoints become variables with the configured
probabilities; predicates stay bound unless ``p_var_predicate`` is raised.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingExhausted, UsageError
from .kg import TripleStore
from .matcher import count_solutions
from .queries import (QueryAtom, QueryGraph, TriplePattern, canonical_form,
                      with_cardinality)
from .seeding import SHAPE_CODES, STAGE_SAMPLER, rng_for

#: Internal retry cap for walk-based shapes, per sample call.
_WALK_RETRIES = 100

#: Workload building stops for a size after this multiple of count_per_size.
_BUDGET_FACTOR = 100

#: Counting during sampling never enumerates more solutions than this.
_COUNT_CEILING = 10 ** 7

#: Per-query counting timeout (seconds) during sampling.
_COUNT_TIMEOUT = 30.0


@dataclass(frozen=True)
class SamplerConfig:
    shape: str = "star"
    sizes: tuple[int, ...] = (2, 3)
    count_per_size: int = 100
    p_var_subject: float = 0.5
    p_var_object: float = 0.5
    p_var_predicate: float = 0.0
    max_cardinality: int = 10 ** 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in SHAPE_CODES:
            raise UsageError(f"unknown shape {self.shape!r}")
        if not self.sizes or any(s < 2 for s in self.sizes):
            raise UsageError("sizes must all be >= 2")
        if self.shape == "flower" and any(s < 3 for s in self.sizes):
            raise UsageError("flower queries need size >= 3")
        if self.shape == "snowflake" and any(s < 5 for s in self.sizes):
            raise UsageError("snowflake queries need size >= 5")
        for name in ("p_var_subject", "p_var_object", "p_var_predicate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name} must be in [0, 1]")
        if self.count_per_size < 1:
            raise UsageError("count_per_size must be >= 1")
        if self.max_cardinality < 1:
            raise UsageError("max_cardinality must be >= 1")


@dataclass
class WorkloadReport:
    """Bookkeeping from one build_workload run, per (shape, size)."""

    attempts: dict[tuple[str, int], int] = field(default_factory=dict)
    emitted: dict[tuple[str, int], int] = field(default_factory=dict)
    discarded_duplicate: int = 0
    discarded_over_limit: int = 0
    discarded_inexact: int = 0
    sampling_failures: int = 0
    seconds: float = 0.0


def _node(store: TripleStore, atom_id: int, as_var: bool, name: str) -> QueryAtom:
    if as_var:
        return QueryAtom.variable(name)
    return QueryAtom.bound(store.atom(atom_id))


def _pred(store: TripleStore, atom_id: int, rng, p_var: float, name: str) -> QueryAtom:
    if p_var > 0.0 and rng.random() < p_var:
        return QueryAtom.variable(name)
    return QueryAtom.bound(store.atom(atom_id))


def _choose_distinct(rng: np.random.Generator, n: int, k: int) -> list[int]:
    if k == n:
        return list(rng.permutation(n))
    return [int(x) for x in rng.choice(n, size=k, replace=False)]


def sample_star(store: TripleStore, size: int, rng: np.random.Generator,
                p_var_object: float = 0.5, p_var_predicate: float = 0.0,
                ) -> QueryGraph:
    """A star query: ``size`` outgoing triples of one uniformly chosen subject
    (among subjects with out-degree >= size), subject replaced by a shared
    variable."""
    if size < 1:
        raise UsageError("star size must be >= 1")
    eligible = store.subjects_with_out_degree_at_least(size)
    if not eligible:
        raise SamplingExhausted(f"no subject has out-degree >= {size}")
    s_id = eligible[int(rng.integers(len(eligible)))]
    edges = store.out_edges(s_id)
    chosen = _choose_distinct(rng, len(edges), size)
    subject = QueryAtom.variable("s")
    patterns = []
    for k, idx in enumerate(chosen, start=1):
        p_id, o_id = edges[idx]
        p = _pred(store, p_id, rng, p_var_predicate, f"p{k}")
        o = _node(store, o_id, rng.random() < p_var_object, f"o{k}")
        patterns.append(TriplePattern(subject, p, o))
    return QueryGraph(tuple(patterns), shape_tag="star")


def _walk(store: TripleStore, start: int, hops: int,
          rng: np.random.Generator) -> list[tuple[int, int, int]] | None:
    """A directed simple walk of exactly ``hops`` triples, or None if stuck."""
    nodes = {start}
    cur = start
    steps: list[tuple[int, int, int]] = []
    for _ in range(hops):
        edges = store.out_edges(cur)
        if not edges:
            return None
        # sample without replacement until we leave the visited set
        order = rng.permutation(len(edges))
        nxt = None
        for idx in order:
            p_id, o_id = edges[int(idx)]
            if o_id not in nodes:
                nxt = (cur, p_id, o_id)
                break
        if nxt is None:
            return None
        steps.append(nxt)
        nodes.add(nxt[2])
        cur = nxt[2]
    return steps


def sample_path(store: TripleStore, size: int, rng: np.random.Generator,
                p_var_subject: float = 0.5, p_var_object: float = 0.5,
                p_var_predicate: float = 0.0) -> QueryGraph:
    """A path query: a directed simple walk of ``size`` triples. Interior
    nodes are always variables; the two endpoints are variabilized with the
    configured probabilities."""
    if size < 1:
        raise UsageError("path size must be >= 1")
    subjects = store.subject_ids()
    if not subjects:
        raise SamplingExhausted("store has no subjects")
    steps = None
    for _ in range(_WALK_RETRIES):
        start = subjects[int(rng.integers(len(subjects)))]
        steps = _walk(store, start, size, rng)
        if steps is not None:
            break
    if steps is None:
        raise SamplingExhausted(f"no simple path of {size} triples found")

    start_var = rng.random() < p_var_subject
    end_var = rng.random() < p_var_object
    if size == 1 and not (start_var or end_var):
        end_var = True  # a query must contain at least one variable

    node_atoms: dict[int, QueryAtom] = {}
    chain = [steps[0][0]] + [t[2] for t in steps]
    for i, node_id in enumerate(chain):
        interior = 0 < i < len(chain) - 1
        as_var = interior or (i == 0 and start_var) or (
            i == len(chain) - 1 and end_var)
        node_atoms[node_id] = _node(store, node_id, as_var, f"n{i}")
    patterns = []
    for k, (s_id, p_id, o_id) in enumerate(steps, start=1):
        p = _pred(store, p_id, rng, p_var_predicate, f"p{k}")
        patterns.append(TriplePattern(node_atoms[s_id], p, node_atoms[o_id]))
    return QueryGraph(tuple(patterns), shape_tag="path")


def _flower_split(size: int) -> tuple[int, int]:
    """(star_size, path_len) with star >= 2, path >= 1, summing to size."""
    star = 2 + (size - 3) // 2
    return star, size - star


def _snowflake_split(size: int) -> tuple[int, int, int]:
    """(star_head, path_len, star_tail): minimum 2+1+2, extras round-robin."""
    parts = [1, 2, 2]  # path, head star, tail star
    for i in range(size - 5):
        parts[i % 3] += 1
    return parts[1], parts[0], parts[2]


def _star_edges_at(store: TripleStore, center: int, count: int,
                   rng: np.random.Generator,
                   exclude: tuple[int, int] | None) -> list[tuple[int, int]] | None:
    edges = store.out_edges(center)
    pool = [e for e in edges if e != exclude] if exclude is not None else edges
    if len(pool) < count:
        return None
    return [pool[i] for i in _choose_distinct(rng, len(pool), count)]


def sample_flower(store: TripleStore, size: int, rng: np.random.Generator,
                  p_var_object: float = 0.5, p_var_predicate: float = 0.0,
                  ) -> QueryGraph:
    """A flower: star and path sharing the star's subject (>= 3 patterns)."""
    if size < 3:
        raise UsageError("flower size must be >= 3")
    star_size, path_len = _flower_split(size)
    eligible = store.subjects_with_out_degree_at_least(star_size + 1)
    if not eligible:
        raise SamplingExhausted(
            f"no subject has out-degree >= {star_size + 1} for a flower")
    for _ in range(_WALK_RETRIES):
        center = eligible[int(rng.integers(len(eligible)))]
        steps = _walk(store, center, path_len, rng)
        if steps is None:
            continue
        star_edges = _star_edges_at(store, center, star_size, rng,
                                    exclude=(steps[0][1], steps[0][2]))
        if star_edges is None:
            continue
        center_atom = QueryAtom.variable("c")
        patterns = []
        for k, (p_id, o_id) in enumerate(star_edges, start=1):
            p = _pred(store, p_id, rng, p_var_predicate, f"sp{k}")
            o = _node(store, o_id, rng.random() < p_var_object, f"so{k}")
            patterns.append(TriplePattern(center_atom, p, o))
        node_atoms = {center: center_atom}
        chain = [center] + [t[2] for t in steps]
        for i, node_id in enumerate(chain[1:], start=1):
            interior = i < len(chain) - 1
            as_var = interior or rng.random() < p_var_object
            node_atoms[node_id] = _node(store, node_id, as_var, f"n{i}")
        for k, (s_id, p_id, o_id) in enumerate(steps, start=1):
            p = _pred(store, p_id, rng, p_var_predicate, f"pp{k}")
            patterns.append(TriplePattern(node_atoms[s_id], p, node_atoms[o_id]))
        return QueryGraph(tuple(patterns), shape_tag="flower")
    raise SamplingExhausted(f"could not assemble a flower of size {size}")


def sample_snowflake(store: TripleStore, size: int, rng: np.random.Generator,
                     p_var_object: float = 0.5, p_var_predicate: float = 0.0,
                     ) -> QueryGraph:
    """A snowflake: a path with a star at each endpoint (>= 5 patterns)."""
    if size < 5:
        raise UsageError("snowflake size must be >= 5")
    head_size, path_len, tail_size = _snowflake_split(size)
    eligible = store.subjects_with_out_degree_at_least(head_size + 1)
    if not eligible:
        raise SamplingExhausted(
            f"no subject has out-degree >= {head_size + 1} for a snowflake")
    for _ in range(_WALK_RETRIES):
        head = eligible[int(rng.integers(len(eligible)))]
        steps = _walk(store, head, path_len, rng)
        if steps is None:
            continue
        tail = steps[-1][2]
        head_edges = _star_edges_at(store, head, head_size, rng,
                                    exclude=(steps[0][1], steps[0][2]))
        tail_edges = _star_edges_at(store, tail, tail_size, rng, exclude=None)
        if head_edges is None or tail_edges is None:
            continue

        node_atoms: dict[int, QueryAtom] = {}
        chain = [head] + [t[2] for t in steps]
        for i, node_id in enumerate(chain):
            # both stars' centers are join nodes, as is the path interior
            node_atoms[node_id] = QueryAtom.variable(f"n{i}")
        patterns = []
        for k, (p_id, o_id) in enumerate(head_edges, start=1):
            p = _pred(store, p_id, rng, p_var_predicate, f"hp{k}")
            o = _node(store, o_id, rng.random() < p_var_object, f"ho{k}")
            patterns.append(TriplePattern(node_atoms[head], p, o))
        for k, (s_id, p_id, o_id) in enumerate(steps, start=1):
            p = _pred(store, p_id, rng, p_var_predicate, f"pp{k}")
            patterns.append(TriplePattern(node_atoms[s_id], p, node_atoms[o_id]))
        for k, (p_id, o_id) in enumerate(tail_edges, start=1):
            p = _pred(store, p_id, rng, p_var_predicate, f"tp{k}")
            o = _node(store, o_id, rng.random() < p_var_object, f"to{k}")
            patterns.append(TriplePattern(node_atoms[tail], p, o))
        return QueryGraph(tuple(patterns), shape_tag="snowflake")
    raise SamplingExhausted(f"could not assemble a snowflake of size {size}")


def _sample(store: TripleStore, shape: str, size: int,
            rng: np.random.Generator, cfg: SamplerConfig) -> QueryGraph:
    if shape == "star":
        return sample_star(store, size, rng, cfg.p_var_object, cfg.p_var_predicate)
    if shape == "path":
        return sample_path(store, size, rng, cfg.p_var_subject,
                           cfg.p_var_object, cfg.p_var_predicate)
    if shape == "flower":
        return sample_flower(store, size, rng, cfg.p_var_object, cfg.p_var_predicate)
    if shape == "snowflake":
        return sample_snowflake(store, size, rng, cfg.p_var_object,
                                cfg.p_var_predicate)
    raise UsageError(f"unknown shape {shape!r}")


def build_workload(store: TripleStore, config: SamplerConfig,
                   seen_keys: set[bytes] | None = None,
                   ) -> tuple[list[QueryGraph], WorkloadReport]:
    """Sample a deduplicated workload with exact ground-truth cardinalities.

    For each size, sampling continues until ``count_per_size`` queries that
    are unique by canonical form have been emitted, or the retry budget
    (100x count_per_size attempts) runs out. Queries whose exact count cannot
    be established within the counting budget, or whose cardinality exceeds
    ``max_cardinality``, are discarded. Each (shape, size) pair draws from its
    own RNG stream, so output is deterministic per seed regardless of other
    sizes in the run. Pass ``seen_keys`` to deduplicate across multiple calls.
    """
    report = WorkloadReport()
    t0 = time.monotonic()
    seen = seen_keys if seen_keys is not None else set()
    out: list[QueryGraph] = []
    limit = min(_COUNT_CEILING, config.max_cardinality + 1)
    for size in config.sizes:
        key = (config.shape, size)
        rng = rng_for(config.seed, STAGE_SAMPLER, SHAPE_CODES[config.shape], size)
        budget = _BUDGET_FACTOR * config.count_per_size
        attempts = 0
        emitted = 0
        while emitted < config.count_per_size and attempts < budget:
            attempts += 1
            try:
                q = _sample(store, config.shape, size, rng, config)
            except SamplingExhausted:
                report.sampling_failures += 1
                continue
            ck = canonical_form(q)
            if ck in seen:
                report.discarded_duplicate += 1
                continue
            res = count_solutions(store, q, limit=limit, timeout=_COUNT_TIMEOUT)
            if not res.exact:
                if res.reason == "limit" and res.value > config.max_cardinality:
                    report.discarded_over_limit += 1
                else:
                    report.discarded_inexact += 1
                continue
            if res.value > config.max_cardinality:
                report.discarded_over_limit += 1
                continue
            seen.add(ck)
            out.append(with_cardinality(q, res.value))
            emitted += 1
        report.attempts[key] = attempts
        report.emitted[key] = emitted
    report.seconds = time.monotonic() - t0
    return out, report
