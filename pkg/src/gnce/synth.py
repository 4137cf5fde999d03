"""Synthetic knowledge-graph generators for demos and experiments."""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .kg import Triple, TripleStore, iri
from .seeding import STAGE_DEMO_KG, rng_for

ENTITY_NS = "http://example.org/e"
PREDICATE_NS = "http://example.org/p"


def _ranked_cdf(n: int, exponent: float) -> np.ndarray:
    weights = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    cdf = np.cumsum(weights)
    return cdf / cdf[-1]


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def generate_zipf_kg(n_triples: int, n_entities: int, n_predicates: int,
                     seed: int = 0, exponent: float = 1.05, blocks: int = 4,
                     intra_block_prob: float = 0.85) -> TripleStore:
    """A Zipf-skewed random KG.

    Subjects and predicates are drawn rank-skewed, so a few hub entities carry
    many outgoing edges (which star sampling needs) and predicate usage is
    uneven. Entities are partitioned into ``blocks`` contiguous groups and
    objects are drawn from the subject's group with probability
    ``intra_block_prob``, giving the graph neighborhood structure; pass
    ``blocks=1`` for a structureless Zipf graph.
    """
    if n_entities < 2 or n_predicates < 1 or n_triples < 1:
        raise UsageError("need at least 2 entities, 1 predicate, 1 triple")
    if blocks < 1 or blocks > n_entities:
        raise UsageError("blocks must be in [1, n_entities]")
    rng = rng_for(seed, STAGE_DEMO_KG)

    entities = [iri(f"{ENTITY_NS}{i}") for i in range(n_entities)]
    predicates = [iri(f"{PREDICATE_NS}{j}") for j in range(n_predicates)]
    block_of = [i * blocks // n_entities for i in range(n_entities)]
    block_members: list[list[int]] = [[] for _ in range(blocks)]
    for i, b in enumerate(block_of):
        block_members[b].append(i)

    ent_cdf = _ranked_cdf(n_entities, exponent)
    pred_cdf = _ranked_cdf(n_predicates, exponent)
    block_cdfs = [_ranked_cdf(len(m), exponent) for m in block_members]

    seen: set[tuple[int, int, int]] = set()
    triples: list[Triple] = []
    attempts = 0
    max_attempts = 30 * n_triples
    while len(triples) < n_triples and attempts < max_attempts:
        attempts += 1
        s = _draw(ent_cdf, rng)
        p = _draw(pred_cdf, rng)
        if blocks > 1 and rng.random() < intra_block_prob:
            members = block_members[block_of[s]]
            o = members[_draw(block_cdfs[block_of[s]], rng)]
        else:
            o = _draw(ent_cdf, rng)
        if o == s:
            continue
        key = (s, p, o)
        if key in seen:
            continue
        seen.add(key)
        triples.append(Triple(entities[s], predicates[p], entities[o]))
    if len(triples) < n_triples:
        raise UsageError(
            f"could not generate {n_triples} distinct triples from "
            f"{n_entities} entities x {n_predicates} predicates")
    return TripleStore.from_triples(triples)


def two_community_kg(n_per_community: int = 40, n_predicates: int = 4,
                     edges_per_community: int = 200, cross_edges: int = 2,
                     seed: int = 0) -> tuple[TripleStore, list, list]:
    """Two dense entity communities joined by a handful of cross edges.

    Returns (store, community_a_atoms, community_b_atoms). Random walks
    rarely cross between communities, so embeddings trained on them should
    place same-community entities closer together than cross-community ones.
    """
    rng = rng_for(seed, STAGE_DEMO_KG, 2)
    a = [iri(f"{ENTITY_NS}a{i}") for i in range(n_per_community)]
    b = [iri(f"{ENTITY_NS}b{i}") for i in range(n_per_community)]
    predicates = [iri(f"{PREDICATE_NS}{j}") for j in range(n_predicates)]

    seen: set[tuple[str, int, str]] = set()
    triples: list[Triple] = []

    def add_edges(members: list, count: int) -> None:
        guard = 0
        added = 0
        while added < count and guard < 50 * count:
            guard += 1
            s = int(rng.integers(len(members)))
            o = int(rng.integers(len(members)))
            p = int(rng.integers(n_predicates))
            if s == o:
                continue
            key = (members[s].value, p, members[o].value)
            if key in seen:
                continue
            seen.add(key)
            triples.append(Triple(members[s], predicates[p], members[o]))
            added += 1

    add_edges(a, edges_per_community)
    add_edges(b, edges_per_community)
    for k in range(cross_edges):
        s = a[int(rng.integers(len(a)))]
        o = b[int(rng.integers(len(b)))]
        triples.append(Triple(s, predicates[k % n_predicates], o))
    return TripleStore.from_triples(triples), a, b
