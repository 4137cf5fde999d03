"""Turning query graphs into numeric node/edge tensors.

Every subject/object position of a query becomes a node; every triple
pattern becomes a directed edge carrying the featurized predicate. Bound
atoms are encoded as their embedding (or a binary rendering of their store
id in the ablation variant) concatenated with an occurrence feature.
Variables are encoded as their integer id followed by all-ones filler, so
two occurrences of the same variable share a representation while distinct
variables stay distinguishable.

Variable ids are a fresh random permutation when an RNG is supplied (train
time, so the model cannot memorize ids) and first-occurrence order otherwise
(predict time, deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigMismatchError, UsageError
from .kg import Atom, TripleStore
from .queries import QueryAtom, QueryGraph

OCC_SCALES = ("log1p", "raw")

#: Width of the id word in the binary-id encoding.
DEFAULT_ID_WIDTH = 100

OccFn = Callable[[Atom], float]
Featurizer = Callable[[QueryGraph, np.random.Generator | None], "QueryFeaturization"]


@dataclass(frozen=True, slots=True)
class QueryFeaturization:
    """Tensors for one query.

    edge k corresponds to pattern k and runs from node ``edge_index[0, k]``
    (subject) to node ``edge_index[1, k]`` (object). ``node_order`` maps each
    node index back to its QueryAtom; ``unseen_atoms`` lists bound atoms that
    had to fall back to the unknown-atom vector.
    """

    node_features: np.ndarray
    edge_index: np.ndarray
    edge_features: np.ndarray
    node_order: tuple[QueryAtom, ...]
    var_ids: dict[str, int]
    unseen_atoms: tuple[Atom, ...]

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_index.shape[1]

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_list(self) -> list[tuple[int, int]]:
        return [(int(s), int(d)) for s, d in self.edge_index.T]


def _occ_feature(value: float, occ_scale: str) -> float:
    if occ_scale == "log1p":
        return float(np.log1p(value))
    return float(value)


def _assign_var_ids(q: QueryGraph,
                    rng: np.random.Generator | None) -> dict[str, int]:
    names = q.variables()
    if rng is None:
        return {name: i + 1 for i, name in enumerate(names)}
    perm = rng.permutation(len(names))
    return {name: int(perm[i]) + 1 for i, name in enumerate(names)}

def _var_row(var_id: int, dim: int) -> np.ndarray:
    row = np.ones(dim, dtype=np.float64)
    row[0] = float(var_id)
    return row


def _featurize_graph(q: QueryGraph, dim: int,
                     encode_bound: Callable[[Atom], np.ndarray | None],
                     fallback_row: np.ndarray,
                     rng: np.random.Generator | None) -> QueryFeaturization:
    var_ids = _assign_var_ids(q, rng)
    unseen: list[Atom] = []
    encoded: dict[QueryAtom, np.ndarray] = {}

    def encode(qa: QueryAtom) -> np.ndarray:
        row = encoded.get(qa)
        if row is not None:
            return row
        if qa.is_var:
            row = _var_row(var_ids[qa.var], dim)
        else:
            row = encode_bound(qa.atom)
            if row is None:
                row = fallback_row
                unseen.append(qa.atom)
        encoded[qa] = row
        return row

    node_index: dict[QueryAtom, int] = {}
    node_rows: list[np.ndarray] = []
    node_atoms: list[QueryAtom] = []

    def node_of(qa: QueryAtom) -> int:
        i = node_index.get(qa)
        if i is None:
            i = len(node_rows)
            node_index[qa] = i
            node_rows.append(encode(qa))
            node_atoms.append(qa)
        return i

    src: list[int] = []
    dst: list[int] = []
    edge_rows: list[np.ndarray] = []
    for p in q.patterns:
        src.append(node_of(p.s))
        dst.append(node_of(p.o))
        edge_rows.append(encode(p.p))

    return QueryFeaturization(
        node_features=np.vstack(node_rows),
        edge_index=np.asarray([src, dst], dtype=np.int64),
        edge_features=np.vstack(edge_rows),
        node_order=tuple(node_atoms),
        var_ids=var_ids,
        unseen_atoms=tuple(unseen),
    )


def featurize(q: QueryGraph, table, occ: OccFn,
              unseen_vector: np.ndarray,
              rng: np.random.Generator | None = None,
              occ_scale: str = "log1p") -> QueryFeaturization:
    """Featurize against an embedding table.

    Known bound atoms encode as embedding + occurrence feature; atoms absent
    from the table get ``unseen_vector`` with a zero occurrence slot (one
    shared vector, so unknowns are indistinguishable from each other). The
    feature width is ``table.dim + 1``.
    """
    if occ_scale not in OCC_SCALES:
        raise UsageError(f"occ_scale must be one of {OCC_SCALES}")
    dim = table.dim + 1
    if unseen_vector.shape != (table.dim,):
        raise ConfigMismatchError(
            f"unseen vector has shape {unseen_vector.shape}, "
            f"expected ({table.dim},)")

    fallback = np.empty(dim, dtype=np.float64)
    fallback[:-1] = unseen_vector
    fallback[-1] = 0.0

    def encode_bound(a: Atom) -> np.ndarray | None:
        vec = table.lookup(a)
        if vec is None:
            return None
        row = np.empty(dim, dtype=np.float64)
        row[:-1] = vec
        row[-1] = _occ_feature(occ(a), occ_scale)
        return row

    return _featurize_graph(q, dim, encode_bound, fallback, rng)


def featurize_binary(q: QueryGraph, store: TripleStore,
                     occ: OccFn | None = None,
                     id_width: int = DEFAULT_ID_WIDTH,
                     rng: np.random.Generator | None = None,
                     occ_scale: str = "log1p") -> QueryFeaturization:
    """Featurize with binary-coded atom ids instead of embeddings.

    Each bound atom encodes as the bits of its store id, least significant
    first, zero padded to ``id_width``, then the occurrence feature. Atoms
    missing from the store get an all-zero row (colliding with id 0, which
    is acceptable for an ablation arm). The feature width is ``id_width + 1``.
    """
    if occ_scale not in OCC_SCALES:
        raise UsageError(f"occ_scale must be one of {OCC_SCALES}")
    if id_width < 1:
        raise UsageError("id_width must be >= 1")
    if store.n_atoms > (1 << id_width):
        raise UsageError("id_width too small for this store")
    occ_fn = occ if occ is not None else store.occ
    dim = id_width + 1

    def encode_bound(a: Atom) -> np.ndarray | None:
        atom_id = store.id_of(a)
        if atom_id is None:
            return None
        row = np.zeros(dim, dtype=np.float64)
        word = atom_id
        bit = 0
        while word:
            row[bit] = float(word & 1)
            word >>= 1
            bit += 1
        row[-1] = _occ_feature(occ_fn(a), occ_scale)
        return row

    return _featurize_graph(q, dim, encode_bound,
                            np.zeros(dim, dtype=np.float64), rng)


def embedding_featurizer(table, occ: OccFn, unseen_vector: np.ndarray,
                         occ_scale: str = "log1p") -> Featurizer:
    """Bind the embedding-table arguments into a (query, rng) callable."""
    def fn(q: QueryGraph, rng: np.random.Generator | None = None):
        return featurize(q, table, occ, unseen_vector, rng=rng,
                         occ_scale=occ_scale)
    return fn


def binary_featurizer(store: TripleStore, occ: OccFn | None = None,
                      id_width: int = DEFAULT_ID_WIDTH,
                      occ_scale: str = "log1p") -> Featurizer:
    """Bind the binary-id arguments into a (query, rng) callable."""
    def fn(q: QueryGraph, rng: np.random.Generator | None = None):
        return featurize_binary(q, store, occ=occ, id_width=id_width,
                                rng=rng, occ_scale=occ_scale)
    return fn


def masked_occ(occ: OccFn, hidden: Sequence[Atom] | frozenset[Atom]) -> OccFn:
    """An occurrence function that reports 0 for hidden atoms."""
    hidden_set = frozenset(hidden)

    def fn(a: Atom) -> float:
        return 0.0 if a in hidden_set else occ(a)
    return fn
