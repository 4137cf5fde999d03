"""Random-walk corpus generation and skip-gram embeddings.

Walks run forward along outgoing edges from each starting entity, producing
alternating node/predicate token sequences. The trainer is classic skip-gram
with negative sampling: for each (position, context) pair inside the window
it applies one positive update for the observed context and ``negatives``
negative updates with contexts drawn from the unigram^(3/4) distribution,
via plain SGD with a linearly decaying learning rate. Input vectors start
uniform in [-0.5/dim, 0.5/dim], output vectors start at zero; the input
vectors are the published embeddings.

All vector math is float32, matching the on-disk format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import EmbeddingFormatError, UsageError
from .kg import Atom, TripleStore, _LineScanner
from .seeding import STAGE_SKIPGRAM, STAGE_WALKS, rng_for

EMBEDDING_MAGIC = b"GNCEEMB1"

#: The learning rate decays linearly from ``lr`` down to this floor.
MIN_LR = 1e-4

_NOISE_POWER = 0.75


@dataclass(frozen=True, slots=True)
class Walk:
    """One random walk: atoms alternate node, predicate, node, ..."""

    atoms: tuple[Atom, ...]
    start: Atom


def generate_walks(store: TripleStore, entities: Sequence[Atom],
                   walks_per_entity: int, max_depth: int,
                   rng: np.random.Generator,
                   bidirectional: bool = False) -> list[Walk]:
    """Sample ``walks_per_entity`` forward walks of up to ``max_depth`` hops
    from each entity.

    Entities must occur in the store as subjects or objects. Each entity owns
    an RNG stream derived from (one draw off ``rng``, its atom id), so the
    walks of one entity do not depend on how many other entities are in the
    batch. A dead end stops the walk early; an entity with no outgoing edge
    yields single-atom walks. With ``bidirectional`` (off by default, an
    experimentation knob) each hop may also follow an incoming edge in
    reverse; walk slices then no longer read as stored triples.
    """
    if walks_per_entity < 1 or max_depth < 1:
        raise UsageError("walks_per_entity and max_depth must be >= 1")
    ids: list[tuple[int, Atom]] = []
    for a in entities:
        i = store.id_of(a)
        if i is None:
            raise UsageError(f"entity {a.n3()} is not in the store")
        if store.out_degree(i) == 0 and not store.in_edges(i):
            raise UsageError(
                f"entity {a.n3()} appears in no subject/object position")
        ids.append((i, a))
    ids.sort(key=lambda t: t[0])

    entropy = int(rng.integers(0, 2 ** 63))
    walks: list[Walk] = []
    for atom_id, atom in ids:
        ent_rng = rng_for(entropy, STAGE_WALKS, atom_id)
        for _ in range(walks_per_entity):
            tokens = [atom]
            cur = atom_id
            for _ in range(max_depth):
                out = store.out_edges(cur)
                if bidirectional:
                    incoming = store.in_edges(cur)
                    total = len(out) + len(incoming)
                    if total == 0:
                        break
                    pick = int(ent_rng.integers(total))
                    if pick < len(out):
                        p_id, o_id = out[pick]
                    else:
                        o_id, p_id = incoming[pick - len(out)]
                else:
                    if not out:
                        break
                    p_id, o_id = out[int(ent_rng.integers(len(out)))]
                tokens.append(store.atom(p_id))
                tokens.append(store.atom(o_id))
                cur = o_id
            walks.append(Walk(tuple(tokens), atom))
    return walks


@dataclass
class EmbeddingTable:
    """Trained embeddings keyed by atom.

    ``input_vectors[i]`` is the published embedding of ``atoms[i]``; output
    vectors are the context-side parameters, kept for reproducibility.
    """

    dim: int
    atoms: tuple[Atom, ...]
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    trained_epochs: int = 0
    window: int = 0
    negatives: int = 0
    seed: int = 0
    loss_trace: tuple[float, ...] = ()
    _index: dict[Atom, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._index:
            self._index = {a: i for i, a in enumerate(self.atoms)}

    def __len__(self) -> int:
        return len(self.atoms)

    def lookup(self, x: Atom) -> np.ndarray | None:
        i = self._index.get(x)
        return None if i is None else self.input_vectors[i]

    def __contains__(self, x: Atom) -> bool:
        return x in self._index

    def without(self, excluded: Iterable[Atom]) -> "EmbeddingTable":
        """A copy with the given atoms removed (used for inductive masking)."""
        drop = set(excluded)
        keep = [i for i, a in enumerate(self.atoms) if a not in drop]
        return EmbeddingTable(
            dim=self.dim,
            atoms=tuple(self.atoms[i] for i in keep),
            input_vectors=self.input_vectors[keep].copy(),
            output_vectors=self.output_vectors[keep].copy(),
            trained_epochs=self.trained_epochs,
            window=self.window,
            negatives=self.negatives,
            seed=self.seed,
            loss_trace=self.loss_trace,
        )


def _init_table(vocab: list[Atom], dim: int, rng: np.random.Generator,
                window: int, negatives: int, seed_meta: int) -> EmbeddingTable:
    n = len(vocab)
    inputs = (rng.random((n, dim), dtype=np.float32) - np.float32(0.5)) / np.float32(dim)
    outputs = np.zeros((n, dim), dtype=np.float32)
    return EmbeddingTable(dim=dim, atoms=tuple(vocab), input_vectors=inputs,
                          output_vectors=outputs, trained_epochs=0,
                          window=window, negatives=negatives, seed=seed_meta)


def train_skipgram(walks: Sequence[Walk] | Sequence[Sequence[Atom]],
                   dim: int = 100, window: int = 4, negatives: int = 5,
                   epochs: int = 10, lr: float = 0.025,
                   rng: np.random.Generator | int = 0) -> EmbeddingTable:
    """Train skip-gram embeddings over walk token sequences.

    ``rng`` may be an integer seed (recorded in the table metadata) or a
    Generator (a seed fingerprint is drawn from it). With ``epochs=0`` the
    returned table is exactly the initialization. The per-epoch mean of the
    negative-sampling objective is recorded on ``loss_trace``.
    """
    if dim < 1 or window < 1 or negatives < 0 or epochs < 0 or lr <= 0:
        raise UsageError("bad skip-gram hyperparameters")
    if isinstance(rng, (int, np.integer)):
        seed_meta = int(rng)
        gen = rng_for(seed_meta, STAGE_SKIPGRAM)
    else:
        seed_meta = int(rng.integers(0, 2 ** 31))
        gen = rng_for(seed_meta, STAGE_SKIPGRAM)

    sequences: list[list[Atom]] = []
    for w in walks:
        tokens = list(w.atoms) if isinstance(w, Walk) else list(w)
        if tokens:
            sequences.append(tokens)

    vocab: dict[Atom, int] = {}
    counts: list[int] = []
    for seq in sequences:
        for a in seq:
            i = vocab.get(a)
            if i is None:
                vocab[a] = len(counts)
                counts.append(1)
            else:
                counts[i] += 1
    vocab_atoms = list(vocab)
    if not vocab_atoms:
        raise UsageError("cannot train embeddings over an empty vocabulary")
    table = _init_table(vocab_atoms, dim, gen, window, negatives, seed_meta)
    if epochs == 0:
        return table

    noise = np.asarray(counts, dtype=np.float64) ** _NOISE_POWER
    noise_cdf = np.cumsum(noise)
    noise_total = noise_cdf[-1]

    indexed = [np.asarray([vocab[a] for a in seq], dtype=np.int64)
               for seq in sequences]
    inputs = table.input_vectors
    outputs = table.output_vectors
    losses: list[float] = []

    for epoch in range(epochs):
        alpha = np.float32(lr + (MIN_LR - lr) * (epoch / epochs))
        loss_sum = 0.0
        n_pairs = 0
        for seq in indexed:
            length = len(seq)
            for t in range(length):
                tgt = seq[t]
                lo = max(0, t - window)
                hi = min(length, t + window + 1)
                for j in range(lo, hi):
                    if j == t:
                        continue
                    ctx = seq[j]
                    v = inputs[tgt]
                    if negatives > 0:
                        draws = np.searchsorted(
                            noise_cdf, gen.random(negatives) * noise_total,
                            side="right")
                        rows = np.empty(negatives + 1, dtype=np.int64)
                        rows[0] = ctx
                        rows[1:] = draws
                        keep = np.ones(negatives + 1, dtype=bool)
                        keep[1:] = draws != ctx
                        rows = rows[keep]
                    else:
                        rows = np.asarray([ctx], dtype=np.int64)
                    ctx_vecs = outputs[rows]
                    scores = expit(ctx_vecs @ v)
                    labels = np.zeros(len(rows), dtype=np.float32)
                    labels[0] = 1.0
                    g = (labels - scores) * alpha
                    grad_v = g @ ctx_vecs
                    np.add.at(outputs, rows, g[:, None] * v)
                    inputs[tgt] += grad_v

                    clipped = np.clip(scores, 1e-7, 1.0 - 1e-7)
                    loss_sum += -float(np.log(clipped[0]))
                    loss_sum += -float(np.log1p(-clipped[1:]).sum())
                    n_pairs += 1
        losses.append(loss_sum / max(1, n_pairs))

    table.trained_epochs = epochs
    table.loss_trace = tuple(losses)
    return table


# -- persistence ---------------------------------------------------------------


def _float_text(x: np.floating) -> str:
    return repr(float(x))


def binary_sidecar_path(tsv_path) -> Path:
    p = Path(tsv_path)
    return p.with_suffix(".bin") if p.suffix else p.with_name(p.name + ".bin")


def table_to_bytes(table: EmbeddingTable, store: TripleStore) -> bytes:
    """Serialize to the binary format (ids resolved against ``store``)."""
    parts = [EMBEDDING_MAGIC,
             struct.pack("<IQ", table.dim, len(table.atoms)),
             struct.pack("<IIIQ", table.trained_epochs, table.window,
                         table.negatives, table.seed & ((1 << 64) - 1))]
    for i, a in enumerate(table.atoms):
        atom_id = store.id_of(a)
        if atom_id is None:
            raise UsageError(f"atom {a.n3()} is not in the store")
        parts.append(struct.pack("<I", atom_id))
        parts.append(table.input_vectors[i].astype("<f4", copy=False).tobytes())
        parts.append(table.output_vectors[i].astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def save_embeddings(table: EmbeddingTable, tsv_path, store: TripleStore) -> Path:
    """Write the TSV (atom token + input vector) and the binary sidecar.

    Returns the sidecar path. TSV floats use shortest round-trip decimal
    text, so reading the TSV back reproduces the float32 vectors exactly.
    """
    tsv_path = Path(tsv_path)
    with open(tsv_path, "w", encoding="utf-8") as fh:
        for i, a in enumerate(table.atoms):
            vec = " ".join(_float_text(x) for x in table.input_vectors[i])
            fh.write(f"{a.n3()}\t{vec}\n")
    sidecar = binary_sidecar_path(tsv_path)
    with open(sidecar, "wb") as fh:
        fh.write(table_to_bytes(table, store))
    return sidecar


def _load_binary(data: bytes, store: TripleStore, origin: str) -> EmbeddingTable:
    try:
        dim, count = struct.unpack_from("<IQ", data, 8)
        epochs, window, negatives, seed = struct.unpack_from("<IIIQ", data, 20)
        off = 40
        atoms: list[Atom] = []
        inputs = np.empty((count, dim), dtype=np.float32)
        outputs = np.empty((count, dim), dtype=np.float32)
        vec_bytes = 4 * dim
        for i in range(count):
            (atom_id,) = struct.unpack_from("<I", data, off)
            off += 4
            atoms.append(store.atom(atom_id))
            inputs[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += vec_bytes
            outputs[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += vec_bytes
    except (struct.error, ValueError, IndexError) as exc:
        raise EmbeddingFormatError(f"{origin}: corrupt embedding file ({exc})") from exc
    if off != len(data):
        raise EmbeddingFormatError(f"{origin}: trailing bytes in embedding file")
    return EmbeddingTable(dim=dim, atoms=tuple(atoms), input_vectors=inputs,
                          output_vectors=outputs, trained_epochs=epochs,
                          window=window, negatives=negatives, seed=seed)


def _parse_tsv_atom(token: str, lineno: int) -> Atom:
    sc = _LineScanner(token, lineno)
    atom = sc.term()
    sc.skip_ws()
    if not sc.at_end():
        raise EmbeddingFormatError(f"line {lineno}: trailing text after atom token")
    return atom


def _load_tsv(text: str, origin: str) -> EmbeddingTable:
    atoms: list[Atom] = []
    rows: list[np.ndarray] = []
    dim: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            token, _, rest = line.partition("\t")
            atom = _parse_tsv_atom(token, lineno)
            vec = np.asarray([np.float32(x) for x in rest.split()], dtype=np.float32)
        except Exception as exc:
            raise EmbeddingFormatError(f"{origin}: line {lineno}: {exc}") from exc
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise EmbeddingFormatError(
                f"{origin}: line {lineno}: expected {dim} floats, got {len(vec)}")
        atoms.append(atom)
        rows.append(vec)
    if dim is None:
        raise EmbeddingFormatError(f"{origin}: empty embedding TSV")
    inputs = np.vstack(rows)
    return EmbeddingTable(dim=dim, atoms=tuple(atoms), input_vectors=inputs,
                          output_vectors=np.zeros_like(inputs))


def load_embeddings(path, store: TripleStore | None = None) -> EmbeddingTable:
    """Load embeddings from a binary sidecar or a TSV file (sniffed by magic).

    Binary files need the store to resolve atom ids; TSV files are
    self-contained but carry input vectors only.
    """
    raw = Path(path).read_bytes()
    if raw[:8] == EMBEDDING_MAGIC:
        if store is None:
            raise UsageError("loading binary embeddings requires the store")
        return _load_binary(raw, store, str(path))
    return _load_tsv(raw.decode("utf-8"), str(path))
