"""N-Triples ingestion and an immutable, fully indexed in-memory triple store.

The store keeps six permutation indexes (SPO, SOP, PSO, POS, OSP, OPS) so any
partially bound pattern can be enumerated or counted without scanning, plus
per-atom occurrence counts. Atoms are interned to dense integer ids in
first-seen order; all hot paths work on ids and convert at the boundary.

The parser is line-oriented and covers the common N-Triples core (IRIs,
blank nodes, plain/typed/language literals, \\uXXXX escapes, full-line
comments). It is not a full conformance-grade RDF parser.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import NTriplesParseError, StoreFormatError

IRI = "iri"
LITERAL = "literal"
BLANK = "blank"

_ATOM_KINDS = (IRI, LITERAL, BLANK)
_KIND_CODE = {IRI: 0, LITERAL: 1, BLANK: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

#: Blank node labels are skolemized under this prefix at parse time.
SKOLEM_PREFIX = "urn:skolem:"

STORE_MAGIC = b"GNCEKG1\x00"

_ESCAPE_MAP = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}
_SERIALIZE_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}

_BLANK_LABEL_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-"
)
_LANG_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-"
)


@dataclass(frozen=True, slots=True)
class Atom:
    """A ground RDF term.

    ``kind`` is one of "iri", "literal", "blank". Literal values keep their
    full canonical token (quotes, escapes, @lang / ^^<datatype> suffix), so
    equality on (kind, value) is exact lexical-form equality. Blank nodes are
    skolemized: their value is an IRI under ``SKOLEM_PREFIX``.
    """

    kind: str
    value: str

    def __post_init__(self) -> None:
        if self.kind not in _ATOM_KINDS:
            raise ValueError(f"unknown atom kind {self.kind!r}")
        if not self.value:
            raise ValueError("atom value must be non-empty")
        if self.kind == BLANK and not self.value.startswith(SKOLEM_PREFIX):
            raise ValueError(f"blank atom value must start with {SKOLEM_PREFIX!r}")

    @property
    def is_iri_like(self) -> bool:
        return self.kind in (IRI, BLANK)

    def n3(self) -> str:
        """The term's N-Triples token."""
        if self.kind == IRI:
            return f"<{self.value}>"
        if self.kind == BLANK:
            return "_:" + self.value[len(SKOLEM_PREFIX):]
        return self.value


def iri(value: str) -> Atom:
    return Atom(IRI, value)


def skolem(label: str) -> Atom:
    return Atom(BLANK, SKOLEM_PREFIX + label)


def escape_literal_text(text: str) -> str:
    return "".join(_SERIALIZE_ESCAPES.get(c, c) for c in text)


def literal(content: str, lang: str | None = None, datatype: str | None = None) -> Atom:
    """Build a literal atom from its parts, producing the canonical token."""
    if lang is not None and datatype is not None:
        raise ValueError("a literal cannot carry both a language tag and a datatype")
    token = '"' + escape_literal_text(content) + '"'
    if lang is not None:
        token += "@" + lang
    elif datatype is not None:
        token += "^^<" + datatype + ">"
    return Atom(LITERAL, token)


@dataclass(frozen=True, slots=True)
class Triple:
    s: Atom
    p: Atom
    o: Atom

    def __post_init__(self) -> None:
        if not self.s.is_iri_like:
            raise ValueError("triple subject must be an IRI or skolemized blank")
        if self.p.kind != IRI:
            raise ValueError("triple predicate must be an IRI")

    def n3(self) -> str:
        return f"{self.s.n3()} {self.p.n3()} {self.o.n3()} ."


@dataclass(frozen=True, slots=True)
class ParseIssue:
    lineno: int
    message: str


def _unescape(body: str, lineno: int) -> str:
    if "\\" not in body:
        return body
    out: list[str] = []
    i = 0
    n = len(body)
    while i < n:
        c = body[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= n:
            raise NTriplesParseError("dangling escape", lineno)
        e = body[i + 1]
        if e == "u" or e == "U":
            width = 4 if e == "u" else 8
            hexpart = body[i + 2 : i + 2 + width]
            if len(hexpart) != width:
                raise NTriplesParseError("truncated numeric escape", lineno)
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError:
                raise NTriplesParseError(f"bad numeric escape \\{e}{hexpart}", lineno) from None
            i += 2 + width
        elif e in _ESCAPE_MAP:
            out.append(_ESCAPE_MAP[e])
            i += 2
        else:
            raise NTriplesParseError(f"unknown escape \\{e}", lineno)
    return "".join(out)


class _LineScanner:
    """Cursor over one N-Triples line."""

    def __init__(self, line: str, lineno: int):
        self.line = line
        self.pos = 0
        self.lineno = lineno

    def error(self, message: str) -> NTriplesParseError:
        return NTriplesParseError(message, self.lineno)

    def skip_ws(self) -> None:
        line = self.line
        n = len(line)
        while self.pos < n and line[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        return self.pos >= len(self.line)

    def expect_end(self) -> None:
        self.skip_ws()
        if not self.at_end():
            raise self.error(f"trailing garbage after '.': {self.line[self.pos:]!r}")

    def term(self) -> Atom:
        self.skip_ws()
        if self.at_end():
            raise self.error("unexpected end of line")
        c = self.line[self.pos]
        if c == "<":
            return self._iri()
        if c == "_":
            return self._blank()
        if c == '"':
            return self._literal()
        raise self.error(f"unexpected character {c!r}")

    def _iri(self) -> Atom:
        end = self.line.find(">", self.pos + 1)
        if end < 0:
            raise self.error("unterminated IRI")
        raw = self.line[self.pos + 1 : end]
        self.pos = end + 1
        value = _unescape(raw, self.lineno)
        if not value:
            raise self.error("empty IRI")
        return Atom(IRI, value)

    def _blank(self) -> Atom:
        if not self.line.startswith("_:", self.pos):
            raise self.error("malformed blank node")
        i = self.pos + 2
        line = self.line
        n = len(line)
        start = i
        while i < n and line[i] in _BLANK_LABEL_CHARS:
            i += 1
        if i == start:
            raise self.error("empty blank node label")
        self.pos = i
        return skolem(line[start:i])

    def _literal(self) -> Atom:
        line = self.line
        n = len(line)
        i = self.pos + 1
        start = i
        while i < n:
            c = line[i]
            if c == "\\":
                i += 2
                continue
            if c == '"':
                break
            i += 1
        if i >= n:
            raise self.error("unterminated literal")
        content = _unescape(line[start:i], self.lineno)
        i += 1
        lang = None
        datatype = None
        if i < n and line[i] == "@":
            i += 1
            tag_start = i
            while i < n and line[i] in _LANG_CHARS:
                i += 1
            if i == tag_start:
                raise self.error("empty language tag")
            lang = line[tag_start:i]
        elif line.startswith("^^", i):
            i += 2
            if i >= n or line[i] != "<":
                raise self.error("datatype must be an IRI")
            end = line.find(">", i + 1)
            if end < 0:
                raise self.error("unterminated datatype IRI")
            datatype = _unescape(line[i + 1 : end], self.lineno)
            i = end + 1
        self.pos = i
        return literal(content, lang=lang, datatype=datatype)


def _parse_line(line: str, lineno: int) -> Triple | None:
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    sc = _LineScanner(line.rstrip("\r\n"), lineno)
    s = sc.term()
    if not s.is_iri_like:
        raise sc.error("subject must be an IRI or blank node")
    p = sc.term()
    if p.kind != IRI:
        raise sc.error("predicate must be an IRI")
    o = sc.term()
    sc.skip_ws()
    if sc.at_end() or sc.line[sc.pos] != ".":
        raise sc.error("missing terminating '.'")
    sc.pos += 1
    sc.expect_end()
    return Triple(s, p, o)


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        yield from source.splitlines()
    else:
        for raw in source:
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8")
            yield raw


def parse_ntriples(source, strict: bool = True,
                   issues: list[ParseIssue] | None = None) -> "TripleStore":
    """Parse N-Triples text into a store.

    ``source`` may be a str, bytes, or an iterable of lines (e.g. a file
    object). In strict mode the first malformed line raises
    ``NTriplesParseError``; in lenient mode malformed lines are skipped and
    recorded in ``issues`` when a list is supplied.

    Duplicate triples collapse to one; blank node labels are skolemized to
    IRIs under ``SKOLEM_PREFIX``, deterministically per label.
    """
    triples: list[Triple] = []
    for lineno, line in enumerate(_iter_lines(source), start=1):
        try:
            t = _parse_line(line, lineno)
        except NTriplesParseError as exc:
            if strict:
                raise
            if issues is not None:
                issues.append(ParseIssue(lineno, str(exc)))
            continue
        if t is not None:
            triples.append(t)
    return TripleStore.from_triples(triples)


def serialize_ntriples(store: "TripleStore") -> str:
    """One line per stored triple, in the store's insertion order."""
    return "".join(t.n3() + "\n" for t in store.triples())


def _index2(pairs: Iterable[tuple[int, int, int]]) -> dict[int, dict[int, list[int]]]:
    out: dict[int, dict[int, list[int]]] = {}
    for a, b, c in pairs:
        inner = out.get(a)
        if inner is None:
            inner = {}
            out[a] = inner
        leaf = inner.get(b)
        if leaf is None:
            inner[b] = [c]
        else:
            leaf.append(c)
    return out


class TripleStore:
    """Immutable set of triples with six permutation indexes and occ counts."""

    __slots__ = (
        "_atoms", "_atom_ids", "_triples", "_triple_set",
        "_spo", "_sop", "_pso", "_pos", "_osp", "_ops",
        "_occ", "_n_s", "_n_p", "_n_o",
        "_out_flat", "_outdeg", "_outdeg_memo", "_in_flat",
    )

    def __init__(self, atoms: Sequence[Atom], id_triples: Sequence[tuple[int, int, int]]):
        # Trusted constructor; use from_triples / parse_ntriples / load.
        self._atoms: list[Atom] = list(atoms)
        self._atom_ids: dict[Atom, int] = {a: i for i, a in enumerate(self._atoms)}
        self._triples: list[tuple[int, int, int]] = list(id_triples)
        self._triple_set = set(self._triples)
        if len(self._triple_set) != len(self._triples):
            raise ValueError("duplicate triples passed to TripleStore")

        self._spo = _index2(self._triples)
        self._sop = _index2((s, o, p) for s, p, o in self._triples)
        self._pso = _index2((p, s, o) for s, p, o in self._triples)
        self._pos = _index2((p, o, s) for s, p, o in self._triples)
        self._osp = _index2((o, s, p) for s, p, o in self._triples)
        self._ops = _index2((o, p, s) for s, p, o in self._triples)

        occ = [0] * len(self._atoms)
        for s, p, o in self._triples:
            occ[s] += 1
            if p != s:
                occ[p] += 1
            if o != s and o != p:
                occ[o] += 1
        self._occ = occ

        self._n_s = {s: sum(len(v) for v in inner.values()) for s, inner in self._spo.items()}
        self._n_p = {p: sum(len(v) for v in inner.values()) for p, inner in self._pso.items()}
        self._n_o = {o: sum(len(v) for v in inner.values()) for o, inner in self._osp.items()}

        self._out_flat: dict[int, list[tuple[int, int]]] = {}
        self._in_flat: dict[int, list[tuple[int, int]]] = {}
        self._outdeg: tuple[list[int], list[int]] | None = None
        self._outdeg_memo: dict[int, list[int]] = {}

    # -- construction ------------------------------------------------------

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "TripleStore":
        atoms: list[Atom] = []
        ids: dict[Atom, int] = {}

        def intern(a: Atom) -> int:
            i = ids.get(a)
            if i is None:
                i = len(atoms)
                ids[a] = i
                atoms.append(a)
            return i

        seen: set[tuple[int, int, int]] = set()
        id_triples: list[tuple[int, int, int]] = []
        for t in triples:
            key = (intern(t.s), intern(t.p), intern(t.o))
            if key not in seen:
                seen.add(key)
                id_triples.append(key)
        return cls(atoms, id_triples)

    # -- basic accessors ----------------------------------------------------

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def n_atoms(self) -> int:
        return len(self._atoms)

    def atom(self, i: int) -> Atom:
        return self._atoms[i]

    @property
    def atoms(self) -> Sequence[Atom]:
        return self._atoms

    def id_of(self, atom: Atom) -> int | None:
        return self._atom_ids.get(atom)

    def __contains__(self, t: Triple) -> bool:
        key = self._key_of(t)
        return key is not None and key in self._triple_set

    def _key_of(self, t: Triple) -> tuple[int, int, int] | None:
        s = self._atom_ids.get(t.s)
        p = self._atom_ids.get(t.p)
        o = self._atom_ids.get(t.o)
        if s is None or p is None or o is None:
            return None
        return (s, p, o)

    def triples(self) -> Iterator[Triple]:
        at = self._atoms
        for s, p, o in self._triples:
            yield Triple(at[s], at[p], at[o])

    def id_triples(self) -> Sequence[tuple[int, int, int]]:
        return self._triples

    def occ(self, x: Atom) -> int:
        """Number of distinct triples containing ``x`` in any position."""
        i = self._atom_ids.get(x)
        return 0 if i is None else self._occ[i]

    def occ_id(self, i: int) -> int:
        return self._occ[i]

    def stats(self) -> dict:
        """Summary counts for reporting."""
        kinds = Counter(a.kind for a in self._atoms)
        return {
            "n_triples": len(self._triples),
            "n_atoms": len(self._atoms),
            "n_subjects": len(self._spo),
            "n_predicates": len(self._pso),
            "n_objects": len(self._osp),
            "n_iris": kinds.get("iri", 0),
            "n_literals": kinds.get("literal", 0),
            "n_blank": kinds.get("blank", 0),
        }

    # -- id-level matching ---------------------------------------------------

    def contains_id(self, s: int, p: int, o: int) -> bool:
        return (s, p, o) in self._triple_set

    def count_ids(self, s: int | None, p: int | None, o: int | None) -> int:
        """Exact number of triples matching the bound positions (None = any)."""
        if s is not None:
            if p is not None:
                if o is not None:
                    return 1 if (s, p, o) in self._triple_set else 0
                leaf = self._spo.get(s)
                return len(leaf[p]) if leaf and p in leaf else 0
            if o is not None:
                leaf = self._sop.get(s)
                return len(leaf[o]) if leaf and o in leaf else 0
            return self._n_s.get(s, 0)
        if p is not None:
            if o is not None:
                leaf = self._pos.get(p)
                return len(leaf[o]) if leaf and o in leaf else 0
            return self._n_p.get(p, 0)
        if o is not None:
            return self._n_o.get(o, 0)
        return len(self._triples)

    def match_ids(self, s: int | None, p: int | None, o: int | None
                  ) -> Iterator[tuple[int, int, int]]:
        """Enumerate matching id-triples in deterministic (insertion) order."""
        if s is not None and p is not None and o is not None:
            if (s, p, o) in self._triple_set:
                yield (s, p, o)
            return
        if s is not None and p is not None:
            inner = self._spo.get(s)
            if inner:
                for oo in inner.get(p, ()):
                    yield (s, p, oo)
            return
        if s is not None and o is not None:
            inner = self._sop.get(s)
            if inner:
                for pp in inner.get(o, ()):
                    yield (s, pp, o)
            return
        if p is not None and o is not None:
            inner = self._pos.get(p)
            if inner:
                for ss in inner.get(o, ()):
                    yield (ss, p, o)
            return
        if s is not None:
            inner = self._spo.get(s)
            if inner:
                for pp, objs in inner.items():
                    for oo in objs:
                        yield (s, pp, oo)
            return
        if p is not None:
            inner = self._pso.get(p)
            if inner:
                for ss, objs in inner.items():
                    for oo in objs:
                        yield (ss, p, oo)
            return
        if o is not None:
            inner = self._osp.get(o)
            if inner:
                for ss, preds in inner.items():
                    for pp in preds:
                        yield (ss, pp, o)
            return
        yield from self._triples

    def match_pattern(self, pattern: tuple[Atom | None, Atom | None, Atom | None]
                      ) -> Iterator[Triple]:
        """Enumerate triples matching an atom-level pattern (None = wildcard)."""
        ids: list[int | None] = []
        for a in pattern:
            if a is None:
                ids.append(None)
            else:
                i = self._atom_ids.get(a)
                if i is None:
                    return
                ids.append(i)
        at = self._atoms
        for s, p, o in self.match_ids(*ids):
            yield Triple(at[s], at[p], at[o])

    def count_pattern(self, pattern: tuple[Atom | None, Atom | None, Atom | None]) -> int:
        ids: list[int | None] = []
        for a in pattern:
            if a is None:
                ids.append(None)
            else:
                i = self._atom_ids.get(a)
                if i is None:
                    return 0
                ids.append(i)
        return self.count_ids(*ids)

    # -- navigation helpers --------------------------------------------------

    def subject_ids(self) -> list[int]:
        return list(self._spo.keys())

    def entity_ids(self) -> list[int]:
        """Ids of atoms occurring in subject or object position, sorted."""
        return sorted(set(self._spo) | set(self._osp))

    def distinct_subject_count(self) -> int:
        return len(self._spo)

    def out_degree(self, s: int) -> int:
        return self._n_s.get(s, 0)

    def out_edges(self, s: int) -> list[tuple[int, int]]:
        """Flattened, cached (predicate, object) pairs of a subject."""
        flat = self._out_flat.get(s)
        if flat is None:
            inner = self._spo.get(s)
            flat = [] if inner is None else [
                (p, o) for p, objs in inner.items() for o in objs
            ]
            self._out_flat[s] = flat
        return flat

    def in_edges(self, o: int) -> list[tuple[int, int]]:
        """Flattened, cached (subject, predicate) pairs pointing at ``o``."""
        flat = self._in_flat.get(o)
        if flat is None:
            inner = self._osp.get(o)
            flat = [] if inner is None else [
                (s, p) for s, preds in inner.items() for p in preds
            ]
            self._in_flat[o] = flat
        return flat

    def subjects_with_out_degree_at_least(self, k: int) -> list[int]:
        cached = self._outdeg_memo.get(k)
        if cached is not None:
            return cached
        if self._outdeg is None:
            pairs = sorted(self._n_s.items(), key=lambda kv: (-kv[1], kv[0]))
            if pairs:
                subjects, degrees = (list(x) for x in zip(*pairs))
            else:
                subjects, degrees = [], []
            self._outdeg = (subjects, degrees)
        subjects, degrees = self._outdeg
        # degrees are sorted descending; binary search for the cutoff
        lo, hi = 0, len(degrees)
        while lo < hi:
            mid = (lo + hi) // 2
            if degrees[mid] >= k:
                lo = mid + 1
            else:
                hi = mid
        result = subjects[:lo]
        self._outdeg_memo[k] = result
        return result

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(STORE_MAGIC)
            fh.write(struct.pack("<QQ", len(self._atoms), len(self._triples)))
            for a in self._atoms:
                raw = a.value.encode("utf-8")
                fh.write(struct.pack("<BI", _KIND_CODE[a.kind], len(raw)))
                fh.write(raw)
            fh.write(struct.pack(f"<{3 * len(self._triples)}I",
                                 *[x for t in self._triples for x in t]))

    @classmethod
    def load(cls, path) -> "TripleStore":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != STORE_MAGIC:
            raise StoreFormatError(f"{path}: not a store file (bad magic)")
        try:
            n_atoms, n_triples = struct.unpack_from("<QQ", data, 8)
            off = 24
            atoms: list[Atom] = []
            for _ in range(n_atoms):
                code, length = struct.unpack_from("<BI", data, off)
                off += 5
                value = data[off:off + length].decode("utf-8")
                if len(value.encode("utf-8")) != length:
                    raise StoreFormatError(f"{path}: truncated atom table")
                off += length
                atoms.append(Atom(_CODE_KIND[code], value))
            flat = struct.unpack_from(f"<{3 * n_triples}I", data, off)
            off += 12 * n_triples
        except (struct.error, KeyError, ValueError) as exc:
            raise StoreFormatError(f"{path}: corrupt store file ({exc})") from exc
        if off != len(data):
            raise StoreFormatError(f"{path}: trailing bytes in store file")
        id_triples = [tuple(flat[i:i + 3]) for i in range(0, len(flat), 3)]
        return cls(atoms, id_triples)
