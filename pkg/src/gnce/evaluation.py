"""q-Error evaluation harness and the entity-disjoint split protocol.

An estimator is anything with a ``name`` and an ``estimate(query) -> float``
method; adapters below wrap the learned model, both classical baselines and
a constant predictor. Reports aggregate multiplicative error overall and per
cardinality bucket (powers of five), optionally with per-query latency split
into featurize and forward time.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import numpy as np

from .baselines import CharacteristicSets, WanderJoin
from .errors import EstimatorError, UsageError
from .featurizer import Featurizer
from .kg import Atom
from .model import GnceModel
from .queries import QueryGraph
from .seeding import STAGE_SPLIT, rng_for

BUCKET_BASE = 5
N_CLOSED_BUCKETS = 9

#: Leading queries whose latency is dropped from aggregates (interpreter and
#: cache warm-up would otherwise dominate the tail).
LATENCY_WARMUP = 10


def q_error(true_cardinality: float, estimate: float) -> float:
    """Multiplicative error, symmetric in over/underestimation, >= 1.

    Inputs must be positive; both sides are then clamped to at least 1, so
    an estimator that outputs a tiny value for an empty result is not
    rewarded with a huge ratio.
    """
    t = float(true_cardinality)
    e = float(estimate)
    if t <= 0.0 or e <= 0.0:
        raise UsageError("q-error needs positive cardinality and estimate")
    t = max(t, 1.0)
    e = max(e, 1.0)
    return max(t / e, e / t)


def bucket_edges() -> list[tuple[float, float | None]]:
    """Cardinality buckets: [5^k, 5^(k+1)) for k in 0..8, then an open top."""
    edges: list[tuple[float, float | None]] = [
        (float(BUCKET_BASE ** k), float(BUCKET_BASE ** (k + 1)))
        for k in range(N_CLOSED_BUCKETS)
    ]
    edges.append((float(BUCKET_BASE ** N_CLOSED_BUCKETS), None))
    return edges


def bucket_of(cardinality: float) -> int:
    c = max(float(cardinality), 1.0)
    for k in range(N_CLOSED_BUCKETS):
        if c < float(BUCKET_BASE ** (k + 1)):
            return k
    return N_CLOSED_BUCKETS


class Estimator(Protocol):
    name: str

    def estimate(self, q: QueryGraph) -> float: ...


class GnceEstimator:
    """Model adapter; records featurize and forward time per call."""

    def __init__(self, model: GnceModel, featurizer: Featurizer,
                 name: str = "gnce") -> None:
        self.model = model
        self.featurizer = featurizer
        self.name = name
        self.last_featurize_s = float("nan")
        self.last_forward_s = float("nan")

    def estimate(self, q: QueryGraph) -> float:
        t0 = time.perf_counter()
        feat = self.featurizer(q, None)
        t1 = time.perf_counter()
        out = self.model.forward(feat)
        t2 = time.perf_counter()
        self.last_featurize_s = t1 - t0
        self.last_forward_s = t2 - t1
        # Cap the exponent so a wildly off model yields a huge finite
        # estimate instead of inf, which would poison report aggregates.
        return float(np.exp(min(float(out[0]), 700.0)))


class CsetEstimator:
    def __init__(self, cset: CharacteristicSets, name: str = "cset") -> None:
        self.cset = cset
        self.name = name

    def estimate(self, q: QueryGraph) -> float:
        return self.cset.estimate(q)


class WanderJoinEstimator:
    def __init__(self, wj: WanderJoin, name: str = "wanderjoin") -> None:
        self.wj = wj
        self.name = name

    def estimate(self, q: QueryGraph) -> float:
        return self.wj.estimate(q)


class ConstantEstimator:
    """Predicts one fixed value; the geometric train mean is the classic
    structure-blind reference point."""

    def __init__(self, value: float, name: str = "constant") -> None:
        self.value = float(value)
        self.name = name

    @classmethod
    def train_geomean(cls, train_queries: Sequence[QueryGraph]
                      ) -> "ConstantEstimator":
        if not train_queries:
            raise UsageError("cannot take a mean over zero queries")
        logs = [np.log(max(1.0, float(q.true_cardinality)))
                for q in train_queries]
        return cls(float(np.exp(np.mean(logs))), name="train-geomean")

    def estimate(self, q: QueryGraph) -> float:
        return self.value


@dataclass(frozen=True, slots=True)
class QueryOutcome:
    true_cardinality: float
    estimate: float
    q_error: float
    bucket: int
    featurize_ms: float | None = None
    forward_ms: float | None = None


def bucket_label(index: int) -> str:
    if index >= N_CLOSED_BUCKETS:
        return f">=5^{N_CLOSED_BUCKETS}"
    return "<5" if index == 0 else f"<5^{index + 1}"


@dataclass(slots=True)
class EvalReport:
    name: str
    n_queries: int
    n_skipped: int
    n_clamped: int
    mean_q: float
    geomean_q: float
    median_q: float
    p90_q: float
    p95_q: float
    max_q: float
    buckets: list[dict]
    latency: dict | None
    outcomes: list[QueryOutcome]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outcomes"] = [asdict(o) for o in self.outcomes]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    def write_csv(self, path) -> None:
        """Per-bucket summary rows plus a final overall row."""
        def mean_latency(outcomes: list[QueryOutcome]) -> float | None:
            ms = [o.featurize_ms + o.forward_ms for o in outcomes
                  if o.featurize_ms is not None and o.forward_ms is not None]
            return float(np.mean(ms)) if ms else None

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "bucket", "mean_q_error", "n",
                             "mean_latency_ms"])
            for b, entry in enumerate(self.buckets):
                if entry["n"] == 0:
                    continue
                lat = mean_latency([o for o in self.outcomes if o.bucket == b])
                writer.writerow([
                    self.name, bucket_label(b), repr(entry["mean_q"]),
                    entry["n"], "" if lat is None else repr(lat),
                ])
            lat = mean_latency(self.outcomes)
            writer.writerow([self.name, "all", repr(self.mean_q),
                             self.n_queries,
                             "" if lat is None else repr(lat)])


def _percentile(values: list[float], pct: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=np.float64), pct))


def _latency_stats(featurize_ms: list[float], forward_ms: list[float],
                   n_excluded: int) -> dict:
    total = [a + b for a, b in zip(featurize_ms, forward_ms)]

    def stats(xs: list[float]) -> dict:
        return {
            "mean_ms": float(np.mean(xs)),
            "median_ms": _percentile(xs, 50),
            "p95_ms": _percentile(xs, 95),
        }
    return {
        "n_measured": len(total),
        "n_warmup_excluded": n_excluded,
        "featurize": stats(featurize_ms),
        "forward": stats(forward_ms),
        "total": stats(total),
    }


def evaluate(estimator: Estimator, queries: Sequence[QueryGraph],
             measure_latency: bool = False,
             warmup: int = LATENCY_WARMUP) -> EvalReport:
    """Run the estimator over queries with known cardinalities.

    Queries the estimator refuses (EstimatorError) are counted as skipped
    and excluded from the aggregates. With ``measure_latency`` the adapter's
    per-call featurize/forward timings are aggregated, excluding the first
    ``warmup`` measured queries when enough remain.
    """
    outcomes: list[QueryOutcome] = []
    skipped = 0
    clamped = 0
    featurize_ms: list[float] = []
    forward_ms: list[float] = []
    for q in queries:
        if q.true_cardinality is None:
            raise UsageError("evaluation queries need true cardinalities")
        try:
            est = estimator.estimate(q)
        except EstimatorError:
            skipped += 1
            continue
        if est < 1.0:
            clamped += 1
        truth = float(q.true_cardinality)
        fz_ms = fw_ms = None
        if measure_latency and hasattr(estimator, "last_featurize_s"):
            fz_ms = estimator.last_featurize_s * 1e3
            fw_ms = estimator.last_forward_s * 1e3
            featurize_ms.append(fz_ms)
            forward_ms.append(fw_ms)
        outcomes.append(QueryOutcome(
            true_cardinality=truth,
            estimate=float(est),
            q_error=q_error(max(truth, 1.0), max(est, 1.0)),
            bucket=bucket_of(truth),
            featurize_ms=fz_ms,
            forward_ms=fw_ms,
        ))

    if not outcomes:
        raise UsageError(f"estimator {estimator.name} produced no estimates")

    qs = [o.q_error for o in outcomes]
    edges = bucket_edges()
    buckets = []
    for b, (lo, hi) in enumerate(edges):
        in_bucket = [o.q_error for o in outcomes if o.bucket == b]
        entry = {"lo": lo, "hi": hi, "n": len(in_bucket)}
        if in_bucket:
            entry.update(mean_q=float(np.mean(in_bucket)),
                         median_q=_percentile(in_bucket, 50),
                         max_q=float(np.max(in_bucket)))
        buckets.append(entry)

    latency = None
    if measure_latency and featurize_ms:
        drop = warmup if len(featurize_ms) > warmup else 0
        latency = _latency_stats(featurize_ms[drop:], forward_ms[drop:], drop)

    return EvalReport(
        name=estimator.name,
        n_queries=len(outcomes),
        n_skipped=skipped,
        n_clamped=clamped,
        mean_q=float(np.mean(qs)),
        geomean_q=float(np.exp(np.mean(np.log(qs)))),
        median_q=_percentile(qs, 50),
        p90_q=_percentile(qs, 90),
        p95_q=_percentile(qs, 95),
        max_q=float(np.max(qs)),
        buckets=buckets,
        latency=latency,
        outcomes=outcomes,
    )


@dataclass(frozen=True, slots=True)
class InductiveSplit:
    train: tuple[QueryGraph, ...]
    test: tuple[QueryGraph, ...]
    held_out: frozenset[Atom]


def _bound_entities(q: QueryGraph) -> list[Atom]:
    seen: list[Atom] = []
    for p in q.patterns:
        for qa in (p.s, p.o):
            if not qa.is_var and qa.atom not in seen:
                seen.append(qa.atom)
    return seen


def inductive_split(queries: Sequence[QueryGraph], test_fraction: float = 0.2,
                    seed: int = 0) -> InductiveSplit:
    """Split so no subject/object entity occurs on both sides.

    Queries sharing an entity are glued into one component (union-find) and
    components are dealt whole, shuffled, into the test side until it holds
    at least ``test_fraction`` of the queries. Predicates may cross sides.
    The returned ``held_out`` set lists every bound entity of the test
    queries; by construction none of them appears in a train query. When one
    component spans the whole corpus nothing is separable: the split is then
    best-effort, all queries on the train side and an empty test side.
    """
    if not 0.0 < test_fraction < 1.0:
        raise UsageError("test_fraction must be in (0, 1)")
    n = len(queries)
    if n == 0:
        raise UsageError("cannot split an empty corpus")

    parent: dict[object, object] = {}

    def find(x: object) -> object:
        root = x
        while parent[root] is not root:
            root = parent[root]
        while parent[x] is not root:
            parent[x], x = root, parent[x]
        return root

    def union(a: object, b: object) -> None:
        ra, rb = find(a), find(b)
        if ra is not rb:
            parent[ra] = rb

    query_key: list[object] = []
    for i, q in enumerate(queries):
        ents = _bound_entities(q)
        anchor: object = ("query", i) if not ents else ents[0]
        if anchor not in parent:
            parent[anchor] = anchor
        for e in ents:
            if e not in parent:
                parent[e] = e
            union(anchor, e)
        query_key.append(anchor)

    components: dict[object, list[int]] = {}
    comp_order: list[object] = []
    for i, key in enumerate(query_key):
        root = find(key)
        if root not in components:
            components[root] = []
            comp_order.append(root)
        components[root].append(i)

    rng = rng_for(seed, STAGE_SPLIT)
    perm = rng.permutation(len(comp_order))
    target = test_fraction * n
    test_idx: set[int] = set()
    for j in perm:
        if len(test_idx) >= target:
            break
        test_idx.update(components[comp_order[int(j)]])

    if len(test_idx) == n:
        # One component swallowed the corpus; the closest achievable test
        # fraction is zero.
        test_idx = set()

    train = tuple(q for i, q in enumerate(queries) if i not in test_idx)
    test = tuple(q for i, q in enumerate(queries) if i in test_idx)
    held_out = frozenset(a for q in test for a in _bound_entities(q))
    return InductiveSplit(train=train, test=test, held_out=held_out)
