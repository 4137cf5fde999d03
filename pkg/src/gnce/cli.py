"""Command-line entry point tying the pipeline stages together.

Every subcommand is runnable on its own given its declared inputs; the
``pipeline`` subcommand chains them all from one JSON config. Exit codes:
0 success, 1 usage error, 2 data error, 3 resource error. With
``--json-errors`` failures are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import CharacteristicSets, WanderJoin
from .errors import DataError, EstimatorError, ResourceError, UsageError
from .errors import ConfigMismatchError
from .evaluation import (ConstantEstimator, CsetEstimator, GnceEstimator,
                         WanderJoinEstimator, evaluate, inductive_split)
from .featurizer import (DEFAULT_ID_WIDTH, Featurizer, binary_featurizer,
                         embedding_featurizer, masked_occ)
from .embeddings import (EmbeddingTable, generate_walks, load_embeddings,
                         save_embeddings, train_skipgram)
from .kg import Atom, ParseIssue, TripleStore, parse_ntriples
from .matcher import count_solutions
from .model import GnceConfig, GnceModel
from .queries import QueryGraph, read_corpus, with_cardinality, write_corpus
from .sampler import SamplerConfig, build_workload
from .seeding import STAGE_SPLIT, STAGE_WALKS, rng_for
from .synth import generate_zipf_kg

_MESSAGE_CHOICES = ("tpn", "gineconv", "tpn-undirected")
_THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
                    "VECLIB_MAXIMUM_THREADS")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract wants 1."""

    def error(self, message: str):
        raise UsageError(message)


def _resolve_seed(value: int | None) -> int:
    """Explicit flag first, then GNCE_SEED, then 0."""
    if value is not None:
        return value
    env = os.environ.get("GNCE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GNCE_SEED must be an integer, got {env!r}") from None


def _cap_threads(n: int) -> None:
    # Best effort: BLAS pools read these at first use, so set them before
    # any heavy numpy call.
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(n)


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {text!r}") from None
    if not sizes:
        raise UsageError("--sizes must name at least one size")
    return sizes


def _corpus_entities(store: TripleStore,
                     queries: Sequence[QueryGraph]) -> list[Atom]:
    """Bound subject/object atoms of the corpus that the store knows as
    entities, in first-occurrence order."""
    eligible = set(store.entity_ids())
    seen: set[Atom] = set()
    out: list[Atom] = []
    for q in queries:
        for tp in q.patterns:
            for qa in (tp.s, tp.o):
                if qa.is_var or qa.atom in seen:
                    continue
                seen.add(qa.atom)
                i = store.id_of(qa.atom)
                if i is not None and i in eligible:
                    out.append(qa.atom)
    return out


def _trainable(queries: Sequence[QueryGraph]) -> list[QueryGraph]:
    return [q for q in queries
            if q.true_cardinality is not None and q.true_cardinality >= 1]


def _featurizer_for(model: GnceModel, store: TripleStore,
                    embeddings_path) -> Featurizer:
    """Build the featurizer a checkpoint declares for itself."""
    cfg = model.config
    if cfg.featurization == "binary":
        return binary_featurizer(store, id_width=cfg.input_dim - 1)
    if embeddings_path is None:
        raise UsageError("this checkpoint was trained on embeddings; pass --embeddings")
    table = load_embeddings(embeddings_path, store)
    if table.dim + 1 != cfg.input_dim:
        raise ConfigMismatchError(
            f"embedding dim {table.dim} does not match model input width {cfg.input_dim}")
    return embedding_featurizer(table, store.occ, model.unseen_vector)


def _baseline_estimator(method: str, store: TripleStore, runs: int, seed: int):
    if method == "cset":
        return CsetEstimator(CharacteristicSets.build(store))
    if method == "wanderjoin":
        return WanderJoinEstimator(WanderJoin(store, runs=runs, seed=seed))
    raise UsageError(f"unknown baseline method {method!r}")


# -- subcommand handlers ----------------------------------------------------

def cmd_ingest(args) -> int:
    issues: list[ParseIssue] = []
    with open(args.input, encoding="utf-8") as fh:
        store = parse_ntriples(fh, strict=not args.lenient, issues=issues)
    store.save(args.out)
    print(f"ingested {len(store)} triples, {store.n_atoms} atoms -> {args.out}")
    if issues:
        print(f"skipped {len(issues)} malformed lines")
    return 0


def cmd_stats(args) -> int:
    if args.gen_demo:
        if args.out is None:
            raise UsageError("--gen-demo needs --out for the store file")
        store = generate_zipf_kg(args.triples, args.entities, args.predicates,
                                 seed=_resolve_seed(args.seed))
        store.save(args.out)
        print(f"demo KG -> {args.out}")
    elif args.store is not None:
        store = TripleStore.load(args.store)
    else:
        raise UsageError("stats needs --store, or --gen-demo with --out")
    print(json.dumps(store.stats(), indent=2, sort_keys=True))
    return 0


def cmd_gen_queries(args) -> int:
    store = TripleStore.load(args.store)
    config = SamplerConfig(shape=args.shape,
                           sizes=_parse_sizes(args.sizes),
                           count_per_size=args.count,
                           p_var_subject=args.p_var_subject,
                           p_var_object=args.p_var_object,
                           p_var_predicate=args.p_var_predicate,
                           max_cardinality=args.max_cardinality,
                           seed=_resolve_seed(args.seed))
    queries, report = build_workload(store, config)
    write_corpus(queries, args.out)
    print(f"emitted {len(queries)} queries -> {args.out}")
    for (shape, size), n in sorted(report.emitted.items()):
        print(f"  {shape} size {size}: {n} ({report.attempts[shape, size]} attempts)")
    dropped = (report.discarded_duplicate + report.discarded_over_limit
               + report.discarded_inexact + report.sampling_failures)
    if dropped:
        print(f"  discarded {dropped} candidates"
              f" (duplicate {report.discarded_duplicate},"
              f" over-limit {report.discarded_over_limit},"
              f" inexact {report.discarded_inexact},"
              f" sampling failures {report.sampling_failures})")
    return 0


def cmd_exec(args) -> int:
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    out: list[QueryGraph] = []
    inexact = 0
    for q in queries:
        res = count_solutions(store, q, limit=args.limit, timeout=args.timeout)
        if res.exact:
            out.append(with_cardinality(q, res.value))
        else:
            inexact += 1
    write_corpus(out, args.out)
    print(f"counted {len(out)} of {len(queries)} queries -> {args.out}")
    if inexact:
        print(f"dropped {inexact} queries without an exact count")
    return 0


def cmd_train_embeddings(args) -> int:
    store = TripleStore.load(args.store)
    seed = _resolve_seed(args.seed)
    if args.all_atoms:
        entities = [store.atom(i) for i in store.entity_ids()]
    else:
        if args.corpus is None:
            raise UsageError("train-embeddings needs --corpus, or --all-atoms")
        entities = _corpus_entities(store, read_corpus(args.corpus))
    if not entities:
        raise DataError("no walk start entities found")
    walks = generate_walks(store, entities, args.walks, args.depth,
                           rng_for(seed, STAGE_WALKS),
                           bidirectional=args.bidirectional)
    table = train_skipgram(walks, dim=args.dim, window=args.window,
                           negatives=args.negatives, epochs=args.epochs,
                           rng=seed)
    sidecar = save_embeddings(table, args.out, store)
    print(f"trained {len(table)} embeddings (dim {table.dim})"
          f" from {len(walks)} walks -> {args.out}, {sidecar}")
    trace = table.loss_trace
    if trace:
        print(f"skip-gram loss: {trace[0]:.4f} -> {trace[-1]:.4f}"
              f" over {len(trace)} epochs")
    return 0


def cmd_train_gnce(args) -> int:
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    usable = _trainable(queries)
    if not usable:
        raise UsageError("no queries with cardinality >= 1 to train on;"
                         " run exec first")
    table = load_embeddings(args.embeddings, store)
    seed = _resolve_seed(args.seed)
    input_dim = table.dim + 1
    config = GnceConfig(input_dim=input_dim,
                        hidden_dim=args.hidden if args.hidden else input_dim,
                        message=args.message.replace("-", "_"),
                        featurization="embeddings",
                        epochs=args.epochs, batch_size=args.batch,
                        lr=args.lr, seed=seed)
    model = GnceModel(config)
    feat = embedding_featurizer(table, store.occ, model.unseen_vector)

    def report_epoch(epoch: int, loss: float) -> None:
        print(f"epoch {epoch + 1}/{config.epochs}: loss {loss:.6f}", flush=True)

    model.fit(usable, feat, progress=report_epoch)
    model.save(args.out)
    dropped = len(queries) - len(usable)
    print(f"trained on {len(usable)} queries ({dropped} dropped),"
          f" {model.param_count()} parameters -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = GnceModel.load(args.model)
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    feat = _featurizer_for(model, store, args.embeddings)
    estimates = model.predict(queries, feat)
    records = []
    for i, (q, est) in enumerate(zip(queries, estimates)):
        rec: dict = {"index": i, "estimate": float(est)}
        if q.true_cardinality is not None:
            rec["true_cardinality"] = q.true_cardinality
        records.append(rec)
    _write_json(args.out, {"model": str(args.model),
                           "message": model.config.message,
                           "n": len(records), "estimates": records})
    print(f"predicted {len(records)} queries -> {args.out}")
    return 0


def cmd_baseline(args) -> int:
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    estimator = _baseline_estimator(args.method, store, args.runs,
                                    _resolve_seed(args.seed))
    records = []
    skipped = 0
    for i, q in enumerate(queries):
        rec: dict = {"index": i}
        if q.true_cardinality is not None:
            rec["true_cardinality"] = q.true_cardinality
        try:
            rec["estimate"] = float(estimator.estimate(q))
        except EstimatorError as exc:
            rec["estimate"] = None
            rec["skipped"] = str(exc)
            skipped += 1
        records.append(rec)
    _write_json(args.out, {"method": args.method, "n": len(records),
                           "estimates": records})
    print(f"estimated {len(records) - skipped} of {len(records)}"
          f" queries -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    if (args.model is None) == (args.method is None):
        raise UsageError("evaluate needs exactly one of --model or --method")
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    if args.model is not None:
        model = GnceModel.load(args.model)
        estimator = GnceEstimator(model, _featurizer_for(model, store,
                                                         args.embeddings))
    else:
        estimator = _baseline_estimator(args.method, store, args.runs,
                                        _resolve_seed(args.seed))
    report = evaluate(estimator, queries, measure_latency=not args.no_latency)
    report.write_json(args.out)
    csv_path = args.csv if args.csv else str(Path(args.out).with_suffix(".csv"))
    report.write_csv(csv_path)
    print(f"{report.name}: n {report.n_queries},"
          f" mean q {report.mean_q:.3f}, median {report.median_q:.3f},"
          f" p95 {report.p95_q:.3f} -> {args.out}, {csv_path}")
    if report.n_skipped:
        print(f"skipped {report.n_skipped} refused queries")
    return 0


def cmd_featurize(args) -> int:
    store = TripleStore.load(args.store)
    queries = read_corpus(args.queries)
    table = load_embeddings(args.embeddings, store)
    # Model-free diagnostic: the trained model owns the real unseen vector,
    # so a zero stand-in is used here.
    feat_fn = embedding_featurizer(table, store.occ,
                                   np.zeros(table.dim, dtype=np.float64))
    arrays: dict[str, np.ndarray] = {}
    n_unseen = 0
    for i, q in enumerate(queries):
        f = feat_fn(q)
        arrays[f"q{i}_nodes"] = f.node_features
        arrays[f"q{i}_edge_index"] = f.edge_index
        arrays[f"q{i}_edge_features"] = f.edge_features
        n_unseen += len(f.unseen_atoms)
    with open(args.out, "wb") as fh:
        np.savez(fh, **arrays)
    print(f"featurized {len(queries)} queries (dim {table.dim + 1},"
          f" {n_unseen} unseen atom slots) -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    store = TripleStore.load(args.store)
    train = _trainable(read_corpus(args.train))
    if not train:
        raise UsageError("no training queries with cardinality >= 1")
    test = read_corpus(args.test)
    table = load_embeddings(args.embeddings, store)
    seed = _resolve_seed(args.seed)
    arms = (("full", "tpn", "embeddings"),
            ("no-embeddings", "tpn", "binary"),
            ("undirected", "tpn_undirected", "embeddings"))
    rows = []
    for name, message, featurization in arms:
        input_dim = (args.id_width if featurization == "binary"
                     else table.dim) + 1
        config = GnceConfig(input_dim=input_dim, hidden_dim=input_dim,
                            message=message, featurization=featurization,
                            epochs=args.epochs, batch_size=args.batch,
                            lr=args.lr, seed=seed)
        model = GnceModel(config)
        if featurization == "binary":
            feat = binary_featurizer(store, id_width=args.id_width)
        else:
            feat = embedding_featurizer(table, store.occ, model.unseen_vector)
        model.fit(train, feat)
        report = evaluate(GnceEstimator(model, feat, name=name), test)
        rows.append({"arm": name, "message": message,
                     "featurization": featurization,
                     "mean_q_error": report.mean_q,
                     "median_q_error": report.median_q,
                     "p95_q_error": report.p95_q,
                     "n": report.n_queries})
        print(f"{name:>14}: mean q {report.mean_q:9.3f},"
              f" median {report.median_q:9.3f}, p95 {report.p95_q:9.3f}")
    if args.out:
        _write_json(args.out, {"arms": rows})
        print(f"comparison table -> {args.out}")
    return 0


# -- pipeline ---------------------------------------------------------------

def _load_pipeline_config(path) -> dict:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed pipeline config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataError("pipeline config must be a JSON object")
    return cfg


def _pipeline_kg(cfg: dict, seed: int, out_dir: Path) -> TripleStore:
    kg_cfg = cfg.get("kg", {})
    if "ntriples" in kg_cfg:
        with open(kg_cfg["ntriples"], encoding="utf-8") as fh:
            store = parse_ntriples(fh, strict=bool(kg_cfg.get("strict", True)))
    else:
        demo = kg_cfg.get("demo", {})
        store = generate_zipf_kg(int(demo.get("triples", 10000)),
                                 int(demo.get("entities", 2000)),
                                 int(demo.get("predicates", 50)),
                                 seed=seed)
    path = out_dir / "kg.store"
    store.save(path)
    print(f"[kg] {len(store)} triples, {store.n_atoms} atoms -> {path}")
    return store


def _pipeline_workload(cfg: dict, store: TripleStore, seed: int,
                       out_dir: Path) -> list[QueryGraph]:
    w = cfg.get("workload", {})
    shapes = w.get("shapes",
                   [{"shape": "star", "sizes": [2, 3], "count_per_size": 200}])
    seen: set[bytes] = set()
    queries: list[QueryGraph] = []
    for entry in shapes:
        if "shape" not in entry or "sizes" not in entry:
            raise DataError("workload.shapes entries need shape and sizes")
        config = SamplerConfig(
            shape=str(entry["shape"]),
            sizes=tuple(int(s) for s in entry["sizes"]),
            count_per_size=int(entry.get("count_per_size", 100)),
            p_var_subject=float(w.get("p_var_subject", 0.5)),
            p_var_object=float(w.get("p_var_object", 0.5)),
            p_var_predicate=float(w.get("p_var_predicate", 0.0)),
            max_cardinality=int(w.get("max_cardinality", 10 ** 8)),
            seed=seed)
        batch, _ = build_workload(store, config, seen_keys=seen)
        queries.extend(batch)
    if not queries:
        raise ResourceError("workload sampling produced no queries")
    path = out_dir / "corpus.json"
    write_corpus(queries, path)
    print(f"[workload] {len(queries)} queries -> {path}")
    return queries


def _pipeline_split(cfg: dict, queries: list[QueryGraph], seed: int,
                    out_dir: Path
                    ) -> tuple[list[QueryGraph], list[QueryGraph],
                               frozenset[Atom] | None]:
    s = cfg.get("split", {})
    fraction = float(s.get("test_fraction", 0.2))
    if not 0.0 < fraction < 1.0:
        raise UsageError("split.test_fraction must be in (0, 1)")
    mode = s.get("mode", "random")
    held_out: frozenset[Atom] | None = None
    if mode == "inductive":
        split = inductive_split(queries, test_fraction=fraction, seed=seed)
        train, test = list(split.train), list(split.test)
        held_out = split.held_out
        if not test:
            raise DataError(
                "inductive split is degenerate: every query shares entities "
                "with every other, nothing can be held out")
    elif mode == "random":
        n = len(queries)
        if n < 2:
            raise UsageError("need at least 2 queries to split")
        perm = rng_for(seed, STAGE_SPLIT).permutation(n)
        n_test = min(n - 1, max(1, round(fraction * n)))
        test_idx = {int(i) for i in perm[:n_test]}
        train = [queries[i] for i in range(n) if i not in test_idx]
        test = [queries[i] for i in range(n) if i in test_idx]
    else:
        raise UsageError(f"unknown split mode {mode!r}")
    write_corpus(train, out_dir / "train.json")
    write_corpus(test, out_dir / "test.json")
    extra = f", {len(held_out)} held-out entities" if held_out else ""
    print(f"[split] {len(train)} train / {len(test)} test ({mode}{extra})")
    return train, test, held_out


def _pipeline_embeddings(cfg: dict, store: TripleStore,
                         corpus: list[QueryGraph], seed: int,
                         out_dir: Path) -> EmbeddingTable:
    e = cfg.get("embeddings", {})
    scope = e.get("scope", "corpus")
    if scope == "all":
        entities = [store.atom(i) for i in store.entity_ids()]
    elif scope == "corpus":
        entities = _corpus_entities(store, corpus)
    else:
        raise UsageError(f"unknown embeddings scope {scope!r}")
    if not entities:
        raise ResourceError("no walk start entities available")
    walks = generate_walks(store, entities,
                           int(e.get("walks_per_entity", 5)),
                           int(e.get("max_depth", 4)),
                           rng_for(seed, STAGE_WALKS),
                           bidirectional=bool(e.get("bidirectional", False)))
    table = train_skipgram(walks, dim=int(e.get("dim", 100)),
                           window=int(e.get("window", 4)),
                           negatives=int(e.get("negatives", 5)),
                           epochs=int(e.get("epochs", 10)), rng=seed)
    tsv = out_dir / "embeddings.tsv"
    sidecar = save_embeddings(table, tsv, store)
    print(f"[embeddings] {len(table)} atoms, dim {table.dim}"
          f" -> {tsv}, {sidecar}")
    return table


def _pipeline_train(cfg: dict, store: TripleStore, table: EmbeddingTable,
                    train: list[QueryGraph],
                    held_out: frozenset[Atom] | None, seed: int,
                    out_dir: Path) -> tuple[GnceModel, Featurizer]:
    m = cfg.get("model", {})
    featurization = m.get("featurization", "embeddings")
    if featurization == "binary":
        input_dim = int(m.get("id_width", DEFAULT_ID_WIDTH)) + 1
    elif featurization == "embeddings":
        input_dim = table.dim + 1
    else:
        raise UsageError(f"unknown model featurization {featurization!r}")
    config = GnceConfig(input_dim=input_dim,
                        hidden_dim=int(m.get("hidden_dim", input_dim)),
                        message=str(m.get("message", "tpn")).replace("-", "_"),
                        featurization=featurization,
                        epochs=int(m.get("epochs", 50)),
                        batch_size=int(m.get("batch_size", 32)),
                        lr=float(m.get("lr", 1e-4)),
                        seed=seed)
    model = GnceModel(config)
    occ = masked_occ(store.occ, held_out) if held_out else store.occ
    if featurization == "binary":
        feat = binary_featurizer(store, occ=occ, id_width=input_dim - 1)
    else:
        use_table = table.without(held_out) if held_out else table
        feat = embedding_featurizer(use_table, occ, model.unseen_vector)
    usable = _trainable(train)
    if not usable:
        raise UsageError("no training queries with cardinality >= 1")
    history = model.fit(usable, feat)
    path = out_dir / "model.ckpt"
    model.save(path)
    print(f"[train] {len(usable)} queries, {config.epochs} epochs,"
          f" loss {history[0]:.4f} -> {history[-1]:.4f},"
          f" {model.param_count()} parameters -> {path}")
    return model, feat


def _pipeline_report(cfg: dict, store: TripleStore, model: GnceModel,
                     feat: Featurizer, train: list[QueryGraph],
                     test: list[QueryGraph], seed: int,
                     out_dir: Path) -> None:
    r = cfg.get("report", {})
    # Latency is never measured here so reruns stay byte-identical; the
    # evaluate subcommand measures it on demand.
    report = evaluate(GnceEstimator(model, feat), test, measure_latency=False)
    json_path = out_dir / "report.json"
    report.write_json(json_path)
    report.write_csv(out_dir / "report.csv")
    print(f"[report] gnce mean q {report.mean_q:.3f}"
          f" over {report.n_queries} -> {json_path}")
    for method in r.get("baselines", []):
        if method == "train-geomean":
            est = ConstantEstimator.train_geomean(_trainable(train))
        else:
            est = _baseline_estimator(method, store, int(r.get("runs", 30)),
                                      seed)
        rep = evaluate(est, test, measure_latency=False)
        rep.write_json(out_dir / f"report-{method}.json")
        rep.write_csv(out_dir / f"report-{method}.csv")
        print(f"[report] {method} mean q {rep.mean_q:.3f}"
              f" over {rep.n_queries}")


def cmd_pipeline(args) -> int:
    cfg = _load_pipeline_config(args.config)
    # Flags win over config file values.
    if args.seed is not None:
        seed = args.seed
    elif "seed" in cfg:
        seed = int(cfg["seed"])
    else:
        seed = _resolve_seed(None)
    out_dir = Path(args.out_dir if args.out_dir is not None
                   else cfg.get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    store = _pipeline_kg(cfg, seed, out_dir)
    queries = _pipeline_workload(cfg, store, seed, out_dir)
    train, test, held_out = _pipeline_split(cfg, queries, seed, out_dir)
    emb_corpus = train if held_out is not None else queries
    table = _pipeline_embeddings(cfg, store, emb_corpus, seed, out_dir)
    model, feat = _pipeline_train(cfg, store, table, train, held_out, seed,
                                  out_dir)
    _pipeline_report(cfg, store, model, feat, train, test, seed, out_dir)
    return 0


# -- parser wiring ------------------------------------------------------------

def _add_seed(sub) -> None:
    sub.add_argument("--seed", type=int, default=None,
                     help="RNG seed (default: GNCE_SEED env var, else 0)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gnce",
                     description="Cardinality estimation toolkit for"
                                 " knowledge graphs")
    parser.add_argument("--json-errors", action="store_true",
                        help="emit errors as JSON on stderr")
    parser.add_argument("--threads", type=int, default=None, metavar="N",
                        help="cap numeric worker threads")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json-errors", action="store_true",
                        default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        metavar="N", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="<command>",
                                required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="parse N-Triples into an indexed store")
    p.add_argument("--input", required=True, help="N-Triples file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", action="store_true",
                   help="fail on the first malformed line (default)")
    g.add_argument("--lenient", action="store_true",
                   help="skip malformed lines")
    p.add_argument("--out", required=True, help="store file to write")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("stats", parents=[common],
                       help="print store statistics, or generate a demo KG")
    p.add_argument("--store", help="store file to describe")
    p.add_argument("--gen-demo", action="store_true",
                   help="generate a synthetic Zipf-skewed KG")
    p.add_argument("--triples", type=int, default=10000)
    p.add_argument("--entities", type=int, default=2000)
    p.add_argument("--predicates", type=int, default=50)
    p.add_argument("--out", help="store file to write with --gen-demo")
    _add_seed(p)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("gen-queries", parents=[common],
                       help="sample a query workload with exact cardinalities")
    p.add_argument("--store", required=True)
    p.add_argument("--shape", required=True,
                   choices=("star", "path", "flower", "snowflake"))
    p.add_argument("--sizes", required=True,
                   help="comma-separated pattern counts, e.g. 2,3,5")
    p.add_argument("--count", type=int, default=100,
                   help="queries per size (default 100)")
    p.add_argument("--p-var-subject", type=float, default=0.5)
    p.add_argument("--p-var-object", type=float, default=0.5)
    p.add_argument("--p-var-predicate", type=float, default=0.0)
    p.add_argument("--max-cardinality", type=int, default=10 ** 8)
    p.add_argument("--out", required=True, help="corpus JSON to write")
    _add_seed(p)
    p.set_defaults(handler=cmd_gen_queries)

    p = sub.add_parser("exec", parents=[common],
                       help="attach exact cardinalities to a corpus")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True, help="corpus JSON to count")
    p.add_argument("--limit", type=int, default=None,
                   help="stop counting a query at this many solutions")
    p.add_argument("--timeout", type=float, default=None,
                   help="per-query counting timeout in seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_exec)

    p = sub.add_parser("train-embeddings", parents=[common],
                       help="train skip-gram embeddings from random walks")
    p.add_argument("--store", required=True)
    p.add_argument("--corpus",
                   help="corpus JSON whose bound entities seed the walks")
    p.add_argument("--all-atoms", action="store_true",
                   help="walk from every store entity instead of the corpus")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--walks", type=int, default=5,
                   help="walks per start entity")
    p.add_argument("--depth", type=int, default=4, help="max hops per walk")
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--bidirectional", action="store_true",
                   help="also walk against edge direction")
    p.add_argument("--out", required=True, help="embeddings TSV to write")
    _add_seed(p)
    p.set_defaults(handler=cmd_train_embeddings)

    p = sub.add_parser("train-gnce", parents=[common],
                       help="train the cardinality regressor")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True,
                   help="training corpus with cardinalities")
    p.add_argument("--embeddings", required=True,
                   help="embeddings TSV or binary sidecar")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--message", choices=_MESSAGE_CHOICES, default="tpn")
    p.add_argument("--hidden", type=int, default=None,
                   help="hidden width (default: input width)")
    p.add_argument("--out", required=True, help="checkpoint to write")
    _add_seed(p)
    p.set_defaults(handler=cmd_train_gnce)

    p = sub.add_parser("predict", parents=[common],
                       help="estimate cardinalities with a trained model")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--queries", required=True)
    p.add_argument("--store", required=True,
                   help="store the queries refer to")
    p.add_argument("--embeddings",
                   help="embeddings file (embedding-featurized checkpoints)")
    p.add_argument("--out", required=True, help="predictions JSON")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("baseline", parents=[common],
                       help="estimate with a classical baseline")
    p.add_argument("--method", required=True,
                   choices=("cset", "wanderjoin"))
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--runs", type=int, default=30,
                   help="random walks per query (wanderjoin)")
    p.add_argument("--out", required=True, help="predictions JSON")
    _add_seed(p)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score an estimator on a labeled corpus")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--method", choices=("cset", "wanderjoin"),
                   help="baseline method instead of a model")
    p.add_argument("--queries", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--no-latency", action="store_true",
                   help="skip per-query latency measurement")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", help="summary CSV (default: report path with .csv)")
    _add_seed(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("featurize", parents=[common],
                       help="dump query tensors for inspection")
    p.add_argument("--queries", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="npz archive to write")
    p.set_defaults(handler=cmd_featurize)

    p = sub.add_parser("ablate", parents=[common],
                       help="train and compare the ablation arms")
    p.add_argument("--store", required=True)
    p.add_argument("--train", required=True,
                   help="training corpus with cardinalities")
    p.add_argument("--test", required=True,
                   help="test corpus with cardinalities")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--id-width", type=int, default=DEFAULT_ID_WIDTH,
                   help="bits for the binary-id arm")
    p.add_argument("--out", help="comparison table JSON")
    _add_seed(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("pipeline", parents=[common],
                       help="run every stage from one JSON config")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--out-dir", default=None,
                   help="artifact directory (overrides config)")
    _add_seed(p)
    p.set_defaults(handler=cmd_pipeline)

    return parser


def _fail(exc: BaseException, code: int, json_errors: bool) -> int:
    if json_errors:
        payload = {"error": {"type": type(exc).__name__,
                             "message": str(exc), "exit_code": code}}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args_list = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in args_list
    try:
        args = _build_parser().parse_args(args_list)
        if args.threads is not None:
            _cap_threads(args.threads)
        return args.handler(args)
    except UsageError as exc:
        return _fail(exc, 1, json_errors)
    except OSError as exc:
        return _fail(exc, 2, json_errors)
    except DataError as exc:
        return _fail(exc, 2, json_errors)
    except (ResourceError, MemoryError) as exc:
        return _fail(exc, 3, json_errors)


if __name__ == "__main__":
    sys.exit(main())
