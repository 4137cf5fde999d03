"""Cardinality estimation for knowledge-graph conjunctive queries.

The package covers the full workflow: ingest N-Triples into an indexed
store, sample query workloads with exact ground-truth counts, train
skip-gram entity embeddings over random walks, train a message-passing
regressor on log-cardinalities, and score everything against classical
baselines with q-error reports.
"""

from .errors import (CanonicalisationError, CheckpointError,
                     ConfigMismatchError, CorpusFormatError, DataError,
                     EmbeddingFormatError, EstimatorError, GnceError,
                     InvalidQueryError, NTriplesParseError, ResourceError,
                     SamplingExhausted, StoreFormatError, UsageError)
from .kg import (Atom, ParseIssue, Triple, TripleStore, iri, literal,
                 parse_ntriples, serialize_ntriples, skolem)
from .queries import (QueryAtom, QueryGraph, TriplePattern, bound,
                      canonical_form, pattern, read_corpus, var,
                      with_cardinality, write_corpus)
from .matcher import CountResult, count_solutions, enumerate_solutions
from .sampler import SamplerConfig, WorkloadReport, build_workload
from .synth import generate_zipf_kg, two_community_kg
from .embeddings import (EmbeddingTable, Walk, generate_walks,
                         load_embeddings, save_embeddings, train_skipgram)
from .featurizer import (QueryFeaturization, binary_featurizer,
                         embedding_featurizer, featurize, featurize_binary,
                         masked_occ)
from .model import GnceConfig, GnceModel, pack_batch
from .baselines import CharacteristicSets, WanderJoin, WanderJoinResult
from .evaluation import (ConstantEstimator, CsetEstimator, EvalReport,
                         GnceEstimator, InductiveSplit, WanderJoinEstimator,
                         bucket_of, evaluate, inductive_split, q_error)
from .seeding import rng_for

__version__ = "0.1.0"

__all__ = [
    "Atom", "CanonicalisationError", "CharacteristicSets", "CheckpointError",
    "ConfigMismatchError", "ConstantEstimator", "CorpusFormatError",
    "CountResult", "CsetEstimator", "DataError", "EmbeddingFormatError",
    "EmbeddingTable", "EstimatorError", "EvalReport", "GnceConfig",
    "GnceError", "GnceEstimator", "GnceModel", "InductiveSplit",
    "InvalidQueryError", "NTriplesParseError", "ParseIssue",
    "QueryAtom", "QueryFeaturization", "QueryGraph", "ResourceError",
    "SamplerConfig", "SamplingExhausted", "StoreFormatError", "Triple",
    "TriplePattern", "TripleStore", "UsageError", "Walk", "WanderJoin",
    "WanderJoinEstimator", "WanderJoinResult", "WorkloadReport",
    "binary_featurizer", "bound", "bucket_of", "build_workload",
    "canonical_form", "count_solutions", "embedding_featurizer",
    "enumerate_solutions", "evaluate", "featurize", "featurize_binary",
    "generate_walks", "generate_zipf_kg", "inductive_split", "iri",
    "literal", "load_embeddings", "masked_occ", "pack_batch",
    "parse_ntriples", "pattern", "q_error", "read_corpus", "rng_for",
    "save_embeddings", "serialize_ntriples", "skolem", "train_skipgram",
    "two_community_kg", "var", "with_cardinality", "write_corpus",
]
