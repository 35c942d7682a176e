"""Contextualized exact lexical match retrieval over inverted lists.

Documents and queries are encoded into one dense vector per token plus an
optional whole-sequence vector.  Scoring restricts vector matching to
token occurrences that share a surface form, so query-time work touches
only the inverted lists of the query's own tokens; the whole-sequence dot
product adds soft semantic matching on top.  A BM25 baseline, brute-force
scoring oracles, a contrastive loss, and TREC-style evaluation round out
the toolkit.
"""
from .bm25 import (
    Bm25Index,
    Bm25Params,
    bm25_score_pair,
    bm25_search,
    build_bm25_index,
    sample_bm25_negatives,
)
from .core import (
    CoilConfig,
    Document,
    EncodedDocument,
    EncodedQuery,
    FormatError,
    MODES,
    ProjectionParams,
    Query,
    RankedList,
    TokenSeq,
    ValidationError,
    as_score,
    load_documents,
    load_queries,
    validate_config,
)
from .encoding import (
    StubContextualizerConfig,
    TokenizerConfig,
    UNKNOWN_TOKEN_ID,
    build_vocab,
    contextualize,
    encode_document,
    encode_query,
    ingest_encoded,
    seeded_projection,
    tokenize,
    write_encoded,
)
from .evaluation import (
    Qrels,
    evaluate,
    mrr_at_k,
    ndcg_at_k,
    read_qrels,
    read_run,
    recall_at_k,
    write_run,
)
from .index import (
    ChecksumError,
    CoilIndex,
    IndexStats,
    InvertedList,
    build_index,
    index_stats,
    load_index,
    save_index,
)
from .loss import (
    TrainingExample,
    batch_loss,
    nll_loss,
    read_training_examples,
    write_training_examples,
)
from .retrieval import (
    SearchInstrumentation,
    brute_force_search,
    score_all_to_all_pair,
    score_full_pair,
    score_tok_pair,
    search,
    search_many,
)

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "Bm25Params",
    "ChecksumError",
    "CoilConfig",
    "CoilIndex",
    "Document",
    "EncodedDocument",
    "EncodedQuery",
    "FormatError",
    "IndexStats",
    "InvertedList",
    "MODES",
    "ProjectionParams",
    "Qrels",
    "Query",
    "RankedList",
    "SearchInstrumentation",
    "StubContextualizerConfig",
    "TokenSeq",
    "TokenizerConfig",
    "TrainingExample",
    "UNKNOWN_TOKEN_ID",
    "ValidationError",
    "as_score",
    "batch_loss",
    "bm25_score_pair",
    "bm25_search",
    "brute_force_search",
    "build_bm25_index",
    "build_index",
    "build_vocab",
    "contextualize",
    "encode_document",
    "encode_query",
    "evaluate",
    "index_stats",
    "ingest_encoded",
    "load_documents",
    "load_index",
    "load_queries",
    "mrr_at_k",
    "ndcg_at_k",
    "nll_loss",
    "read_qrels",
    "read_run",
    "read_training_examples",
    "recall_at_k",
    "sample_bm25_negatives",
    "save_index",
    "score_all_to_all_pair",
    "score_full_pair",
    "score_tok_pair",
    "search",
    "search_many",
    "seeded_projection",
    "tokenize",
    "validate_config",
    "write_encoded",
    "write_run",
    "write_training_examples",
]
