"""Conflict-aware context selection for retrieval-augmented generation.

Selects a small, relevant, mutually consistent set of context sentences
for a query by running greedy MAP inference over a determinantal point
process whose kernel blends cosine similarity, NLI-derived conflict, and
query relevance.
"""

from .errors import (
    AsymmetryError,
    BudgetExceeded,
    DegenerateEmbedding,
    DimensionMismatch,
    EmptyPool,
    InvalidHyperparameter,
    InvalidProbability,
    InvalidTask,
    NumericalError,
    ProtocolViolation,
    ProviderUnavailable,
    SingularSubmatrix,
    SmartSelectError,
)
from .kernel import (
    DEFAULT_JITTER_LADDER,
    DEFAULT_PSD_TOL,
    DppKernel,
    SpectralReport,
    build_kernel,
    build_weighted_similarity,
    eigenvalue_spectrum,
    kernel_from_relations,
    spectral_check,
    subset_log_det,
    subset_log_probability,
)
from .pipeline import (
    ContextSentence,
    PipelineOutput,
    QueryTask,
    TaskFailure,
    dedup_sentences,
    load_matrices,
    pre_rank,
    run_batch,
    run_task,
    save_matrices,
    segment_sentences,
    split_sentences,
    to_jsonl_line,
)
from .providers import (
    FixtureNliProvider,
    HashEmbeddingProvider,
    HttpEmbeddingClient,
    HttpNliClient,
    HttpRetrievalClient,
    NliJudgment,
    ProviderBundle,
    ProviderEndpoint,
    RetrievedDocument,
    StaticRetrievalProvider,
)
from .relmat import (
    RELEVANCE_FLOOR,
    DirectionalConflict,
    Embedding,
    RelationMatrices,
    build_similarity_matrix,
    cosine_similarity,
    query_relevance,
    symmetrize_conflict,
)
from .selector import (
    DEFAULT_SINGULAR_TOL,
    SelectionConfig,
    SelectionResult,
    beta_objective,
    exhaustive_best_subset,
    greedy_select,
    naive_greedy_select,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetryError",
    "BudgetExceeded",
    "ContextSentence",
    "DEFAULT_JITTER_LADDER",
    "DEFAULT_PSD_TOL",
    "DEFAULT_SINGULAR_TOL",
    "DegenerateEmbedding",
    "DimensionMismatch",
    "DirectionalConflict",
    "DppKernel",
    "Embedding",
    "EmptyPool",
    "FixtureNliProvider",
    "HashEmbeddingProvider",
    "HttpEmbeddingClient",
    "HttpNliClient",
    "HttpRetrievalClient",
    "InvalidHyperparameter",
    "InvalidProbability",
    "InvalidTask",
    "NliJudgment",
    "NumericalError",
    "PipelineOutput",
    "ProtocolViolation",
    "ProviderBundle",
    "ProviderEndpoint",
    "ProviderUnavailable",
    "QueryTask",
    "RELEVANCE_FLOOR",
    "RelationMatrices",
    "RetrievedDocument",
    "SelectionConfig",
    "SelectionResult",
    "SingularSubmatrix",
    "SmartSelectError",
    "SpectralReport",
    "StaticRetrievalProvider",
    "TaskFailure",
    "beta_objective",
    "build_kernel",
    "build_similarity_matrix",
    "build_weighted_similarity",
    "cosine_similarity",
    "dedup_sentences",
    "eigenvalue_spectrum",
    "exhaustive_best_subset",
    "greedy_select",
    "kernel_from_relations",
    "load_matrices",
    "naive_greedy_select",
    "pre_rank",
    "query_relevance",
    "run_batch",
    "run_task",
    "save_matrices",
    "segment_sentences",
    "spectral_check",
    "split_sentences",
    "subset_log_det",
    "subset_log_probability",
    "symmetrize_conflict",
    "to_jsonl_line",
]
