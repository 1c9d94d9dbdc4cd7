"""Relation structures between a query and its candidate contexts.

Builds the three inputs the kernel layer consumes: a cosine similarity
matrix over context embeddings, a symmetrized pairwise conflict matrix
derived from directional contradiction probabilities, and a clamped
query-relevance vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AsymmetryError,
    DegenerateEmbedding,
    DimensionMismatch,
    EmptyPool,
    InvalidProbability,
    NumericalError,
)

# Relevance scores are clamped into [RELEVANCE_FLOOR, 1].  The selection
# objective takes log(r_i^2), so zero or negative scores would produce
# -inf or flip kernel signs.
RELEVANCE_FLOOR = 1e-6

# Tolerance for symmetry validation on externally supplied matrices.
SYMMETRY_TOL = 1e-9


def _as_float_matrix(values: object, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Embedding:
    """A dense real-valued vector for one text unit."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch(f"embedding must be a non-empty 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericalError("embedding contains non-finite entries")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def normalized(self) -> "Embedding":
        """Unit-norm copy; raises DegenerateEmbedding on a zero vector."""
        n = self.norm()
        if n == 0.0:
            raise DegenerateEmbedding("cannot normalize a zero vector")
        return Embedding(self.values / n)


@dataclass(frozen=True)
class DirectionalConflict:
    """Contradiction probabilities for one ordered context pair, both ways."""

    p_ij: float
    p_ji: float

    def __post_init__(self) -> None:
        for label, p in (("p_ij", self.p_ij), ("p_ji", self.p_ji)):
            if not (0.0 <= p <= 1.0):
                raise InvalidProbability(f"{label}={p!r} is outside [0, 1]")

    def symmetrized(self) -> float:
        """Average of the two directions; the order-free conflict score."""
        return (self.p_ij + self.p_ji) / 2.0


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of the angle between two embeddings.

    Raises DimensionMismatch on unequal dimensions and DegenerateEmbedding
    when either vector has zero norm.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    na = a.norm()
    nb = b.norm()
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbedding("cosine similarity is undefined for zero vectors")
    return float(np.dot(a.values, b.values) / (na * nb))


def build_similarity_matrix(embeddings: Sequence[Embedding]) -> np.ndarray:
    """Pairwise cosine similarity matrix over a pool of embeddings.

    The result is exactly symmetric with a unit diagonal.  All embeddings
    must share one dimension and have non-zero norm.
    """
    if len(embeddings) == 0:
        raise EmptyPool("cannot build a similarity matrix from zero embeddings")
    dims = {e.dim for e in embeddings}
    if len(dims) != 1:
        raise DimensionMismatch(f"embeddings have mixed dimensions: {sorted(dims)}")
    mat = np.stack([e.values for e in embeddings])
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateEmbedding(f"embedding at index {bad} has zero norm")
    unit = mat / norms[:, None]
    k_sim = unit @ unit.T
    # Gram products are symmetric only up to rounding; enforce it exactly
    # and pin the diagonal so downstream determinant identities hold.
    k_sim = (k_sim + k_sim.T) / 2.0
    np.fill_diagonal(k_sim, 1.0)
    return k_sim


def symmetrize_conflict(directional: np.ndarray) -> np.ndarray:
    """Average a directional contradiction matrix with its transpose.

    Input entries are probabilities in [0, 1]; the diagonal of the result
    is forced to zero (a context does not conflict with itself).  Applying
    the operation to an already symmetric matrix is a bitwise no-op off
    the diagonal because (x + x) / 2 == x in IEEE arithmetic.
    """
    d = _as_float_matrix(directional, "directional conflict matrix")
    if np.any(d < 0.0) or np.any(d > 1.0):
        raise InvalidProbability("conflict probabilities must lie in [0, 1]")
    sym = (d + d.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    return sym


def query_relevance(query: Embedding, contexts: Sequence[Embedding]) -> np.ndarray:
    """Cosine relevance of each context to the query, clamped to the floor.

    Clamping maps non-positive cosines to RELEVANCE_FLOOR and caps at 1,
    keeping every score usable under log(r^2).
    """
    if len(contexts) == 0:
        raise EmptyPool("cannot score relevance for zero contexts")
    scores = np.array([cosine_similarity(query, c) for c in contexts], dtype=np.float64)
    return np.clip(scores, RELEVANCE_FLOOR, 1.0)


@dataclass(frozen=True)
class RelationMatrices:
    """Validated bundle of similarity, conflict, and relevance for one pool.

    Invariants checked on construction: both matrices are square with the
    same order, k_sim is symmetric with unit diagonal, conflict is symmetric
    with zero diagonal and entries in [0, 1], and relevance has matching
    length with entries in [RELEVANCE_FLOOR, 1].
    """

    k_sim: np.ndarray
    conflict: np.ndarray
    relevance: np.ndarray

    def __post_init__(self) -> None:
        k_sim = _as_float_matrix(self.k_sim, "k_sim")
        conflict = _as_float_matrix(self.conflict, "conflict")
        relevance = np.asarray(self.relevance, dtype=np.float64)
        n = k_sim.shape[0]
        if conflict.shape != (n, n):
            raise DimensionMismatch(f"conflict shape {conflict.shape} does not match k_sim order {n}")
        if relevance.ndim != 1 or relevance.size != n:
            raise DimensionMismatch(f"relevance shape {relevance.shape} does not match pool size {n}")
        if not np.all(np.isfinite(relevance)):
            raise NumericalError("relevance contains non-finite entries")
        if not np.allclose(k_sim, k_sim.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise AsymmetryError("k_sim must be symmetric")
        if not np.array_equal(np.diag(k_sim), np.ones(n)):
            raise NumericalError("k_sim diagonal must be exactly 1")
        if not np.allclose(conflict, conflict.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise AsymmetryError("conflict matrix must be symmetric")
        if np.any(np.diag(conflict) != 0.0):
            raise NumericalError("conflict diagonal must be exactly 0")
        if np.any(conflict < 0.0) or np.any(conflict > 1.0):
            raise InvalidProbability("conflict entries must lie in [0, 1]")
        if np.any(relevance < RELEVANCE_FLOOR) or np.any(relevance > 1.0):
            raise InvalidProbability(
                f"relevance entries must lie in [{RELEVANCE_FLOOR}, 1]; clamp before constructing"
            )
        for name, arr in (("k_sim", k_sim), ("conflict", conflict), ("relevance", relevance)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        """Pool size."""
        return int(self.k_sim.shape[0])
