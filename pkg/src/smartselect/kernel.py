"""Conflict-weighted similarity and the relevance-scaled DPP kernel.

The weighted similarity multiplies cosine similarity element-wise by a
conflict-driven decay exp(-gamma * (1 - c_ij)), leaving the diagonal
untouched.  The kernel L scales that matrix by relevance on both sides:
L = Diag(r) @ K_weighted @ Diag(r).  Log-determinant and subset
probability queries on L rescue borderline factorizations with a small
diagonal jitter ladder; the selection layer deliberately does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AsymmetryError,
    DimensionMismatch,
    InvalidHyperparameter,
    InvalidProbability,
    NumericalError,
    SingularSubmatrix,
)
from .relmat import RELEVANCE_FLOOR, SYMMETRY_TOL, RelationMatrices, _as_float_matrix

# Jitter magnitudes tried, in order, when a Cholesky factorization of a
# kernel submatrix fails.  Values are multiples of the identity.
DEFAULT_JITTER_LADDER = (1e-10, 1e-8, 1e-6)

# An eigenvalue above -DEFAULT_PSD_TOL counts as non-negative.
DEFAULT_PSD_TOL = 1e-8

# Largest acceptable imaginary part (relative to spectral radius) when a
# general, possibly asymmetric matrix is expected to have a real spectrum.
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    """Outcome of a symmetric PSD check."""

    min_eigenvalue: float
    is_psd: bool
    tol_psd: float


def spectral_check(matrix: np.ndarray, tol_psd: float = DEFAULT_PSD_TOL) -> SpectralReport:
    """Minimum eigenvalue and PSD verdict for a symmetric matrix.

    Raises AsymmetryError when the input is not symmetric within
    tolerance; use eigenvalue_spectrum for general matrices.
    """
    if tol_psd < 0.0:
        raise InvalidHyperparameter(f"tol_psd must be non-negative, got {tol_psd!r}")
    m = _as_float_matrix(matrix, "matrix")
    if not np.allclose(m, m.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise AsymmetryError("spectral_check requires a symmetric matrix")
    min_eig = float(np.linalg.eigvalsh(m)[0])
    return SpectralReport(min_eigenvalue=min_eig, is_psd=min_eig >= -tol_psd, tol_psd=tol_psd)


def eigenvalue_spectrum(matrix: np.ndarray) -> np.ndarray:
    """Ascending real eigenvalues of a general square matrix.

    Intended for diagnostics on matrices that are not necessarily
    symmetric but are expected to have a real spectrum; raises
    NumericalError when eigenvalues carry a non-negligible imaginary part.
    """
    m = _as_float_matrix(matrix, "matrix")
    eigs = np.linalg.eigvals(m)
    scale = max(float(np.max(np.abs(eigs))), 1.0)
    if float(np.max(np.abs(eigs.imag))) > _IMAG_TOL * scale:
        raise NumericalError("matrix has genuinely complex eigenvalues")
    return np.sort(eigs.real)


def build_weighted_similarity(k_sim: np.ndarray, conflict: np.ndarray, gamma: float) -> np.ndarray:
    """Down-weight similarity between non-conflicting pairs.

    Off-diagonal entries become k_sim_ij * exp(-gamma * (1 - c_ij)); the
    diagonal is copied from k_sim unchanged.  Pairs in open conflict
    (c_ij = 1) keep their full similarity, so the determinant objective
    suppresses co-selecting them just as it suppresses near-duplicates,
    while agreeing pairs (c_ij = 0) are decayed by exp(-gamma) and may be
    picked together.  gamma = 0 reproduces k_sim bitwise.
    """
    if not np.isfinite(gamma) or gamma < 0.0:
        raise InvalidHyperparameter(f"gamma must be a non-negative real, got {gamma!r}")
    ks = _as_float_matrix(k_sim, "k_sim")
    c = _as_float_matrix(conflict, "conflict")
    if ks.shape != c.shape:
        raise DimensionMismatch(f"k_sim shape {ks.shape} does not match conflict shape {c.shape}")
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise InvalidProbability("conflict entries must lie in [0, 1]")
    weighted = ks * np.exp(-gamma * (1.0 - c))
    diag = np.diag_indices_from(weighted)
    weighted[diag] = ks[diag]
    return weighted


class DppKernel:
    """Relevance-scaled kernel plus cached normalization state.

    Construct through build_kernel or kernel_from_relations.  Arrays are
    exposed read-only; ``jitter`` reports the largest diagonal shift any
    determinant query on this kernel has needed so far (0.0 until a rescue
    happens).
    """

    def __init__(
        self,
        k_weighted: np.ndarray,
        relevance: np.ndarray,
        l_matrix: np.ndarray,
        gamma: float | None,
        jitter_ladder: tuple[float, ...],
    ) -> None:
        self._k_weighted = k_weighted
        self._relevance = relevance
        self._l = l_matrix
        self.gamma = gamma
        self.jitter_ladder = jitter_ladder
        self._jitter_used = 0.0
        self._log_norm: float | None = None

    @property
    def n(self) -> int:
        return int(self._l.shape[0])

    @property
    def k_weighted(self) -> np.ndarray:
        return self._k_weighted

    @property
    def relevance(self) -> np.ndarray:
        return self._relevance

    @property
    def l(self) -> np.ndarray:
        return self._l

    @property
    def jitter(self) -> float:
        return self._jitter_used

    def _note_jitter(self, used: float) -> None:
        if used > self._jitter_used:
            self._jitter_used = used

    def log_normalizer(self) -> float:
        """log det(L + I), cached after the first call."""
        if self._log_norm is None:
            value, used = _ladder_logdet(
                self._l + np.eye(self.n), self.jitter_ladder, "L + I"
            )
            self._note_jitter(used)
            self._log_norm = value
        return self._log_norm


def build_kernel(
    k_weighted: np.ndarray,
    relevance: np.ndarray,
    gamma: float | None = None,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> DppKernel:
    """Assemble L = Diag(r) @ K_weighted @ Diag(r).

    The product is formed as K_weighted * outer(r, r), which preserves
    bitwise symmetry whenever K_weighted is bitwise symmetric.  Relevance
    entries must already be clamped into [RELEVANCE_FLOOR, 1].
    """
    kw = _as_float_matrix(k_weighted, "k_weighted")
    r = np.asarray(relevance, dtype=np.float64)
    if r.ndim != 1 or r.size != kw.shape[0]:
        raise DimensionMismatch(f"relevance shape {r.shape} does not match kernel order {kw.shape[0]}")
    if not np.all(np.isfinite(r)):
        raise NumericalError("relevance contains non-finite entries")
    if np.any(r < RELEVANCE_FLOOR) or np.any(r > 1.0):
        raise InvalidProbability(f"relevance entries must lie in [{RELEVANCE_FLOOR}, 1]")
    if not np.allclose(kw, kw.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise AsymmetryError("k_weighted must be symmetric")
    ladder = tuple(float(x) for x in jitter_ladder)
    if any(x <= 0.0 for x in ladder) or list(ladder) != sorted(ladder):
        raise InvalidHyperparameter("jitter ladder must be positive and ascending")
    if gamma is not None and (not np.isfinite(gamma) or gamma < 0.0):
        raise InvalidHyperparameter(f"gamma must be a non-negative real, got {gamma!r}")
    kw = kw.copy()
    r = r.copy()
    l_matrix = kw * np.outer(r, r)
    for arr in (kw, r, l_matrix):
        arr.setflags(write=False)
    return DppKernel(kw, r, l_matrix, gamma, ladder)


def kernel_from_relations(
    relations: RelationMatrices,
    gamma: float,
    jitter_ladder: Sequence[float] = DEFAULT_JITTER_LADDER,
) -> DppKernel:
    """Weight the similarity by conflict, then scale by relevance."""
    weighted = build_weighted_similarity(relations.k_sim, relations.conflict, gamma)
    return build_kernel(weighted, relations.relevance, gamma=gamma, jitter_ladder=jitter_ladder)


def _ladder_logdet(matrix: np.ndarray, ladder: tuple[float, ...], label: str) -> tuple[float, float]:
    """Cholesky log-determinant with escalating diagonal jitter.

    Returns (logdet, jitter_used).  Raises SingularSubmatrix once the
    ladder is exhausted.
    """
    n = matrix.shape[0]
    for delta in (0.0, *ladder):
        shifted = matrix if delta == 0.0 else matrix + delta * np.eye(n)
        try:
            factor = np.linalg.cholesky(shifted)
        except np.linalg.LinAlgError:
            continue
        return 2.0 * float(np.sum(np.log(np.diag(factor)))), delta
    raise SingularSubmatrix(
        f"{label} is numerically singular even after jitter up to {ladder[-1]:g}"
    )


def _validate_subset(subset: Sequence[int], n: int) -> list[int]:
    idx = [int(i) for i in subset]
    for i in idx:
        if not (0 <= i < n):
            raise DimensionMismatch(f"subset index {i} is out of range for pool size {n}")
    if len(set(idx)) != len(idx):
        raise DimensionMismatch(f"subset contains repeated indices: {idx}")
    return idx


def subset_log_det(kernel: DppKernel, subset: Sequence[int]) -> float:
    """log det of the kernel submatrix L_S; 0.0 for the empty subset."""
    idx = _validate_subset(subset, kernel.n)
    if not idx:
        return 0.0
    sub = kernel.l[np.ix_(idx, idx)]
    value, used = _ladder_logdet(sub, kernel.jitter_ladder, f"L[{idx}]")
    kernel._note_jitter(used)
    return value


def subset_log_probability(kernel: DppKernel, subset: Sequence[int]) -> float:
    """Log probability of drawing exactly this subset from the DPP.

    Computed as sum_i log(r_i^2) + log det(K_weighted_S) - log det(L + I),
    which equals log det(L_S) - log det(L + I) but stays well scaled when
    relevance values are tiny.  The empty subset gets -log det(L + I).
    """
    idx = _validate_subset(subset, kernel.n)
    log_norm = kernel.log_normalizer()
    if not idx:
        return -log_norm
    rel_term = float(np.sum(np.log(np.square(kernel.relevance[idx]))))
    sub = kernel.k_weighted[np.ix_(idx, idx)]
    value, used = _ladder_logdet(sub, kernel.jitter_ladder, f"K_weighted[{idx}]")
    kernel._note_jitter(used)
    return rel_term + value - log_norm
