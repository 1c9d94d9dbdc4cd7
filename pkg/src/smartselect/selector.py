"""Greedy MAP selection under the beta-weighted relevance/diversity objective.

The objective for a subset Y is

    f(Y) = beta * sum_{i in Y} log(r_i^2) + (1 - beta) * log det(K_weighted_Y)

and greedy selection repeatedly adds the candidate with the largest
marginal gain f(Y + {i}) - f(Y).  greedy_select maintains an incremental
Cholesky factor so each round costs O(n * |Y|) instead of refactorizing;
naive_greedy_select recomputes the objective from scratch per candidate
and exists as a slow oracle.  Both use strict factorizations: a candidate
whose conditional variance falls below sing_tol gets a gain of -inf
rather than a jitter rescue, so exact duplicates are never co-selected.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    EmptyPool,
    InvalidHyperparameter,
    SingularSubmatrix,
)
from .kernel import DppKernel, _validate_subset

# A Cholesky pivot (conditional variance) below this marks the candidate
# submatrix as numerically singular.
DEFAULT_SINGULAR_TOL = 1e-12

# Upper bound on subsets exhaustive_best_subset will score.
EXHAUSTIVE_BUDGET = 1_000_000

TIE_BREAK_LOWEST_INDEX = "lowest-index"

STOP_POOL_EXHAUSTED = "pool_exhausted"
STOP_NO_FEASIBLE_CANDIDATE = "no_feasible_candidate"


@dataclass(frozen=True)
class SelectionConfig:
    """Validated hyperparameters for one selection run.

    beta trades relevance against diversity (1 = pure relevance), gamma
    controls conflict decay in the weighted similarity, k is the number
    of contexts to select, and m is the pre-ranking pool size upstream.
    """

    beta: float = 0.8
    gamma: float = 0.8
    k: int = 5
    m: int = 30
    tol_psd: float = 1e-8
    sing_tol: float = DEFAULT_SINGULAR_TOL
    tie_break: str = TIE_BREAK_LOWEST_INDEX

    def __post_init__(self) -> None:
        if not (isinstance(self.beta, (int, float)) and 0.0 <= self.beta <= 1.0):
            raise InvalidHyperparameter(f"beta must lie in [0, 1], got {self.beta!r}")
        if not (isinstance(self.gamma, (int, float)) and math.isfinite(self.gamma) and self.gamma >= 0.0):
            raise InvalidHyperparameter(f"gamma must be a non-negative real, got {self.gamma!r}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise InvalidHyperparameter(f"k must be a positive integer, got {self.k!r}")
        if not (isinstance(self.m, int) and self.m >= 1):
            raise InvalidHyperparameter(f"m must be a positive integer, got {self.m!r}")
        if not (self.tol_psd >= 0.0):
            raise InvalidHyperparameter(f"tol_psd must be non-negative, got {self.tol_psd!r}")
        if not (self.sing_tol > 0.0):
            raise InvalidHyperparameter(f"sing_tol must be positive, got {self.sing_tol!r}")
        if self.tie_break != TIE_BREAK_LOWEST_INDEX:
            raise InvalidHyperparameter(f"unsupported tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class SelectionResult:
    """Chosen indices in selection order with per-step marginal gains."""

    selected: tuple[int, ...]
    gains: tuple[float, ...]
    objective: float
    stopped_early: bool = False
    reason: str | None = None

    def __post_init__(self) -> None:
        if len(self.selected) != len(self.gains):
            raise DimensionMismatch("selected and gains must have equal length")


def _strict_logdet(matrix: np.ndarray, sing_tol: float) -> float:
    """Cholesky log-determinant with no jitter rescue.

    Raises SingularSubmatrix when factorization fails or any pivot
    (squared diagonal entry of the factor) drops below sing_tol.
    """
    try:
        factor = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise SingularSubmatrix("submatrix is not positive definite") from None
    pivots = np.square(np.diag(factor))
    if np.any(pivots < sing_tol):
        raise SingularSubmatrix(f"conditional variance fell below {sing_tol:g}")
    return float(np.sum(np.log(pivots)))


def beta_objective(
    kernel: DppKernel,
    subset: Sequence[int],
    beta: float,
    sing_tol: float = DEFAULT_SINGULAR_TOL,
) -> float:
    """f(Y) for an explicit subset; -inf when its submatrix is singular.

    The empty subset scores 0.0.  beta = 1 skips the determinant entirely,
    so singular geometry cannot affect a pure-relevance objective.
    """
    if not (0.0 <= beta <= 1.0):
        raise InvalidHyperparameter(f"beta must lie in [0, 1], got {beta!r}")
    if not (sing_tol > 0.0):
        raise InvalidHyperparameter(f"sing_tol must be positive, got {sing_tol!r}")
    idx = _validate_subset(subset, kernel.n)
    if not idx:
        return 0.0
    rel_term = float(np.sum(np.log(np.square(kernel.relevance[idx]))))
    if beta == 1.0:
        return rel_term
    try:
        logdet = _strict_logdet(kernel.k_weighted[np.ix_(idx, idx)], sing_tol)
    except SingularSubmatrix:
        return float("-inf")
    return beta * rel_term + (1.0 - beta) * logdet


def greedy_select(kernel: DppKernel, config: SelectionConfig) -> SelectionResult:
    """Greedy MAP selection of up to config.k contexts.

    Ties on gain go to the lowest index.  Stops early when every remaining
    candidate has gain -inf (reason "no_feasible_candidate") or the pool
    runs out before k picks (reason "pool_exhausted").  The incremental
    factor update follows the fast greedy MAP pattern: after picking j
    with pivot d_j^2, the new factor row is
    e = (K_weighted[j, :] - c_j @ C) / d_j and every remaining pivot
    decreases by e^2.
    """
    n = kernel.n
    if n == 0:
        raise EmptyPool("cannot select from an empty pool")
    beta = float(config.beta)
    k_eff = min(config.k, n)

    log_r2 = np.log(np.square(kernel.relevance))
    available = np.ones(n, dtype=bool)
    selected: list[int] = []
    gains: list[float] = []
    stopped_early = False
    reason: str | None = None

    if beta == 1.0:
        # Pure relevance: gains are log(r_i^2) and the factor is unused.
        order = sorted(range(n), key=lambda i: (-log_r2[i], i))[:k_eff]
        selected = [int(i) for i in order]
        gains = [float(log_r2[i]) for i in order]
    else:
        cis = np.zeros((k_eff, n))
        di2s = np.diag(kernel.k_weighted).copy()
        for step in range(k_eff):
            scores = np.full(n, -np.inf)
            feasible = available & (di2s >= config.sing_tol)
            if np.any(feasible):
                scores[feasible] = beta * log_r2[feasible] + (1.0 - beta) * np.log(di2s[feasible])
            best = int(np.argmax(scores))
            if scores[best] == -np.inf:
                stopped_early = True
                reason = STOP_NO_FEASIBLE_CANDIDATE
                break
            selected.append(best)
            gains.append(float(scores[best]))
            available[best] = False
            if step < k_eff - 1:
                d = math.sqrt(di2s[best])
                row = (kernel.k_weighted[best, :] - cis[:step, best] @ cis[:step, :]) / d
                cis[step, :] = row
                di2s = di2s - np.square(row)

    if not stopped_early and len(selected) < config.k:
        stopped_early = True
        reason = STOP_POOL_EXHAUSTED

    objective = beta_objective(kernel, selected, beta, config.sing_tol)
    return SelectionResult(
        selected=tuple(selected),
        gains=tuple(gains),
        objective=objective,
        stopped_early=stopped_early,
        reason=reason,
    )


def naive_greedy_select(kernel: DppKernel, config: SelectionConfig) -> SelectionResult:
    """Reference greedy that rescores f(Y + {i}) from scratch per candidate.

    Same tie-breaking and stopping rules as greedy_select; kept as an
    oracle for equivalence testing and for debugging numerical drift.
    """
    n = kernel.n
    if n == 0:
        raise EmptyPool("cannot select from an empty pool")
    beta = float(config.beta)
    k_eff = min(config.k, n)

    selected: list[int] = []
    gains: list[float] = []
    current = 0.0
    stopped_early = False
    reason: str | None = None

    for _ in range(k_eff):
        best_i = -1
        best_gain = -np.inf
        for i in range(n):
            if i in selected:
                continue
            candidate = beta_objective(kernel, selected + [i], beta, config.sing_tol)
            gain = candidate - current
            if gain > best_gain:
                best_gain = gain
                best_i = i
        if best_i < 0 or best_gain == -np.inf:
            stopped_early = True
            reason = STOP_NO_FEASIBLE_CANDIDATE
            break
        selected.append(best_i)
        gains.append(float(best_gain))
        current = current + best_gain

    if not stopped_early and len(selected) < config.k:
        stopped_early = True
        reason = STOP_POOL_EXHAUSTED

    objective = beta_objective(kernel, selected, beta, config.sing_tol)
    return SelectionResult(
        selected=tuple(selected),
        gains=tuple(gains),
        objective=objective,
        stopped_early=stopped_early,
        reason=reason,
    )


def exhaustive_best_subset(kernel: DppKernel, config: SelectionConfig) -> tuple[int, ...]:
    """Globally optimal size-min(k, n) subset by scoring every combination.

    Raises BudgetExceeded when the number of combinations passes
    EXHAUSTIVE_BUDGET.  Ties resolve to the lexicographically smallest
    subset.  A diagnostics tool: greedy carries no optimality guarantee,
    and this reports how far off it landed.
    """
    n = kernel.n
    if n == 0:
        raise EmptyPool("cannot select from an empty pool")
    k_eff = min(config.k, n)
    total = math.comb(n, k_eff)
    if total > EXHAUSTIVE_BUDGET:
        raise BudgetExceeded(
            f"{total} subsets of size {k_eff} from {n} exceeds budget {EXHAUSTIVE_BUDGET}"
        )
    beta = float(config.beta)
    best: tuple[int, ...] | None = None
    best_value = -np.inf
    for combo in itertools.combinations(range(n), k_eff):
        value = beta_objective(kernel, combo, beta, config.sing_tol)
        if best is None or value > best_value:
            best = combo
            best_value = value
    assert best is not None
    return best
