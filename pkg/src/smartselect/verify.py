"""Executable property suites: the package's self-contained acceptance gate.

Each check is a deterministic, seeded verification of one mathematical or
behavioral guarantee: spectral closure of the weighted kernel, conflict
monotonicity of pair determinants, DPP normalization, greedy/naive/
exhaustive oracle agreement, the collapse identities, pipeline golden
determinism, and the NLI call budget.  ``run_checks`` powers both the
CLI verify subcommand and the acceptance test suite.
"""

from __future__ import annotations

import itertools
import json
import statistics
import time
from dataclasses import dataclass
from importlib.resources import files as _package_files
from typing import Callable, Sequence

import numpy as np

from .errors import AsymmetryError, InvalidHyperparameter
from .kernel import (
    build_kernel,
    eigenvalue_spectrum,
    kernel_from_relations,
    spectral_check,
    subset_log_det,
    subset_log_probability,
)
from .pipeline import QueryTask, run_batch, run_task, to_jsonl_line
from .providers import (
    FixtureNliProvider,
    HashEmbeddingProvider,
    ProviderBundle,
    RetrievedDocument,
    StaticRetrievalProvider,
)
from .relmat import Embedding, RelationMatrices, build_similarity_matrix, symmetrize_conflict
from .selector import (
    SelectionConfig,
    beta_objective,
    exhaustive_best_subset,
    greedy_select,
    naive_greedy_select,
)

# Two 3x3 conflict fixtures with known indefinite spectra.  The first is
# directional (asymmetric) and is checked as-is; the second arises from a
# different table of directional probabilities whose pairwise averages
# are 0.7, 0.6, and 0.85.
DIRECTIONAL_CONFLICT_FIXTURE = np.array(
    [
        [0.0, 0.8, 0.7],
        [0.8, 0.0, 0.9],
        [0.7, 0.8, 0.0],
    ]
)
SYMMETRIZED_SOURCE_FIXTURE = np.array(
    [
        [0.0, 0.8, 0.7],
        [0.6, 0.0, 0.9],
        [0.5, 0.8, 0.0],
    ]
)
SYMMETRIZED_CONFLICT_FIXTURE = np.array(
    [
        [0.0, 0.7, 0.6],
        [0.7, 0.0, 0.85],
        [0.6, 0.85, 0.0],
    ]
)
# Rounded reference eigenvalues for the fixtures (two most negative).
DIRECTIONAL_FIXTURE_EIGS = (-0.868, -0.7)
SYMMETRIZED_FIXTURE_EIGS = (-0.864, -0.575)
FIXTURE_EIG_TOL = 1e-2

GOLDEN_FIXTURE_RESOURCE = "golden_fixture.json"
GOLDEN_OUTPUT_RESOURCE = "golden_output.jsonl"


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check."""

    name: str
    suite: str
    passed: bool
    details: str
    seconds: float


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def random_relations(
    rng: np.random.Generator,
    n: int,
    dim: int | None = None,
) -> RelationMatrices:
    """Random but well-posed relation matrices for property testing.

    When dim is not given it is drawn from [n, 64]; keeping dim >= n makes
    the embedding rows linearly independent almost surely, which keeps the
    similarity matrix positive definite rather than merely semidefinite
    and the conflict-weighted kernel safely factorizable.
    """
    if dim is None:
        dim = int(rng.integers(n, 65))
    rows = _unit_rows(rng, n, dim)
    k_sim = build_similarity_matrix([Embedding(r) for r in rows])
    conflict = symmetrize_conflict(rng.uniform(0.0, 1.0, (n, n)))
    relevance = rng.uniform(1e-4, 1.0, n)
    return RelationMatrices(k_sim=k_sim, conflict=conflict, relevance=relevance)


def check_similarity_psd() -> tuple[bool, str]:
    """Cosine similarity matrices are PSD for any pool geometry."""
    rng = np.random.default_rng(3201)
    worst = np.inf
    for _ in range(500):
        n = int(rng.integers(2, 41))
        dim = int(rng.integers(2, 65))
        rows = _unit_rows(rng, n, dim)
        k_sim = build_similarity_matrix([Embedding(r) for r in rows])
        worst = min(worst, spectral_check(k_sim).min_eigenvalue)
    return worst >= -1e-8, f"500 pools (n<=40), worst min eigenvalue {worst:.3e}"


def check_directional_fixture() -> tuple[bool, str]:
    """The directional conflict fixture is asymmetric and indefinite."""
    m = DIRECTIONAL_CONFLICT_FIXTURE
    try:
        spectral_check(m)
    except AsymmetryError:
        asym_flagged = True
    else:
        asym_flagged = False
    eigs = eigenvalue_spectrum(m)
    expected = DIRECTIONAL_FIXTURE_EIGS
    close = all(abs(eigs[i] - expected[i]) <= FIXTURE_EIG_TOL for i in range(2))
    not_psd = eigs[0] < -1e-8
    ok = asym_flagged and close and not_psd
    return ok, f"eigenvalues {np.round(eigs, 4).tolist()}, expected lows {expected}"


def check_symmetrized_fixture() -> tuple[bool, str]:
    """Symmetrizing the second fixture's table yields the known indefinite matrix."""
    sym = symmetrize_conflict(SYMMETRIZED_SOURCE_FIXTURE)
    if not np.allclose(sym, SYMMETRIZED_CONFLICT_FIXTURE, rtol=0.0, atol=1e-12):
        return False, "symmetrization does not reproduce the reference matrix"
    report = spectral_check(sym)
    eigs = eigenvalue_spectrum(sym)
    expected = SYMMETRIZED_FIXTURE_EIGS
    close = all(abs(eigs[i] - expected[i]) <= FIXTURE_EIG_TOL for i in range(2))
    ok = close and not report.is_psd
    return ok, f"eigenvalues {np.round(eigs, 4).tolist()}, is_psd {report.is_psd}"


def check_weighted_closure() -> tuple[bool, str]:
    """Conflict weighting and relevance scaling preserve PSD."""
    rng = np.random.default_rng(3601)
    worst_kw = np.inf
    worst_l = np.inf
    failures = 0
    for _ in range(500):
        n = int(rng.integers(2, 25))
        relations = random_relations(rng, n)
        gamma = float(rng.uniform(0.0, 5.0))
        kern = kernel_from_relations(relations, gamma)
        rep_kw = spectral_check(kern.k_weighted, tol_psd=1e-8)
        rep_l = spectral_check(kern.l, tol_psd=1e-8)
        worst_kw = min(worst_kw, rep_kw.min_eigenvalue)
        worst_l = min(worst_l, rep_l.min_eigenvalue)
        if not (rep_kw.is_psd and rep_l.is_psd):
            failures += 1
    ok = failures == 0
    return ok, f"500 triples, {failures} failures; worst eigs K_weighted {worst_kw:.3e}, L {worst_l:.3e}"


def check_conflict_monotonic() -> tuple[bool, str]:
    """Pair log-determinants never increase as pairwise conflict rises."""
    rng = np.random.default_rng(3701)
    grid = np.linspace(0.0, 1.0, 11)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        relations = random_relations(rng, n)
        gamma = float(rng.uniform(0.5, 3.0))
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        previous = None
        for c in grid:
            conflict = relations.conflict.copy()
            conflict[i, j] = conflict[j, i] = c
            staged = RelationMatrices(
                k_sim=relations.k_sim, conflict=conflict, relevance=relations.relevance
            )
            kern = kernel_from_relations(staged, gamma)
            value = subset_log_det(kern, [i, j])
            if previous is not None and value > previous + 1e-12:
                violations += 1
            previous = value
    return violations == 0, f"100 instances x 11-point grid, {violations} violations"


def check_dpp_normalization() -> tuple[bool, str]:
    """Subset probabilities over the full power set sum to one."""
    rng = np.random.default_rng(3801)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 11))
        relations = random_relations(rng, n)
        kern = kernel_from_relations(relations, float(rng.uniform(0.0, 3.0)))
        total = 0.0
        for size in range(n + 1):
            for subset in itertools.combinations(range(n), size):
                total += float(np.exp(subset_log_probability(kern, subset)))
        worst = max(worst, abs(total - 1.0))
    return worst <= 1e-8, f"50 kernels (n<=10), worst |sum - 1| = {worst:.3e}"


def _random_config(rng: np.random.Generator, n: int, k_max: int = 10) -> SelectionConfig:
    mode = rng.uniform()
    if mode < 0.15:
        beta = 0.0
    elif mode < 0.3:
        beta = 1.0
    else:
        beta = float(rng.uniform(0.0, 1.0))
    k = int(rng.integers(1, min(k_max, n) + 1))
    gamma = float(rng.uniform(0.0, 5.0))
    return SelectionConfig(beta=beta, gamma=gamma, k=k)


def check_greedy_naive() -> tuple[bool, str]:
    """Fast incremental greedy equals the rescoring reference."""
    rng = np.random.default_rng(3901)
    mismatches = 0
    worst_gain_gap = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 31))
        relations = random_relations(rng, n)
        config = _random_config(rng, n)
        kern = kernel_from_relations(relations, config.gamma)
        fast = greedy_select(kern, config)
        slow = naive_greedy_select(kern, config)
        if fast.selected != slow.selected:
            mismatches += 1
            continue
        if fast.gains:
            gap = max(abs(a - b) for a, b in zip(fast.gains, slow.gains))
            worst_gain_gap = max(worst_gain_gap, gap)
    ok = mismatches == 0 and worst_gain_gap <= 1e-9
    return ok, f"200 instances, {mismatches} sequence mismatches, worst gain gap {worst_gain_gap:.3e}"


def check_beta_collapse() -> tuple[bool, str]:
    """beta = 1 reduces selection to the relevance top-k."""
    rng = np.random.default_rng(4001)
    failures = 0
    for _ in range(100):
        n = int(rng.integers(2, 31))
        relations = random_relations(rng, n)
        k = int(rng.integers(1, n + 1))
        config = SelectionConfig(beta=1.0, gamma=float(rng.uniform(0.0, 5.0)), k=k)
        kern = kernel_from_relations(relations, config.gamma)
        result = greedy_select(kern, config)
        oracle = tuple(sorted(range(n), key=lambda i: (-relations.relevance[i], i))[:k])
        if result.selected != oracle:
            failures += 1
    return failures == 0, f"100 instances, {failures} mismatches against the argsort oracle"


def check_gamma_collapse() -> tuple[bool, str]:
    """gamma = 0 selection matches a kernel built without conflict."""
    rng = np.random.default_rng(4101)
    failures = 0
    for _ in range(100):
        n = int(rng.integers(2, 31))
        relations = random_relations(rng, n)
        config = SelectionConfig(beta=float(rng.uniform(0.0, 1.0)), gamma=0.0, k=int(rng.integers(1, 6)))
        with_conflict = kernel_from_relations(relations, 0.0)
        without = build_kernel(relations.k_sim, relations.relevance)
        a = greedy_select(with_conflict, config)
        b = greedy_select(without, config)
        if a.selected != b.selected or a.gains != b.gains or a.objective != b.objective:
            failures += 1
    return failures == 0, f"100 instances, {failures} mismatches (exact comparison)"


def check_exhaustive_gap() -> tuple[bool, str]:
    """Greedy is measured against the exhaustive optimum; exact on easy cases."""
    rng = np.random.default_rng(4201)
    gaps = []
    exact_failures = 0
    for trial in range(50):
        relations = random_relations(rng, 12)
        config = _random_config(rng, 12, k_max=4)
        config = SelectionConfig(beta=config.beta, gamma=config.gamma, k=4)
        kern = kernel_from_relations(relations, config.gamma)
        greedy = greedy_select(kern, config)
        best = exhaustive_best_subset(kern, config)
        best_value = beta_objective(kern, best, config.beta, config.sing_tol)
        if np.isfinite(best_value) and best_value != 0.0:
            gaps.append((best_value - greedy.objective) / abs(best_value))

        # k = 1: one greedy step is the global optimum by definition.
        config1 = SelectionConfig(beta=config.beta, gamma=config.gamma, k=1)
        g1 = greedy_select(kern, config1)
        e1 = exhaustive_best_subset(kern, config1)
        if set(g1.selected) != set(e1):
            exact_failures += 1

        # beta = 1: the objective is modular, so greedy is exact.
        config_mod = SelectionConfig(beta=1.0, gamma=config.gamma, k=4)
        gm = greedy_select(kern, config_mod)
        em = exhaustive_best_subset(kern, config_mod)
        if set(gm.selected) != set(em):
            exact_failures += 1
    mean_gap = statistics.fmean(gaps) if gaps else 0.0
    max_gap = max(gaps) if gaps else 0.0
    ok = exact_failures == 0 and all(g >= -1e-9 for g in gaps)
    return ok, (
        f"50 instances (n=12, k=4): mean relative gap {mean_gap:.3e}, max {max_gap:.3e}; "
        f"{exact_failures} failures on the k=1 / beta=1 exact sub-cases"
    )


def load_golden_fixture() -> tuple[QueryTask, Callable[[], ProviderBundle], SelectionConfig]:
    """The frozen end-to-end fixture: task, fresh-provider factory, config."""
    raw = (_package_files("smartselect") / "data" / GOLDEN_FIXTURE_RESOURCE).read_text("utf-8")
    data = json.loads(raw)
    task = QueryTask.from_json_dict(data["task"])
    corpus = [
        RetrievedDocument(doc_id=d["id"], text=d["text"], score=float(d["score"]))
        for d in data["corpus"]
    ]
    table = {
        (entry["premise"], entry["hypothesis"]): float(entry["contradiction"])
        for entry in data["nli"]
    }
    embed_cfg = data["embed"]

    def fresh_bundle() -> ProviderBundle:
        return ProviderBundle(
            embedder=HashEmbeddingProvider(seed=int(embed_cfg["seed"]), dim=int(embed_cfg["dim"])),
            nli=FixtureNliProvider(table),
            retriever=StaticRetrievalProvider(corpus),
        )

    cfg = data["config"]
    config = SelectionConfig(
        beta=float(cfg["beta"]), gamma=float(cfg["gamma"]), k=int(cfg["k"]), m=int(cfg["m"])
    )
    return task, fresh_bundle, config


def golden_expected_bytes() -> bytes:
    """Frozen serialized output of the golden fixture run."""
    return (_package_files("smartselect") / "data" / GOLDEN_OUTPUT_RESOURCE).read_bytes()


def run_golden_once() -> bytes:
    task, fresh_bundle, config = load_golden_fixture()
    output = run_task(task, config, fresh_bundle())
    return to_jsonl_line(output).encode("utf-8")


def check_golden_determinism() -> tuple[bool, str]:
    """The fixture run is byte-stable across runs and parallelism levels."""
    task, fresh_bundle, config = load_golden_fixture()
    first = run_golden_once()
    second = run_golden_once()
    tasks = [task] * 6
    seq = run_batch(tasks, config, fresh_bundle(), parallelism=1)
    par = run_batch(tasks, config, fresh_bundle(), parallelism=8)
    seq_bytes = b"".join(to_jsonl_line(r).encode("utf-8") for r in seq)
    par_bytes = b"".join(to_jsonl_line(r).encode("utf-8") for r in par)
    expected = golden_expected_bytes()
    ok = first == second == expected and seq_bytes == par_bytes == expected * 6
    detail = "byte-identical across reruns, parallel 1 vs 8, and the frozen golden file"
    if not ok:
        parts = []
        if first != second:
            parts.append("rerun drift")
        if seq_bytes != par_bytes:
            parts.append("parallelism drift")
        if first != expected:
            parts.append("does not match frozen golden bytes")
        detail = "; ".join(parts) or "unknown mismatch"
    return ok, detail


def check_nli_budget() -> tuple[bool, str]:
    """Exactly p*(p-1) directional NLI calls, p = min(m, pool size)."""
    task, fresh_bundle, config = load_golden_fixture()
    bundle = fresh_bundle()
    out = run_task(task, config, bundle)
    p = out.diagnostics["pool_size"]
    ok_full = bundle.nli.calls == p * (p - 1) == out.diagnostics["nli_calls"]

    # Truncated pool: m below the sentence count must shrink the budget.
    small = SelectionConfig(beta=config.beta, gamma=config.gamma, k=min(config.k, 3), m=4)
    bundle2 = fresh_bundle()
    out2 = run_task(task, small, bundle2)
    ok_small = out2.diagnostics["pool_size"] == 4 and bundle2.nli.calls == 4 * 3
    ok = ok_full and ok_small
    return ok, f"pool {p} -> {bundle.nli.calls} calls; pool 4 -> {bundle2.nli.calls} calls"


CHECKS: tuple[tuple[str, str, Callable[[], tuple[bool, str]]], ...] = (
    ("psd.similarity_pools", "psd", check_similarity_psd),
    ("psd.directional_fixture", "psd", check_directional_fixture),
    ("psd.symmetrized_fixture", "psd", check_symmetrized_fixture),
    ("psd.weighted_closure", "psd", check_weighted_closure),
    ("monotonic.conflict_pair_logdet", "monotonic", check_conflict_monotonic),
    ("normalization.subset_probabilities", "normalization", check_dpp_normalization),
    ("oracle.greedy_naive_equivalence", "oracle", check_greedy_naive),
    ("oracle.beta_collapse", "oracle", check_beta_collapse),
    ("oracle.gamma_collapse", "oracle", check_gamma_collapse),
    ("oracle.exhaustive_gap", "oracle", check_exhaustive_gap),
    ("pipeline.golden_determinism", "pipeline", check_golden_determinism),
    ("pipeline.nli_budget", "pipeline", check_nli_budget),
)

SUITES = tuple(dict.fromkeys(suite for _, suite, _ in CHECKS))


def run_checks(suites: Sequence[str] | None = None) -> list[CheckResult]:
    """Run all checks, or only those in the given suites."""
    if suites:
        unknown = set(suites) - set(SUITES)
        if unknown:
            raise InvalidHyperparameter(f"unknown suite(s) {sorted(unknown)}; known: {list(SUITES)}")
    results = []
    for name, suite, fn in CHECKS:
        if suites and suite not in suites:
            continue
        start = time.perf_counter()
        try:
            passed, details = fn()
            passed = bool(passed)
        except Exception as exc:  # a crashing check is a failing check
            passed, details = False, f"crashed: {type(exc).__name__}: {exc}"
        results.append(
            CheckResult(name=name, suite=suite, passed=passed, details=details,
                        seconds=time.perf_counter() - start)
        )
    return results


def summarize(results: Sequence[CheckResult]) -> dict:
    """Machine-readable summary for the CLI."""
    return {
        "passed": all(r.passed for r in results),
        "total": len(results),
        "failed": [r.name for r in results if not r.passed],
        "checks": [
            {
                "name": r.name,
                "suite": r.suite,
                "passed": r.passed,
                "details": r.details,
                "seconds": round(r.seconds, 3),
            }
            for r in results
        ],
    }
