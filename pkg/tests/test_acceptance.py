"""Acceptance gate: every core guarantee, one pass/fail line each.

Each criterion below delegates to the same executable checks that back
``smartselect verify``, so the CLI gate and this suite cannot drift
apart.  Criteria with a stated wall-clock budget assert it from the
measured check durations.
"""

import pytest

import smartselect.verify as verify

# criterion label -> (check names it aggregates, wall-clock budget seconds or None)
CRITERIA = [
    (
        "similarity PSD: 500 random pools keep min eigenvalue >= -1e-8 (budget 30 s)",
        ("psd.similarity_pools",),
        30.0,
    ),
    (
        "conflict fixtures: both 3x3 reference matrices indefinite, eigenvalues within 1e-2",
        ("psd.directional_fixture", "psd.symmetrized_fixture"),
        None,
    ),
    (
        "weighted closure: 500 random (k_sim, conflict, gamma<=5) triples keep K_w and L PSD at tol 1e-8",
        ("psd.weighted_closure",),
        None,
    ),
    (
        "conflict monotonicity: pair log-det non-increasing over 100 instances x 11-point grid",
        ("monotonic.conflict_pair_logdet",),
        None,
    ),
    (
        "normalization: subset probabilities sum to 1 +- 1e-8 over 50 kernels",
        ("normalization.subset_probabilities",),
        None,
    ),
    (
        "greedy oracle: fast greedy equals naive rescoring on 200 instances, gains within 1e-9 (budget 60 s)",
        ("oracle.greedy_naive_equivalence",),
        60.0,
    ),
    (
        "collapse identities: beta=1 equals relevance top-k and gamma=0 equals conflict-free, 100 instances each, exact",
        ("oracle.beta_collapse", "oracle.gamma_collapse"),
        None,
    ),
    (
        "exhaustive gap: greedy vs optimum reported on 50 instances (n=12, k=4); beta=1 and k=1 sub-cases exact",
        ("oracle.exhaustive_gap",),
        None,
    ),
    (
        "golden pipeline: fixture output byte-identical across reruns and parallel 1 vs 8",
        ("pipeline.golden_determinism",),
        None,
    ),
    (
        "NLI budget: exactly p*(p-1) directional calls with p = min(m, pool size)",
        ("pipeline.nli_budget",),
        None,
    ),
]

_RESULTS: dict | None = None


@pytest.fixture(scope="module")
def results():
    global _RESULTS
    if _RESULTS is None:
        _RESULTS = {r.name: r for r in verify.run_checks()}
    return _RESULTS


def _slug(label: str) -> str:
    return label.split(":")[0].replace(" ", "-")


@pytest.mark.parametrize(
    "label,check_names,budget", CRITERIA, ids=[_slug(c[0]) for c in CRITERIA]
)
def test_criterion(label, check_names, budget, results, acceptance_recorder):
    checks = [results[name] for name in check_names]
    seconds = sum(c.seconds for c in checks)
    passed = all(c.passed for c in checks)
    within_budget = budget is None or seconds <= budget
    verdict = "PASS" if (passed and within_budget) else "FAIL"
    detail = "; ".join(c.details for c in checks)
    line = f"{verdict} {label} [{seconds:.2f}s] -- {detail}"
    acceptance_recorder(line)
    print(line)
    assert passed, line
    assert within_budget, f"criterion exceeded its {budget:.0f}s budget: {line}"


def test_every_registered_check_is_covered(results):
    covered = {name for _, names, _ in CRITERIA for name in names}
    assert covered == set(results), "acceptance criteria must cover the whole check registry"
