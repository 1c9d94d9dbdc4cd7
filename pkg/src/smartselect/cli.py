"""Command-line interface: select, batch, sweep, inspect, verify.

Configuration precedence is flags over config file over defaults.
Providers resolve per capability: a SMART_*_URL environment variable wins
over a config-file endpoint, which wins over the built-in deterministic
doubles.  Exit codes: 0 success, 1 usage or data error, 2 provider
failure (including partial batch failure), 3 verification failure.

Every subcommand writes exactly one artifact to stdout (JSONL records,
CSV table, JSON summary); logs and structured errors go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidHyperparameter, InvalidTask, SmartSelectError
from .kernel import (
    build_kernel,
    build_weighted_similarity,
    eigenvalue_spectrum,
    spectral_check,
)
from .pipeline import (
    QueryTask,
    TaskFailure,
    aggregate_timings,
    load_matrices,
    run_batch,
    run_task,
    to_jsonl_line,
)
from .providers import (
    ENV_EMBED_URL,
    ENV_NLI_URL,
    ENV_RETRIEVE_URL,
    FixtureNliProvider,
    HashEmbeddingProvider,
    HttpEmbeddingClient,
    HttpNliClient,
    HttpRetrievalClient,
    ProviderBundle,
    ProviderEndpoint,
    RetrievedDocument,
    StaticRetrievalProvider,
)
from .relmat import RELEVANCE_FLOOR, symmetrize_conflict
from .selector import SelectionConfig, greedy_select
from .verify import SUITES, run_checks, summarize

log = logging.getLogger(__name__)

DEFAULT_BETA_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_GAMMA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

_CONFIG_KEYS = ("beta", "gamma", "k", "m", "parallel", "order_by_relevance", "skip_conflict")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the exit-code contract wants 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(1)


def _emit_error(code: str, message: str) -> None:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smartselect", description="Conflict-aware context selection")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug (stderr)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p: argparse.ArgumentParser, with_tasks: bool = True) -> None:
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--top-k", type=int, default=None, dest="top_k",
                       help="number of contexts to select")
        p.add_argument("--pre-rank", type=int, default=None, dest="pre_rank",
                       help="pool size m kept after relevance pre-ranking")
        p.add_argument("--order-by-relevance", action="store_true", default=None,
                       help="present selected contexts in relevance order instead of selection order")
        p.add_argument("--skip-conflict", action="store_true", default=None,
                       help="skip the NLI pass and use a zero conflict matrix")
        p.add_argument("--persist-matrices", type=str, default=None,
                       help="directory for per-task matrix dumps")
        p.add_argument("--emit-timings", action="store_true",
                       help="include wall-clock timings in output records (non-reproducible)")
        p.add_argument("--mock-seed", type=int, default=None, help="seed for the embedding double")
        p.add_argument("--mock-dim", type=int, default=None, help="dimension of the embedding double")
        p.add_argument("--corpus", type=str, default=None,
                       help="JSONL corpus ({id,text,score} per line) for the offline retriever")
        p.add_argument("--nli-fixtures", type=str, default=None,
                       help="JSON list of {premise,hypothesis,contradiction} for the NLI double")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration as JSON and exit")
        if with_tasks:
            p.add_argument("--input", type=str, default=None, help="task JSONL path (default stdin)")
            p.add_argument("--output", type=str, default=None, help="output path (default stdout)")

    p_select = sub.add_parser("select", help="run one task")
    add_common(p_select)
    p_select.set_defaults(func=cmd_select)

    p_batch = sub.add_parser("batch", help="run many tasks with per-task isolation")
    add_common(p_batch)
    p_batch.add_argument("--parallel", type=int, default=None, help="worker threads (default 1)")
    p_batch.set_defaults(func=cmd_batch)

    p_sweep = sub.add_parser("sweep", help="grid-sweep beta/gamma and emit CSV")
    add_common(p_sweep)
    p_sweep.add_argument("--beta-grid", type=str, default=None,
                         help="comma-separated beta values (default 0.5..1.0)")
    p_sweep.add_argument("--gamma-grid", type=str, default=None,
                         help="comma-separated gamma values (default 0.1..0.9)")
    p_sweep.add_argument("--scores", type=str, default=None,
                         help="CSV of externally computed task scores (query_id,beta,gamma,score)")
    p_sweep.add_argument("--rank-output", type=str, default=None,
                         help="where to write the per-cell score ranking (requires --scores)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="matrix utilities and array-level ops")
    p_inspect.add_argument("--dump", type=str, default=None,
                           help="matrix dump base path or header file to summarize")
    p_inspect.add_argument("--op", type=str, default=None,
                           choices=["symmetrize", "weight", "kernel", "select", "spectrum"],
                           help="array operation; JSON payload on stdin or --payload")
    p_inspect.add_argument("--payload", type=str, default=None, help="path to the JSON payload")
    p_inspect.set_defaults(func=cmd_inspect)

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--suite", action="append", default=None, choices=list(SUITES),
                          help="restrict to one or more suites (repeatable)")
    p_verify.set_defaults(func=cmd_verify)

    return parser


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidTask(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidTask(f"config file {path} must hold a JSON object")
    return data


def _effective_settings(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and flags (flags win)."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    defaults = SelectionConfig()
    settings = {
        "beta": defaults.beta,
        "gamma": defaults.gamma,
        "k": defaults.k,
        "m": defaults.m,
        "parallel": 1,
        "order_by_relevance": False,
        "skip_conflict": False,
        "mock_seed": 0,
        "mock_dim": 32,
        "corpus": None,
        "nli_fixtures": None,
        "endpoints": {},
    }
    for key in _CONFIG_KEYS:
        if key in file_cfg:
            settings[key] = file_cfg[key]
    for key in ("mock_seed", "mock_dim", "corpus", "nli_fixtures"):
        if key in file_cfg:
            settings[key] = file_cfg[key]
    if isinstance(file_cfg.get("endpoints"), dict):
        settings["endpoints"] = file_cfg["endpoints"]

    overrides = {
        "beta": getattr(args, "beta", None),
        "gamma": getattr(args, "gamma", None),
        "k": getattr(args, "top_k", None),
        "m": getattr(args, "pre_rank", None),
        "parallel": getattr(args, "parallel", None),
        "order_by_relevance": getattr(args, "order_by_relevance", None),
        "skip_conflict": getattr(args, "skip_conflict", None),
        "mock_seed": getattr(args, "mock_seed", None),
        "mock_dim": getattr(args, "mock_dim", None),
        "corpus": getattr(args, "corpus", None),
        "nli_fixtures": getattr(args, "nli_fixtures", None),
    }
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    return settings


def _selection_config(settings: dict) -> SelectionConfig:
    try:
        return SelectionConfig(
            beta=float(settings["beta"]),
            gamma=float(settings["gamma"]),
            k=int(settings["k"]),
            m=int(settings["m"]),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidHyperparameter(f"bad configuration value: {exc}") from exc


def _endpoint_from(spec: object, url_override: str | None) -> ProviderEndpoint | None:
    if url_override:
        base = {"base_url": url_override}
        if isinstance(spec, dict):
            base = {**spec, "base_url": url_override}
        return ProviderEndpoint(**base)
    if isinstance(spec, dict) and spec.get("base_url"):
        return ProviderEndpoint(**spec)
    return None


def _load_corpus(path: str) -> list[RetrievedDocument]:
    docs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            docs.append(RetrievedDocument(doc_id=str(rec["id"]), text=str(rec["text"]),
                                          score=float(rec["score"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InvalidTask(f"corpus {path} line {line_no}: {exc}") from exc
    return docs


def _load_nli_fixtures(path: str) -> dict[tuple[str, str], float]:
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        return {(str(e["premise"]), str(e["hypothesis"])): float(e["contradiction"]) for e in entries}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InvalidTask(f"NLI fixture file {path}: {exc}") from exc


def _build_bundle(settings: dict) -> tuple[ProviderBundle, dict]:
    """Resolve providers; returns the bundle and a description for --print-config."""
    endpoints = settings.get("endpoints") or {}
    embed_ep = _endpoint_from(endpoints.get("embed"), os.environ.get(ENV_EMBED_URL))
    nli_ep = _endpoint_from(endpoints.get("nli"), os.environ.get(ENV_NLI_URL))
    retrieve_ep = _endpoint_from(endpoints.get("retrieve"), os.environ.get(ENV_RETRIEVE_URL))

    description = {}
    if embed_ep is not None:
        embedder = HttpEmbeddingClient(embed_ep)
        description["embed"] = embed_ep.base_url
    else:
        embedder = HashEmbeddingProvider(seed=int(settings["mock_seed"]), dim=int(settings["mock_dim"]))
        description["embed"] = f"mock(seed={embedder.seed},dim={embedder.dim})"

    if nli_ep is not None:
        nli = HttpNliClient(nli_ep)
        description["nli"] = nli_ep.base_url
    else:
        table = _load_nli_fixtures(settings["nli_fixtures"]) if settings.get("nli_fixtures") else {}
        nli = FixtureNliProvider(table)
        description["nli"] = f"mock(fixtures={len(table)})"

    if retrieve_ep is not None:
        retriever: StaticRetrievalProvider | HttpRetrievalClient | None = HttpRetrievalClient(retrieve_ep)
        description["retrieve"] = retrieve_ep.base_url
    elif settings.get("corpus"):
        corpus = _load_corpus(settings["corpus"])
        retriever = StaticRetrievalProvider(corpus)
        description["retrieve"] = f"mock(corpus={len(corpus)})"
    else:
        retriever = None
        description["retrieve"] = None

    return ProviderBundle(embedder=embedder, nli=nli, retriever=retriever), description


def _print_effective_config(settings: dict, config: SelectionConfig, providers: dict, out: io.TextIOBase) -> None:
    echo = {
        "beta": config.beta,
        "gamma": config.gamma,
        "k": config.k,
        "m": config.m,
        "tol_psd": config.tol_psd,
        "sing_tol": config.sing_tol,
        "tie_break": config.tie_break,
        "parallel": int(settings["parallel"]),
        "order_by_relevance": bool(settings["order_by_relevance"]),
        "skip_conflict": bool(settings["skip_conflict"]),
        "providers": providers,
    }
    print(json.dumps(echo, ensure_ascii=False), file=out)


def _read_tasks(path: str | None) -> list[QueryTask]:
    if path is None or path == "-":
        text = sys.stdin.read()
        origin = "stdin"
    else:
        text = Path(path).read_text(encoding="utf-8")
        origin = path
    tasks = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidTask(f"{origin} line {line_no}: invalid JSON: {exc}") from exc
        try:
            tasks.append(QueryTask.from_json_dict(record))
        except InvalidTask as exc:
            raise InvalidTask(f"{origin} line {line_no}: {exc}") from None
    if not tasks:
        raise InvalidTask(f"{origin}: no tasks found")
    return tasks


def _open_output(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _run_kwargs(settings: dict, args: argparse.Namespace) -> dict:
    return {
        "persist_dir": getattr(args, "persist_matrices", None),
        "order_by_relevance": bool(settings["order_by_relevance"]),
        "skip_conflict": bool(settings["skip_conflict"]),
    }


def cmd_select(args: argparse.Namespace) -> int:
    settings = _effective_settings(args)
    config = _selection_config(settings)
    bundle, description = _build_bundle(settings)
    if args.print_config:
        _print_effective_config(settings, config, description, sys.stdout)
        return 0
    tasks = _read_tasks(args.input)
    if len(tasks) != 1:
        raise InvalidTask(f"select expects exactly one task, got {len(tasks)}; use batch")
    output = run_task(tasks[0], config, bundle, **_run_kwargs(settings, args))
    stream, owned = _open_output(args.output)
    try:
        stream.write(to_jsonl_line(output, include_timings=args.emit_timings))
    finally:
        if owned:
            stream.close()
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    settings = _effective_settings(args)
    config = _selection_config(settings)
    bundle, description = _build_bundle(settings)
    if args.print_config:
        _print_effective_config(settings, config, description, sys.stdout)
        return 0
    tasks = _read_tasks(args.input)
    results = run_batch(
        tasks, config, bundle,
        parallelism=int(settings["parallel"]),
        **_run_kwargs(settings, args),
    )
    stream, owned = _open_output(args.output)
    try:
        for record in results:
            stream.write(to_jsonl_line(record, include_timings=args.emit_timings))
    finally:
        if owned:
            stream.close()
    failures = [r for r in results if isinstance(r, TaskFailure)]
    summary = {
        "tasks": len(tasks),
        "failed": len(failures),
        "stage_seconds": {k: round(v, 6) for k, v in aggregate_timings(results).items()},
    }
    print(json.dumps(summary), file=sys.stderr)
    return 2 if failures else 0


def _parse_grid(text: str | None, default: Sequence[float], name: str) -> list[float]:
    if text is None:
        return list(default)
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidHyperparameter(f"{name} grid is not numeric: {text!r}") from exc
    if not values:
        raise InvalidHyperparameter(f"{name} grid is empty")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = _effective_settings(args)
    base_config = _selection_config(settings)
    bundle, description = _build_bundle(settings)
    if args.print_config:
        _print_effective_config(settings, base_config, description, sys.stdout)
        return 0
    betas = _parse_grid(args.beta_grid, DEFAULT_BETA_GRID, "beta")
    gammas = _parse_grid(args.gamma_grid, DEFAULT_GAMMA_GRID, "gamma")
    tasks = _read_tasks(args.input)
    if args.rank_output and not args.scores:
        raise InvalidHyperparameter("--rank-output requires --scores")

    stream, owned = _open_output(args.output)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["query_id", "beta", "gamma", "objective", "selected_ids"])
        run_kwargs = _run_kwargs(settings, args)
        for task in tasks:
            for beta in betas:
                for gamma in gammas:
                    config = SelectionConfig(beta=beta, gamma=gamma, k=base_config.k, m=base_config.m)
                    output = run_task(task, config, bundle, **run_kwargs)
                    writer.writerow([
                        task.query_id,
                        beta,
                        gamma,
                        output.objective,
                        "|".join(s.sent_id for s in output.selected),
                    ])
    finally:
        if owned:
            stream.close()

    if args.scores:
        _rank_cells(args.scores, args.rank_output, betas, gammas)
    return 0


def _rank_cells(scores_path: str, rank_output: str | None, betas: list[float], gammas: list[float]) -> None:
    """Join external task scores and rank grid cells by mean score."""
    cells: dict[tuple[float, float], list[float]] = {}
    with open(scores_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"query_id", "beta", "gamma", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidTask(f"scores CSV needs columns {sorted(required)}")
        for row in reader:
            try:
                key = (float(row["beta"]), float(row["gamma"]))
                score = float(row["score"])
            except ValueError as exc:
                raise InvalidTask(f"scores CSV row {row!r}: {exc}") from exc
            cells.setdefault(key, []).append(score)
    grid_cells = {(b, g) for b in betas for g in gammas}
    ranked = sorted(
        ((key, sum(vals) / len(vals), len(vals)) for key, vals in cells.items() if key in grid_cells),
        key=lambda item: (-item[1], item[0]),
    )
    stream, owned = _open_output(rank_output)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["beta", "gamma", "mean_score", "n_tasks"])
        for (beta, gamma), mean_score, count in ranked:
            writer.writerow([beta, gamma, mean_score, count])
    finally:
        if owned:
            stream.close()


def _payload_for_inspect(args: argparse.Namespace) -> dict:
    raw = Path(args.payload).read_text(encoding="utf-8") if args.payload else sys.stdin.read()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidTask(f"inspect payload is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InvalidTask("inspect payload must be a JSON object")
    return payload


def _inspect_result(op: str, payload: dict) -> dict:
    if op == "symmetrize":
        conflict = symmetrize_conflict(np.asarray(payload["directional"], dtype=np.float64))
        return {"conflict": conflict.tolist()}
    if op == "weight":
        weighted = build_weighted_similarity(
            np.asarray(payload["k_sim"], dtype=np.float64),
            np.asarray(payload["conflict"], dtype=np.float64),
            float(payload["gamma"]),
        )
        return {"k_weighted": weighted.tolist()}
    if op == "kernel":
        kern = _kernel_from_payload(payload)
        return {"l": kern.l.tolist(), "gamma": kern.gamma}
    if op == "select":
        kern = _kernel_from_payload(payload)
        config = SelectionConfig(
            beta=float(payload.get("beta", 0.8)),
            gamma=float(payload.get("gamma", 0.8)),
            k=int(payload.get("k", 5)),
        )
        result = greedy_select(kern, config)
        return {
            "selected": list(result.selected),
            "gains": list(result.gains),
            "objective": result.objective,
            "stopped_early": result.stopped_early,
            "reason": result.reason,
        }
    if op == "spectrum":
        matrix = np.asarray(payload["matrix"], dtype=np.float64)
        eigs = eigenvalue_spectrum(matrix)
        symmetric = bool(np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-9))
        report = spectral_check(matrix) if symmetric else None
        return {
            "eigenvalues": eigs.tolist(),
            "min_eigenvalue": float(eigs[0]),
            "symmetric": symmetric,
            "is_psd": report.is_psd if report is not None else None,
        }
    raise InvalidHyperparameter(f"unknown inspect op {op!r}")


def _kernel_from_payload(payload: dict):
    """Kernel from raw arrays: k_sim + (possibly directional) conflict +
    relevance, mirroring the pipeline's construction path."""
    relevance = np.asarray(payload["relevance"], dtype=np.float64)
    if payload.get("clamp_relevance"):
        relevance = np.clip(relevance, RELEVANCE_FLOOR, 1.0)
    gamma = float(payload.get("gamma", 0.8))
    k_sim = np.asarray(payload["k_sim"], dtype=np.float64)
    conflict = symmetrize_conflict(np.asarray(payload["conflict"], dtype=np.float64))
    weighted = build_weighted_similarity(k_sim, conflict, gamma)
    return build_kernel(weighted, relevance, gamma=gamma)


def cmd_inspect(args: argparse.Namespace) -> int:
    if (args.dump is None) == (args.op is None):
        raise InvalidTask("inspect needs exactly one of --dump or --op")
    if args.dump is not None:
        relations = load_matrices(args.dump)
        k_report = spectral_check(relations.k_sim)
        c_report = spectral_check(relations.conflict)
        summary = {
            "n": relations.n,
            "fields": ["k_sim", "conflict", "relevance"],
            "k_sim": {"min_eigenvalue": k_report.min_eigenvalue, "is_psd": k_report.is_psd},
            "conflict": {"min_eigenvalue": c_report.min_eigenvalue, "is_psd": c_report.is_psd},
            "relevance": {
                "min": float(relations.relevance.min()),
                "max": float(relations.relevance.max()),
            },
        }
        print(json.dumps(summary, ensure_ascii=False))
        return 0
    payload = _payload_for_inspect(args)
    try:
        result = _inspect_result(args.op, payload)
    except KeyError as exc:
        raise InvalidTask(f"inspect payload is missing field {exc}") from exc
    print(json.dumps(result, ensure_ascii=False, separators=(",", ":")))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks(args.suite)
    summary = summarize(results)
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0 if summary["passed"] else 3


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SmartSelectError as exc:
        _emit_error(exc.code, str(exc))
        return exc.exit_status
    except OSError as exc:
        _emit_error("io", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
