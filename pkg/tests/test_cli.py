import io
import json
import math
from importlib.resources import files as package_files

import numpy as np
import pytest

from smartselect import (
    SelectionConfig,
    build_kernel,
    build_weighted_similarity,
    greedy_select,
    symmetrize_conflict,
)
from smartselect.cli import main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("SMART_EMBED_URL", "SMART_NLI_URL", "SMART_RETRIEVE_URL"):
        monkeypatch.delenv(name, raising=False)


def run_cli(argv, capsys, monkeypatch=None, stdin_text=None):
    if stdin_text is not None:
        assert monkeypatch is not None
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin_text))
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _task_line(query_id="q1", query="what is the answer?", docs=None):
    docs = docs or [
        {"id": "d1", "text": "The answer is forty two. Nothing else matters."},
        {"id": "d2", "text": "The answer is seven. A rival count exists."},
        {"id": "d3", "text": "Unrelated trivia fills this line completely."},
    ]
    return json.dumps({"query_id": query_id, "query": query, "documents": docs}) + "\n"


class TestUsageErrors:
    def test_unknown_flag_exits_one(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["select", "--no-such-flag"])
        assert excinfo.value.code == 1
        err = capsys.readouterr().err
        assert json.loads(err.splitlines()[-1])["error"] == "usage"

    def test_missing_subcommand_exits_one(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 1

    def test_non_numeric_beta_exits_one(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["select", "--beta", "high"])
        assert excinfo.value.code == 1

    def test_bad_inspect_op_exits_one(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["inspect", "--op", "transmogrify"])
        assert excinfo.value.code == 1

    def test_missing_input_file_reports_io_error(self, capsys):
        code, _, err = run_cli(["select", "--input", "/nonexistent/tasks.jsonl"], capsys)
        assert code == 1
        assert json.loads(err.splitlines()[-1])["error"] == "io"


class TestSelect:
    def test_single_task_from_stdin(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--top-k", "2"], capsys, monkeypatch, stdin_text=_task_line()
        )
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["query_id"] == "q1"
        assert len(record["selected"]) == 2
        assert "timings" not in record

    def test_reads_input_and_writes_output_file(self, tmp_path, capsys):
        task_file = tmp_path / "task.jsonl"
        task_file.write_text(_task_line(), encoding="utf-8")
        out_file = tmp_path / "result.jsonl"
        code, out, _ = run_cli(
            ["select", "--input", str(task_file), "--output", str(out_file), "--top-k", "1"],
            capsys,
        )
        assert code == 0
        assert out == ""
        record = json.loads(out_file.read_text(encoding="utf-8"))
        assert record["query_id"] == "q1"

    def test_rejects_multiple_tasks(self, capsys, monkeypatch):
        two = _task_line("q1") + _task_line("q2")
        code, _, err = run_cli(["select"], capsys, monkeypatch, stdin_text=two)
        assert code == 1
        assert json.loads(err.splitlines()[-1])["error"] == "invalid_task"

    def test_invalid_json_line_names_position(self, capsys, monkeypatch):
        code, _, err = run_cli(["select"], capsys, monkeypatch, stdin_text="{broken\n")
        assert code == 1
        payload = json.loads(err.splitlines()[-1])
        assert payload["error"] == "invalid_task"
        assert "line 1" in payload["message"]

    def test_beta_one_selects_by_relevance(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--beta", "1.0", "--top-k", "3"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        record = json.loads(out)
        rels = [s["relevance"] for s in record["selected"]]
        assert rels == sorted(rels, reverse=True)
        assert record["selected"][0]["pool_index"] == 0

    def test_order_by_relevance_reorders_presentation(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--order-by-relevance", "--top-k", "3"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        idx = [s["pool_index"] for s in json.loads(out)["selected"]]
        assert idx == sorted(idx)

    def test_emit_timings_includes_wall_clock(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--emit-timings", "--top-k", "1"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        assert "timings" in json.loads(out)

    def test_persist_matrices(self, tmp_path, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--persist-matrices", str(tmp_path), "--top-k", "1"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        ref = json.loads(out)["matrices_ref"]
        assert ref is not None and ref.endswith("q1.json")
        header = json.loads((tmp_path / "q1.json").read_text(encoding="utf-8"))
        assert header["fields"] == ["k_sim", "conflict", "relevance"]

    def test_skip_conflict_runs_without_nli(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--skip-conflict", "--top-k", "2"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        assert json.loads(out)["diagnostics"]["nli_calls"] == 0


class TestPrintConfig:
    def test_defaults(self, capsys):
        code, out, _ = run_cli(["select", "--print-config"], capsys)
        assert code == 0
        echo = json.loads(out)
        assert echo["beta"] == 0.8 and echo["gamma"] == 0.8
        assert echo["k"] == 5 and echo["m"] == 30
        assert echo["providers"]["embed"] == "mock(seed=0,dim=32)"
        assert echo["providers"]["nli"] == "mock(fixtures=0)"
        assert echo["providers"]["retrieve"] is None

    def test_config_file_overrides_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"beta": 0.55, "k": 7, "mock_seed": 3}), encoding="utf-8")
        code, out, _ = run_cli(["select", "--config", str(cfg), "--print-config"], capsys)
        assert code == 0
        echo = json.loads(out)
        assert echo["beta"] == 0.55 and echo["k"] == 7
        assert echo["providers"]["embed"] == "mock(seed=3,dim=32)"

    def test_flags_override_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"beta": 0.55, "gamma": 0.2}), encoding="utf-8")
        code, out, _ = run_cli(
            ["select", "--config", str(cfg), "--beta", "0.9", "--print-config"], capsys
        )
        assert code == 0
        echo = json.loads(out)
        assert echo["beta"] == 0.9
        assert echo["gamma"] == 0.2

    def test_env_url_beats_config_endpoint(self, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"endpoints": {"embed": {"base_url": "http://cfg.example"}}}),
            encoding="utf-8",
        )
        monkeypatch.setenv("SMART_EMBED_URL", "http://env.example")
        code, out, _ = run_cli(["select", "--config", str(cfg), "--print-config"], capsys)
        assert code == 0
        assert json.loads(out)["providers"]["embed"] == "http://env.example"

    def test_config_endpoint_beats_double(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"endpoints": {"nli": {"base_url": "http://nli.example"}}}),
            encoding="utf-8",
        )
        code, out, _ = run_cli(["select", "--config", str(cfg), "--print-config"], capsys)
        assert code == 0
        assert json.loads(out)["providers"]["nli"] == "http://nli.example"

    def test_invalid_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("not json", encoding="utf-8")
        code, _, err = run_cli(["select", "--config", str(cfg), "--print-config"], capsys)
        assert code == 1
        assert json.loads(err.splitlines()[-1])["error"] == "invalid_task"


class TestGoldenReplay:
    def test_cli_reproduces_frozen_output(self, tmp_path, capsys):
        data = package_files("smartselect") / "data"
        fixture = json.loads((data / "golden_fixture.json").read_text(encoding="utf-8"))
        expected = (data / "golden_output.jsonl").read_text(encoding="utf-8")

        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text(
            "".join(json.dumps(doc) + "\n" for doc in fixture["corpus"]), encoding="utf-8"
        )
        nli = tmp_path / "nli.json"
        nli.write_text(json.dumps(fixture["nli"]), encoding="utf-8")
        task = tmp_path / "task.jsonl"
        task.write_text(json.dumps(fixture["task"]) + "\n", encoding="utf-8")

        cfg = fixture["config"]
        code, out, _ = run_cli(
            [
                "select",
                "--input", str(task),
                "--corpus", str(corpus),
                "--nli-fixtures", str(nli),
                "--mock-seed", str(fixture["embed"]["seed"]),
                "--mock-dim", str(fixture["embed"]["dim"]),
                "--beta", str(cfg["beta"]),
                "--gamma", str(cfg["gamma"]),
                "--top-k", str(cfg["k"]),
                "--pre-rank", str(cfg["m"]),
            ],
            capsys,
        )
        assert code == 0
        assert out == expected


class TestBatch:
    def _tasks_file(self, tmp_path, include_broken=True):
        lines = [_task_line("q1"), _task_line("q2")]
        if include_broken:
            lines.insert(1, json.dumps({
                "query_id": "broken",
                "query": "why?",
                "documents": [{"id": "d", "text": "x"}],
            }) + "\n")
        path = tmp_path / "tasks.jsonl"
        path.write_text("".join(lines), encoding="utf-8")
        return path

    def test_partial_failure_exits_two(self, tmp_path, capsys):
        path = self._tasks_file(tmp_path)
        code, out, err = run_cli(["batch", "--input", str(path), "--top-k", "2"], capsys)
        assert code == 2
        records = [json.loads(line) for line in out.splitlines()]
        assert [r["query_id"] for r in records] == ["q1", "broken", "q2"]
        assert records[1]["error"] == "empty_pool"
        summary = json.loads(err.splitlines()[-1])
        assert summary["tasks"] == 3 and summary["failed"] == 1

    def test_all_success_exits_zero(self, tmp_path, capsys):
        path = self._tasks_file(tmp_path, include_broken=False)
        code, out, err = run_cli(["batch", "--input", str(path), "--top-k", "2"], capsys)
        assert code == 0
        assert len(out.splitlines()) == 2
        assert json.loads(err.splitlines()[-1])["failed"] == 0

    def test_parallel_output_matches_serial(self, tmp_path, capsys):
        path = self._tasks_file(tmp_path, include_broken=False)
        argv = ["batch", "--input", str(path), "--top-k", "2"]
        code1, out1, _ = run_cli(argv + ["--parallel", "1"], capsys)
        code2, out2, _ = run_cli(argv + ["--parallel", "4"], capsys)
        assert code1 == code2 == 0
        assert out1 == out2


class TestSweep:
    def test_default_grid_size(self, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["sweep", "--top-k", "2", "--pre-rank", "5"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "query_id,beta,gamma,objective,selected_ids"
        assert len(lines) == 1 + 6 * 9

    def test_explicit_grids_and_objective_consistency(self, capsys, monkeypatch):
        argv = ["sweep", "--beta-grid", "0.7", "--gamma-grid", "0.3", "--top-k", "2"]
        code, out, _ = run_cli(argv, capsys, monkeypatch, stdin_text=_task_line())
        assert code == 0
        row = out.splitlines()[1].split(",")
        assert row[0] == "q1" and float(row[1]) == 0.7 and float(row[2]) == 0.3

        code, select_out, _ = run_cli(
            ["select", "--beta", "0.7", "--gamma", "0.3", "--top-k", "2"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        record = json.loads(select_out)
        assert float(row[3]) == record["objective"]
        assert row[4] == "|".join(s["sent_id"] for s in record["selected"])

    def test_rerun_is_byte_identical(self, capsys, monkeypatch):
        argv = ["sweep", "--beta-grid", "0.6,0.8", "--gamma-grid", "0.2,0.9", "--top-k", "2"]
        _, out1, _ = run_cli(argv, capsys, monkeypatch, stdin_text=_task_line())
        _, out2, _ = run_cli(argv, capsys, monkeypatch, stdin_text=_task_line())
        assert out1 == out2

    def test_bad_grid_exits_one(self, capsys, monkeypatch):
        code, _, err = run_cli(
            ["sweep", "--beta-grid", "0.5,hot"], capsys, monkeypatch, stdin_text=_task_line()
        )
        assert code == 1
        assert json.loads(err.splitlines()[-1])["error"] == "invalid_hyperparameter"

    def test_scores_ranking(self, tmp_path, capsys, monkeypatch):
        scores = tmp_path / "scores.csv"
        scores.write_text(
            "query_id,beta,gamma,score\n"
            "q1,0.6,0.2,0.50\n"
            "q2,0.6,0.2,0.70\n"
            "q1,0.8,0.9,0.90\n"
            "q2,0.8,0.9,0.80\n"
            "q1,0.9,0.9,0.99\n",     # not in the sweep grid, must be ignored
            encoding="utf-8",
        )
        rank = tmp_path / "rank.csv"
        code, _, _ = run_cli(
            [
                "sweep", "--beta-grid", "0.6,0.8", "--gamma-grid", "0.2,0.9",
                "--scores", str(scores), "--rank-output", str(rank),
                "--output", str(tmp_path / "sweep.csv"), "--top-k", "2",
            ],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        rows = rank.read_text(encoding="utf-8").splitlines()
        assert rows[0] == "beta,gamma,mean_score,n_tasks"
        assert rows[1].startswith("0.8,0.9,0.85") and rows[1].endswith(",2")
        assert rows[2].startswith("0.6,0.2,0.6") and rows[2].endswith(",2")
        assert len(rows) == 3

    def test_rank_output_requires_scores(self, capsys, monkeypatch):
        code, _, err = run_cli(
            ["sweep", "--rank-output", "/tmp/r.csv"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 1
        assert json.loads(err.splitlines()[-1])["error"] == "invalid_hyperparameter"


class TestInspectOps:
    def _run_op(self, op, payload, capsys, monkeypatch):
        code, out, err = run_cli(
            ["inspect", "--op", op], capsys, monkeypatch, stdin_text=json.dumps(payload)
        )
        assert code == 0, err
        return json.loads(out)

    def test_symmetrize(self, capsys, monkeypatch):
        payload = {"directional": [[0, 0.8, 0.7], [0.6, 0, 0.9], [0.5, 0.8, 0]]}
        result = self._run_op("symmetrize", payload, capsys, monkeypatch)
        np.testing.assert_allclose(
            result["conflict"],
            [[0, 0.7, 0.6], [0.7, 0, 0.85], [0.6, 0.85, 0]],
            rtol=0, atol=1e-15,
        )

    def test_weight_hand_value(self, capsys, monkeypatch):
        payload = {
            "k_sim": [[1.0, 0.5], [0.5, 1.0]],
            "conflict": [[0.0, 0.9], [0.9, 0.0]],
            "gamma": 1.0,
        }
        result = self._run_op("weight", payload, capsys, monkeypatch)
        assert result["k_weighted"][0][1] == pytest.approx(0.5 * math.exp(-0.1), abs=1e-15)
        assert result["k_weighted"][0][0] == 1.0

    def test_kernel_scales_by_relevance(self, capsys, monkeypatch):
        payload = {
            "k_sim": [[1.0, 0.4], [0.4, 1.0]],
            "conflict": [[0.0, 1.0], [1.0, 0.0]],
            "relevance": [0.9, 0.5],
            "gamma": 2.0,
        }
        result = self._run_op("kernel", payload, capsys, monkeypatch)
        assert result["gamma"] == 2.0
        assert result["l"][0][0] == pytest.approx(0.81, abs=1e-15)
        assert result["l"][0][1] == pytest.approx(0.9 * 0.5 * 0.4, abs=1e-15)

    def test_select_matches_library(self, capsys, monkeypatch):
        rng = np.random.default_rng(611)
        from tests.test_kernel import random_relations

        rel = random_relations(rng, 8)
        directional = rng.uniform(0, 1, (8, 8))
        np.fill_diagonal(directional, 0.0)
        payload = {
            "k_sim": rel.k_sim.tolist(),
            "conflict": directional.tolist(),
            "relevance": rel.relevance.tolist(),
            "beta": 0.6,
            "gamma": 1.3,
            "k": 3,
        }
        result = self._run_op("select", payload, capsys, monkeypatch)

        weighted = build_weighted_similarity(rel.k_sim, symmetrize_conflict(directional), 1.3)
        expected = greedy_select(build_kernel(weighted, rel.relevance), SelectionConfig(beta=0.6, gamma=1.3, k=3))
        assert result["selected"] == list(expected.selected)
        assert result["gains"] == list(expected.gains)
        assert result["objective"] == expected.objective
        assert result["stopped_early"] is False

    def test_spectrum_on_asymmetric_matrix(self, capsys, monkeypatch):
        payload = {"matrix": [[0, 0.8, 0.7], [0.8, 0, 0.9], [0.7, 0.8, 0]]}
        result = self._run_op("spectrum", payload, capsys, monkeypatch)
        assert result["symmetric"] is False
        assert result["is_psd"] is None
        np.testing.assert_allclose(
            result["eigenvalues"], [-0.8676, -0.7, 1.5676], rtol=0, atol=5e-4
        )

    def test_payload_from_file(self, tmp_path, capsys):
        payload_file = tmp_path / "p.json"
        payload_file.write_text(json.dumps({"directional": [[0.0, 0.4], [0.2, 0.0]]}), encoding="utf-8")
        code, out, _ = run_cli(
            ["inspect", "--op", "symmetrize", "--payload", str(payload_file)], capsys
        )
        assert code == 0
        np.testing.assert_allclose(
            json.loads(out)["conflict"], [[0.0, 0.3], [0.3, 0.0]], rtol=0, atol=1e-15
        )

    def test_missing_payload_field(self, capsys, monkeypatch):
        code, _, err = run_cli(
            ["inspect", "--op", "weight"], capsys, monkeypatch, stdin_text="{}"
        )
        assert code == 1
        payload = json.loads(err.splitlines()[-1])
        assert payload["error"] == "invalid_task"
        assert "k_sim" in payload["message"]

    def test_dump_and_op_mutually_exclusive(self, capsys, monkeypatch):
        code, _, err = run_cli(["inspect"], capsys, monkeypatch, stdin_text="")
        assert code == 1
        code, _, err = run_cli(
            ["inspect", "--dump", "x", "--op", "symmetrize"], capsys, monkeypatch, stdin_text=""
        )
        assert code == 1

    def test_dump_summarizes_persisted_matrices(self, tmp_path, capsys, monkeypatch):
        code, out, _ = run_cli(
            ["select", "--persist-matrices", str(tmp_path), "--top-k", "2"],
            capsys, monkeypatch, stdin_text=_task_line(),
        )
        assert code == 0
        ref = json.loads(out)["matrices_ref"]
        code, out, _ = run_cli(["inspect", "--dump", ref], capsys)
        assert code == 0
        summary = json.loads(out)
        assert summary["fields"] == ["k_sim", "conflict", "relevance"]
        assert summary["k_sim"]["is_psd"] is True
        assert summary["relevance"]["min"] >= 1e-6


class TestVerifyCommand:
    def test_single_suite_passes(self, capsys):
        code, out, _ = run_cli(["verify", "--suite", "normalization"], capsys)
        assert code == 0
        summary = json.loads(out)
        assert summary["passed"] is True
        assert all(c["suite"] == "normalization" for c in summary["checks"])

    def test_unknown_suite_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["verify", "--suite", "astrology"])
        assert excinfo.value.code == 1
