import json
import logging
import os

import pytest

from trajgrpo import __version__
from trajgrpo.main import EXIT_ACCEPTANCE, EXIT_DATA, EXIT_OK, EXIT_USAGE, run


@pytest.fixture(autouse=True)
def isolated_cli(monkeypatch):
    """Clear TRAJGRPO_* overrides and restore root logging after each invocation."""
    for name in list(os.environ):
        if name.startswith("TRAJGRPO_"):
            monkeypatch.delenv(name)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def json_rows(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class TestExitCodes:
    def test_version(self, capsys):
        assert run(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_unknown_flag(self):
        assert run(["eval", "--bogus"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert run(["fly"]) == EXIT_USAGE

    def test_bad_choice(self):
        assert run(["eval", "--predictor", "oracle"]) == EXIT_USAGE

    def test_policy_needs_params(self):
        assert run(["eval", "--count", "2", "--predictor", "policy"]) == EXIT_USAGE

    def test_malformed_scenario_file(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"format": "trajgrpo-scenarios", "version": 1, "dt": 0.5}\n{"id": "x"}\n', encoding="utf-8")
        assert run(["eval", "--scenarios", str(path)]) == EXIT_DATA

    def test_missing_scenario_file(self, tmp_path):
        assert run(["eval", "--scenarios", str(tmp_path / "absent.jsonl")]) == EXIT_DATA

    def test_params_with_log_std_out_of_range(self, tmp_path):
        params = tmp_path / "params.json"
        assert run(["train", "--count", "2", "--iterations", "1", "--params-out", str(params)]) == EXIT_OK
        data = json.loads(params.read_text(encoding="utf-8"))
        data["log_std"][0] = 5.0
        params.write_text(json.dumps(data), encoding="utf-8")
        assert run(["eval", "--count", "2", "--predictor", "policy", "--params", str(params)]) == EXIT_DATA

    def test_acceptance_check_fails(self):
        args = ["eval", "--count", "4", "--kinds", "constant_turn", "--assert-max-l2", "0.0"]
        assert run(args) == EXIT_ACCEPTANCE

    def test_acceptance_check_passes(self):
        assert run(["eval", "--count", "4", "--predictor", "truth", "--assert-max-l2", "0.0"]) == EXIT_OK


class TestEval:
    def test_json_report_on_stdout(self, capsys):
        assert run(["eval", "--count", "4", "--per-scenario", "--format", "json"]) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert rows[0]["scenario_id"] == "corpus"
        assert rows[0]["count"] == 4
        assert len(rows) == 5

    def test_logs_go_to_stderr_with_run_id(self, capsys):
        assert run(["--log-json", "eval", "--seed", "3", "--count", "2", "--format", "csv"]) == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out.startswith("scenario_id,l2_1s")
        logs = json_rows(captured.err)
        assert logs
        assert any(entry.get("run_id") == "eval-seed3" for entry in logs)

    def test_feasibility_table(self, capsys):
        assert run(["eval", "--count", "3", "--feasibility", "--format", "json"]) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert [set(row) >= {"scenario_id", "overall"} for row in rows] == [True] * 3

    def test_scenario_file_round_trip(self, tmp_path, capsys):
        path = tmp_path / "corpus.jsonl"
        assert run(["gen", "--seed", "2", "--count", "6", "--out", str(path)]) == EXIT_OK
        capsys.readouterr()
        assert run(["eval", "--scenarios", str(path), "--predictor", "truth", "--format", "json"]) == EXIT_OK
        corpus = json_rows(capsys.readouterr().out)[0]
        assert corpus["count"] == 6
        assert corpus["l2_avg"] == 0.0

    def test_file_predictor(self, tmp_path, capsys):
        scenarios = tmp_path / "corpus.jsonl"
        responses = tmp_path / "responses.jsonl"
        assert run(["gen", "--count", "4", "--out", str(scenarios), "--responses-out", str(responses)]) == EXIT_OK
        capsys.readouterr()
        args = ["eval", "--scenarios", str(scenarios), "--predictor", "file", "--predictions", str(responses),
                "--format", "json"]
        assert run(args) == EXIT_OK
        corpus = json_rows(capsys.readouterr().out)[0]
        assert corpus["count"] == 4
        assert corpus["skipped"] == 0


class TestDataCommands:
    def test_validate_baseline_responses(self, tmp_path, capsys):
        responses = tmp_path / "responses.jsonl"
        assert run(["gen", "--count", "4", "--out", str(tmp_path / "s.jsonl"), "--responses-out", str(responses)]) == 0
        capsys.readouterr()
        assert run(["validate", "--responses", str(responses), "--format", "json"]) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert len(rows) == 4
        assert all(row["format_ok"] and row["ordered"] for row in rows)

    def test_reward_scores_responses(self, tmp_path, capsys):
        scenarios = tmp_path / "s.jsonl"
        responses = tmp_path / "responses.jsonl"
        assert run(["gen", "--count", "4", "--out", str(scenarios), "--responses-out", str(responses)]) == EXIT_OK
        capsys.readouterr()
        args = ["reward", "--scenarios", str(scenarios), "--responses", str(responses), "--format", "json"]
        assert run(args) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert len(rows) == 4
        assert all(row["r_format"] == 1 for row in rows)

    def test_gen_requires_out(self):
        assert run(["gen", "--count", "2"]) == EXIT_USAGE


class TestTrainingCommands:
    def test_train_is_reproducible(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.csv"
            params = tmp_path / f"{name}.json"
            args = ["train", "--seed", "7", "--count", "4", "--iterations", "6", "--format", "csv",
                    "--out", str(out), "--params-out", str(params)]
            assert run(args) == EXIT_OK
            outputs.append((out.read_bytes(), params.read_bytes()))
        assert outputs[0] == outputs[1]
        assert outputs[0][0].decode("utf-8").count("\n") == 7

    def test_trained_params_feed_eval(self, tmp_path, capsys):
        params = tmp_path / "params.json"
        assert run(["train", "--count", "2", "--iterations", "2", "--params-out", str(params)]) == EXIT_OK
        capsys.readouterr()
        assert run(["eval", "--count", "2", "--predictor", "policy", "--params", str(params), "--format", "json"]) == 0
        assert json_rows(capsys.readouterr().out)[0]["count"] == 2

    def test_ablate(self, capsys):
        args = ["ablate", "--count", "2", "--iterations", "2", "--toggles", "full;pos,vel", "--format", "json"]
        assert run(args) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert [row["label"] for row in rows] == ["baseline", "full", "w/o pos+vel"]
        assert rows[2]["weights"] == "0,1,0,1"

    def test_ablate_unknown_toggle(self):
        assert run(["ablate", "--count", "2", "--toggles", "w/o speed"]) == EXIT_USAGE

    def test_sweep(self, capsys):
        args = ["sweep-g", "--count", "2", "--iterations", "2", "--sizes", "2,4", "--seeds", "1", "--format", "json"]
        assert run(args) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert [row["group_size"] for row in rows] == [2, 4]

    def test_sweep_rejects_small_groups(self):
        assert run(["sweep-g", "--count", "2", "--sizes", "1,2"]) == EXIT_USAGE

    def test_bad_weights(self):
        assert run(["train", "--count", "2", "--weights", "1,1"]) == EXIT_USAGE

    def test_train_from_warm_start(self, tmp_path):
        params = tmp_path / "params.json"
        args = ["train", "--sft", "--optimizer", "sgd", "--count", "4", "--iterations", "2", "--params-out", str(params)]
        assert run(args) == EXIT_OK
        data = json.loads(params.read_text(encoding="utf-8"))
        assert any(abs(value) > 0 for value in data["bias"])
        assert len(data["feature_scale"]) == 7

    def test_ablate_stages(self, capsys):
        args = ["ablate", "--count", "4", "--iterations", "2", "--stages", "sft,rl,sft+rl", "--format", "json"]
        assert run(args) == EXIT_OK
        rows = json_rows(capsys.readouterr().out)
        assert [row["label"] for row in rows] == ["baseline", "sft", "rl", "sft+rl"]
        assert rows[1]["weights"] == "-"

    def test_ablate_unknown_stage(self):
        assert run(["ablate", "--count", "2", "--stages", "pretrain"]) == EXIT_USAGE

    def test_ablate_stages_and_toggles_conflict(self):
        assert run(["ablate", "--count", "2", "--stages", "rl", "--toggles", "full"]) == EXIT_USAGE

    def test_unknown_optimizer(self):
        assert run(["train", "--count", "2", "--optimizer", "rmsprop"]) == EXIT_USAGE
