"""Config layering, every subcommand end to end, exit codes, manifests."""

import configparser
import json

import pytest

from paretorank.cli import EXIT_BACKEND, EXIT_CHECK_FAILED, EXIT_VALIDATION, main, unlabeled_pairs
from paretorank.config import (
    ConfigError,
    apply_overrides,
    config_to_text,
    default_config,
    load_config,
    parse_fractions,
)
from paretorank.dataset_io import read_dataset, read_truth
from paretorank.evaluation import frontier_from_csv, read_report
from paretorank.judge import read_verdicts
from paretorank.manifest import file_sha256
from paretorank.ranker import read_model

# small world: fast enough for a full pipeline run per test
SIM_ARGS = [
    "--simulator.n_queries=40",
    "--simulator.n_items=120",
    "--simulator.candidates_per_query=10",
    "--simulator.sessions_total=1500",
    "--simulator.human_label_fraction=0.15",
]
RANKER_ARGS = ["--ranker.n_trees=8", "--ranker.min_examples_per_leaf=2"]


class TestConfigLayer:
    def test_defaults_load_without_file(self):
        assert load_config(None) == default_config()

    def test_text_round_trip(self, tmp_path):
        path = tmp_path / "conf.ini"
        path.write_text(config_to_text(default_config()))
        assert load_config(str(path)) == default_config()

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError):
            load_config("/no/such/config.ini")

    def test_override_coerces_to_default_type(self):
        config = default_config()
        apply_overrides(
            config,
            [
                "simulator.n_queries=500",
                "simulator.zipf_exponent=1.4",
                "backend.kind=http",
            ],
        )
        assert config["simulator"]["n_queries"] == 500
        assert config["simulator"]["zipf_exponent"] == 1.4
        assert config["backend"]["kind"] == "http"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config(), ["nope.key=1"])

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config(), ["simulator.bogus=1"])

    def test_uncoercible_value_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config(), ["simulator.n_queries=abc"])

    def test_file_then_flag_precedence(self, tmp_path):
        path = tmp_path / "conf.ini"
        path.write_text("[simulator]\nn_queries = 30\n")
        config = load_config(str(path))
        assert config["simulator"]["n_queries"] == 30
        apply_overrides(config, ["simulator.n_queries=20"])
        assert config["simulator"]["n_queries"] == 20

    def test_parse_fractions(self):
        assert parse_fractions("0.0, 0.5,1.0") == (0.0, 0.5, 1.0)
        with pytest.raises(ConfigError):
            parse_fractions(" , ")
        with pytest.raises(ConfigError):
            parse_fractions("0.1,zap")


def run(args):
    return main([str(a) for a in args])


def simulate_into(out_dir, seed=3, extra=()):
    code = run(
        ["simulate", "--out-dir", out_dir, "--seed", seed, *SIM_ARGS, *extra]
    )
    assert code == 0
    return out_dir


class TestPipeline:
    def test_full_chain(self, tmp_path):
        sim = str(tmp_path / "sim")
        simulate_into(sim)
        for name in ("train.jsonl", "eval.jsonl", "truth.jsonl",
                     "manifest_simulate.json"):
            assert (tmp_path / "sim" / name).exists()

        manifest = json.loads((tmp_path / "sim" / "manifest_simulate.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 3
        assert manifest["outputs"]["train.jsonl"] == file_sha256(f"{sim}/train.jsonl")
        stored = configparser.ConfigParser()
        stored.read_string(manifest["config"])
        assert stored["simulator"]["n_queries"] == "40"

        train_path = f"{sim}/train.jsonl"
        truth_path = f"{sim}/truth.jsonl"
        train_digest = file_sha256(train_path)

        lab = str(tmp_path / "lab")
        code = run(
            ["label", "--dataset", train_path, "--truth", truth_path,
             "--out-dir", lab, "--seed", 3]
        )
        assert code == 0
        assert (tmp_path / "lab" / "verdict_cache.jsonl").exists()
        # inputs are read-only for every command
        assert file_sha256(train_path) == train_digest

        train_set = read_dataset(train_path)
        verdicts = read_verdicts(f"{lab}/verdicts.jsonl")
        assert len(verdicts) == len(unlabeled_pairs(train_set))
        textual = {
            (ex.query_id, ex.app_id)
            for ex in train_set.examples
            if ex.source.is_textual
        }
        judged = {(v.query_id, v.app_id) for v in verdicts}
        assert not judged & textual

        augmented = read_dataset(f"{lab}/augmented.jsonl")
        assert len(augmented.examples) == len(train_set.examples) + len(verdicts)

        je = str(tmp_path / "je")
        code = run(
            ["judge-eval", "--verdicts", f"{lab}/verdicts.jsonl",
             "--truth", truth_path, "--out-dir", je]
        )
        assert code == 0
        judge_report = json.loads((tmp_path / "je" / "judge_report.json").read_text())
        assert 0.6 <= judge_report["macro"]["f1"] <= 0.95

        mixdir = str(tmp_path / "mix")
        code = run(
            ["mix", "--dataset", f"{lab}/augmented.jsonl", "--fraction", 0.5,
             "--out-dir", mixdir, "--seed", 9]
        )
        assert code == 0
        read_dataset(f"{mixdir}/mixed.jsonl")

        tr = str(tmp_path / "tr")
        code = run(
            ["train", "--dataset", f"{lab}/augmented.jsonl", "--out-dir", tr,
             *RANKER_ARGS]
        )
        assert code == 0
        model = read_model(f"{tr}/model.json")
        assert len(model.trees) == 8

        ev = str(tmp_path / "ev")
        code = run(
            ["eval", "--model", f"{tr}/model.json",
             "--dataset", f"{sim}/eval.jsonl", "--out-dir", ev]
        )
        assert code == 0
        report = read_report(f"{ev}/eval_report.json")
        assert report.textual is not None and report.behavioral is not None

        bu = str(tmp_path / "bu")
        code = run(
            ["buckets", "--report-a", f"{ev}/eval_report.json",
             "--report-b", f"{ev}/eval_report.json",
             "--dataset", f"{sim}/eval.jsonl", "--out-dir", bu]
        )
        assert code == 0
        bucket_lines = (tmp_path / "bu" / "buckets.csv").read_text().splitlines()
        assert all(line.endswith(",0.0") for line in bucket_lines[1:])

        sw = str(tmp_path / "sw")
        code = run(
            ["sweep", "--train-dataset", f"{lab}/augmented.jsonl",
             "--eval-dataset", f"{sim}/eval.jsonl", "--out-dir", sw,
             "--experiment.behavioral_fractions=0.0,1.0", *RANKER_ARGS]
        )
        assert code == 0
        points = frontier_from_csv((tmp_path / "sw" / "frontier.csv").read_text())
        assert [p.behavioral_fraction for p in points] == [0.0, 1.0]

    def test_simulate_deterministic_across_runs(self, tmp_path):
        a = simulate_into(str(tmp_path / "a"), seed=11)
        b = simulate_into(str(tmp_path / "b"), seed=11)
        c = simulate_into(str(tmp_path / "c"), seed=12)
        for name in ("train.jsonl", "eval.jsonl", "truth.jsonl"):
            assert file_sha256(f"{a}/{name}") == file_sha256(f"{b}/{name}")
        assert file_sha256(f"{a}/train.jsonl") != file_sha256(f"{c}/train.jsonl")

    def test_label_rerun_with_cache_is_byte_identical(self, tmp_path):
        sim = simulate_into(str(tmp_path / "sim"), seed=5)
        lab1 = str(tmp_path / "lab1")
        lab2 = str(tmp_path / "lab2")
        cache = str(tmp_path / "shared_cache.jsonl")
        for out in (lab1, lab2):
            code = run(
                ["label", "--dataset", f"{sim}/train.jsonl",
                 "--truth", f"{sim}/truth.jsonl", "--cache", cache,
                 "--out-dir", out, "--seed", 5]
            )
            assert code == 0
        assert file_sha256(f"{lab1}/verdicts.jsonl") == file_sha256(
            f"{lab2}/verdicts.jsonl"
        )
        assert file_sha256(f"{lab1}/augmented.jsonl") == file_sha256(
            f"{lab2}/augmented.jsonl"
        )


EXPERIMENT_ARGS = [
    "--simulator.n_queries=120",
    "--simulator.n_items=300",
    "--simulator.candidates_per_query=12",
    "--simulator.sessions_total=6000",
    "--simulator.human_label_fraction=0.12",
    "--ranker.n_trees=10",
    "--ranker.min_examples_per_leaf=5",
    "--experiment.behavioral_fractions=0.0,1.0",
]


class TestExperiment:
    def test_single_seed_bundle(self, tmp_path):
        out = str(tmp_path / "exp")
        code = run(
            ["experiment", "--out-dir", out, "--seeds", "7", *EXPERIMENT_ARGS]
        )
        assert code == 0
        seed_dir = tmp_path / "exp" / "seed_7"
        for name in ("eval_prod.json", "eval_augmented.json", "judge_report.json",
                     "buckets.csv", "comparison.txt", "manifest_experiment.json"):
            assert (seed_dir / name).exists()
        assert (tmp_path / "exp" / "frontier.csv").exists()

        payload = json.loads((tmp_path / "exp" / "experiment_report.json").read_text())
        assert len(payload["seeds"]) == 1
        row = payload["seeds"][0]
        assert row["seed"] == 7
        for key in ("textual_delta", "behavioral_delta", "bottom_quartile_delta",
                    "top_quartile_delta", "judge_accuracy", "label_failures"):
            assert key in row
        assert "train_split" not in row
        assert "mean_textual_delta" in payload["summary"]

        comparison = (seed_dir / "comparison.txt").read_text()
        assert "prod" in comparison and "llm-augmented" in comparison

    def test_rerun_reproduces_identical_artifacts(self, tmp_path):
        outs = []
        for sub in ("x", "y"):
            out = str(tmp_path / sub)
            code = run(
                ["experiment", "--out-dir", out, "--seeds", "4", *EXPERIMENT_ARGS]
            )
            assert code == 0
            outs.append(out)
        a, b = outs
        for rel in (
            "seed_4/eval_prod.json",
            "seed_4/eval_augmented.json",
            "seed_4/judge_report.json",
            "seed_4/buckets.csv",
            "seed_4/comparison.txt",
            "frontier.csv",
            "experiment_report.json",
        ):
            assert file_sha256(f"{a}/{rel}") == file_sha256(f"{b}/{rel}"), rel

    def test_check_flag_enforces_thresholds(self, tmp_path):
        out = str(tmp_path / "strict")
        code = run(
            ["experiment", "--out-dir", out, "--seeds", "7", "--check",
             "--experiment.textual_gain_min=0.9", *EXPERIMENT_ARGS]
        )
        assert code == EXIT_CHECK_FAILED


class TestExitCodes:
    def test_invalid_sim_config(self, tmp_path):
        code = run(
            ["simulate", "--out-dir", str(tmp_path), "--simulator.n_queries=0"]
        )
        assert code == EXIT_VALIDATION

    def test_unknown_override_key(self, tmp_path):
        code = run(
            ["simulate", "--out-dir", str(tmp_path), "--bogus.key=1", *SIM_ARGS]
        )
        assert code == EXIT_VALIDATION

    def test_malformed_extra_argument(self, tmp_path):
        code = run(["simulate", "--out-dir", str(tmp_path), "--frobnicate"])
        assert code == EXIT_VALIDATION

    def test_missing_config_file(self, tmp_path):
        code = run(
            ["simulate", "--out-dir", str(tmp_path), "--config", "/no/file.ini"]
        )
        assert code == EXIT_VALIDATION

    def test_fraction_out_of_range(self, tmp_path):
        sim = simulate_into(str(tmp_path / "sim"))
        code = run(
            ["mix", "--dataset", f"{sim}/train.jsonl", "--fraction", 1.5,
             "--out-dir", str(tmp_path / "out")]
        )
        assert code == EXIT_VALIDATION

    def test_missing_dataset_file(self, tmp_path):
        code = run(
            ["train", "--dataset", str(tmp_path / "nope.jsonl"),
             "--out-dir", str(tmp_path / "out")]
        )
        assert code == EXIT_VALIDATION

    def test_oracle_backend_without_truth(self, tmp_path):
        sim = simulate_into(str(tmp_path / "sim"))
        code = run(
            ["label", "--dataset", f"{sim}/train.jsonl",
             "--out-dir", str(tmp_path / "out")]
        )
        assert code == EXIT_VALIDATION

    def test_unreachable_http_backend(self, tmp_path):
        sim = simulate_into(str(tmp_path / "sim"))
        code = run(
            ["label", "--dataset", f"{sim}/train.jsonl",
             "--out-dir", str(tmp_path / "out"),
             "--backend.kind=http", "--backend.url=http://127.0.0.1:9/v1/chat",
             "--backend.model=judge-v1", "--backend.max_attempts=1",
             "--backend.max_transport_failures=1", "--concurrency", 1]
        )
        assert code == EXIT_BACKEND


class TestHelp:
    def test_simulate_help_lists_every_simulator_key(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in default_config()["simulator"]:
            assert f"simulator.{key}" in text

    def test_experiment_help_spans_all_sections(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["experiment", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for probe in ("simulator.n_queries", "judge.mode", "backend.kind",
                      "ranker.n_trees", "experiment.n_seeds"):
            assert probe in text
