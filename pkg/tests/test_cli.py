"""CLI wiring: every subcommand runs green on the synthetic corpus."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from histocurate import formats
from histocurate.cli import cli, main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def work(tmp_path_factory, runner):
    """Synthetic corpus plus the full artifact chain, built via the CLI."""
    root = tmp_path_factory.mktemp("cli_work")
    corpus = root / "corpus"

    def run(args):
        result = runner.invoke(cli, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    run(["synth", "--out", str(corpus), "--slides", "8", "--diagnoses", "4", "--size", "512",
         "--seed", "1"])
    run(["ingest", "--manifest", str(corpus / "manifest.jsonl"),
         "--rules", str(corpus / "groups.yaml"), "--out", str(root / "assigned.jsonl")])
    run(["features", "--manifest", str(root / "assigned.jsonl"), "--out", str(root / "f.rvfv")])
    run(["stats", "--manifest", str(root / "assigned.jsonl"), "--out", str(root / "stats.json"),
         "--seed", "0"])
    run(["cluster", "--manifest", str(root / "assigned.jsonl"), "--features", str(root / "f.rvfv"),
         "--k", "6", "--seed", "0", "--model-out", str(root / "model.rvcm"),
         "--sample-out", str(root / "sample.csv")])
    run(["propagate", "--features", str(root / "f.rvfv"), "--sample", str(root / "sample.csv"),
         "--out", str(root / "labels.csv")])
    # merge map template covers 10 raw ids; regenerate one sized for k=6
    (root / "merge.yaml").write_text(
        "clusters: {0: 0, 1: 1, 2: 2, 3: 0, 4: 1, 5: 2}\n"
        "metas:\n  0: {weight: 1.0}\n  1: {weight: 1.0}\n  2: {weight: 1.0}\n"
    )
    run(["merge", "--labels", str(root / "labels.csv"), "--mergemap", str(root / "merge.yaml"),
         "--out", str(root / "metas.csv")])
    run(["index", "--manifest", str(root / "assigned.jsonl"), "--features", str(root / "f.rvfv"),
         "--metas", str(root / "metas.csv"), "--out", str(root / "index.json")])
    (root / "weights.yaml").write_text(
        "groups: {0: 1.0, 1: 1.0, 2: 1.0}\nmetas: {0: 1.0, 1: 1.0, 2: 1.0}\n"
    )
    run(["sample", "--index", str(root / "index.json"), "--weights", str(root / "weights.yaml"),
         "--n", "200", "--seed", "0", "--out", str(root / "draws.csv"),
         "--freq-out", str(root / "freq.csv")])
    run(["embed", "--manifest", str(root / "assigned.jsonl"), "--features", str(root / "f.rvfv"),
         "--out", str(root / "store.rves")])
    return {"root": root, "corpus": corpus, "run": run}


class TestPipelineCommands:
    def test_artifacts_exist(self, work):
        root = work["root"]
        for name in ("assigned.jsonl", "f.rvfv", "stats.json", "model.rvcm", "sample.csv",
                     "labels.csv", "metas.csv", "index.json", "draws.csv", "freq.csv",
                     "store.rves"):
            assert (root / name).exists(), name

    def test_feature_dump_valid(self, work):
        dump = formats.read_feature_dump(work["root"] / "f.rvfv")
        assert dump.dim == 36 and len(dump) == 8 * 4  # 512^2 -> 4 tiles per slide

    def test_sample_determinism(self, work, runner):
        root = work["root"]
        for name in ("a.csv", "b.csv"):
            work["run"](["sample", "--index", str(root / "index.json"),
                         "--weights", str(root / "weights.yaml"), "--n", "100", "--seed", "7",
                         "--out", str(root / name)])
        assert (root / "a.csv").read_bytes() == (root / "b.csv").read_bytes()

    def test_augment_writes_pairs(self, work):
        root = work["root"]
        work["run"](["augment", "--manifest", str(root / "assigned.jsonl"),
                     "--stats", str(root / "stats.json"), "--count", "2", "--seed", "0",
                     "--out", str(root / "views")])
        files = sorted(p.name for p in (root / "views").iterdir())
        assert len(files) == 4 and any("before" in f for f in files)


class TestQueryCommands:
    def test_query_deterministic_output(self, work, runner):
        root = work["root"]
        roi = root / "roi.json"
        roi.write_text(json.dumps({"slide_id": "slide_000",
                                   "tiles": [{"x": 0, "y": 0}, {"x": 256, "y": 0}]}))
        outputs = []
        for _ in range(2):
            result = runner.invoke(cli, ["query", "--store", str(root / "store.rves"),
                                         "--roi", str(roi), "--k", "1", "--top", "5"],
                                   catch_exceptions=False)
            assert result.exit_code == 0
            outputs.append(result.output)
        assert outputs[0] == outputs[1]
        payload = json.loads(outputs[0])
        assert len(payload["results"]) == 5
        assert all(r["slide_id"] != "slide_000" for r in payload["results"])

    def test_eval_retrieval_reports_accuracy(self, work, runner):
        root = work["root"]
        result = runner.invoke(cli, ["eval-retrieval", "--store", str(root / "store.rves"),
                                     "--accuracy-ks", "1,3", "--out", str(root / "acc.csv")],
                               catch_exceptions=False)
        assert result.exit_code == 0
        lines = (root / "acc.csv").read_text().strip().splitlines()
        assert lines[0] == "k,accuracy"
        assert lines[1].startswith("top-1,") and lines[2].startswith("top-3,")

    def test_concept_map_outputs(self, work, runner):
        root = work["root"]
        result = runner.invoke(cli, ["concept-map", "--store", str(root / "store.rves"),
                                     "--components", "3", "--component", "0",
                                     "--out", str(root / "maps")],
                               catch_exceptions=False)
        assert result.exit_code == 0
        files = list((root / "maps").iterdir())
        assert (root / "maps" / "eigenvalues.csv").exists()
        assert sum(1 for f in files if f.suffix == ".png") == 8


class TestProbeCommand:
    def test_probe_reports_metrics(self, work, runner, tmp_path):
        rng = np.random.default_rng(0)
        n, d = 300, 8
        x = rng.normal(0, 1, (n, d)).astype(np.float32)
        y = (x[:, 0] > 0).astype(int)
        x[y == 1, 1] += 8.0
        dump = formats.FeatureDump(
            np.zeros(n, dtype=np.uint32),
            np.zeros((n, 2), dtype=np.uint32),
            x,
        )
        formats.write_feature_dump(tmp_path / "e.rvfv", dump)
        with open(tmp_path / "l.csv", "w") as fh:
            fh.write("row,class\n")
            for i, label in enumerate(y):
                fh.write(f"{i},{label}\n")
        result = runner.invoke(cli, ["probe", "--embeddings", str(tmp_path / "e.rvfv"),
                                     "--labels", str(tmp_path / "l.csv"), "--lr", "0.05",
                                     "--epochs", "5", "--seed", "0",
                                     "--out", str(tmp_path / "report.csv")],
                               catch_exceptions=False)
        assert result.exit_code == 0
        report = (tmp_path / "report.csv").read_text()
        assert "val_balanced_accuracy" in report and "val_macro_f1" in report


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["query", "--no-such-flag"]) == 1
        assert "Usage" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_data_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"slide_id": "x"}\n')
        assert main(["features", "--manifest", str(bad), "--out", str(tmp_path / "f.rvfv")]) == 2
        assert "missing field" in capsys.readouterr().err

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0

    def test_every_subcommand_documents_flags(self, runner):
        from histocurate.cli import cli as group

        for name, command in group.commands.items():
            result = runner.invoke(group, [name, "--help"], catch_exceptions=False)
            assert result.exit_code == 0, name
            for param in command.params:
                if param.param_type_name == "option":
                    assert param.opts[0] in result.output, (name, param.opts)
