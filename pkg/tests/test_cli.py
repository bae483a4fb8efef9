"""CLI surface: subcommands, exit codes, idempotent outputs."""

import json

import pytest

from lase import cli


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture()
def synth_files(tmp_path):
    paths = {
        "nodes": str(tmp_path / "n.tsv"),
        "links": str(tmp_path / "l.tsv"),
        "manifest": str(tmp_path / "m.json"),
        "split": str(tmp_path / "s.json"),
    }
    code = run_cli("synth", "--kind", "interaction", "--n", "60", "--seed", "3",
                   "--nodes", paths["nodes"], "--links", paths["links"],
                   "--manifest", paths["manifest"], "--split", paths["split"])
    assert code == 0
    return paths


def write_config(tmp_path, **kw):
    cfg = dict(arch="sage", hidden=8, depth=1, lr=1e-2, batch_size=32,
               max_epochs=3, patience=3, seed=0)
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestUsageErrors:
    def test_unknown_flag(self):
        assert run_cli("synth", "--bogus", "1") == cli.EXIT_USAGE

    def test_missing_config(self, synth_files, tmp_path):
        code = run_cli("train", "--nodes", synth_files["nodes"],
                       "--links", synth_files["links"],
                       "--config", str(tmp_path / "missing.json"),
                       "--out", str(tmp_path / "out"))
        assert code == cli.EXIT_USAGE
        assert not (tmp_path / "out.metrics.csv").exists()

    def test_no_subcommand(self):
        assert run_cli() == cli.EXIT_USAGE


class TestDataErrors:
    def test_bad_graph_file(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("0\t0\t1.0\n1\t0\t2.0\n")
        links = tmp_path / "links.tsv"
        links.write_text("0\t99\t1.0\n")
        code = run_cli("kernel", "--nodes", str(bad), "--links", str(links))
        assert code == cli.EXIT_DATA


class TestTrainEval:
    def test_train_then_eval(self, synth_files, tmp_path):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "run")
        assert run_cli("train", "--nodes", synth_files["nodes"],
                       "--links", synth_files["links"],
                       "--manifest", synth_files["manifest"],
                       "--split", synth_files["split"],
                       "--config", cfg, "--out", out) == 0
        summary = json.loads((tmp_path / "run.summary.json").read_text())
        assert 0.0 <= summary["test_f1"] <= 1.0
        assert run_cli("eval", "--nodes", synth_files["nodes"],
                       "--links", synth_files["links"],
                       "--manifest", synth_files["manifest"],
                       "--config", cfg, "--checkpoint", out + ".ckpt",
                       "--split", synth_files["split"],
                       "--out", str(tmp_path / "eval.json")) == 0
        ev = json.loads((tmp_path / "eval.json").read_text())
        assert ev["micro_f1"] == pytest.approx(summary["test_f1"])

    def test_train_byte_identical_reruns(self, synth_files, tmp_path):
        cfg = write_config(tmp_path)
        for out in ("a", "b"):
            assert run_cli("train", "--nodes", synth_files["nodes"],
                           "--links", synth_files["links"],
                           "--manifest", synth_files["manifest"],
                           "--split", synth_files["split"],
                           "--config", cfg, "--out", str(tmp_path / out)) == 0
        a = (tmp_path / "a.metrics.csv").read_bytes()
        b = (tmp_path / "b.metrics.csv").read_bytes()
        assert a == b


class TestChecks:
    def test_kernel_pair(self, synth_files, tmp_path):
        out = tmp_path / "kernel.json"
        code = run_cli("kernel", "--nodes", synth_files["nodes"],
                       "--links", synth_files["links"], "--hops", "1",
                       "--decay", "0.5", "--out", str(out))
        assert code == 0
        res = json.loads(out.read_text())
        assert res["rel_err"] < 1e-9

    def test_kernel_gram(self, tmp_path):
        out = tmp_path / "gram.csv"
        assert run_cli("kernel", "--gram", "3", "--hops", "2",
                       "--out", str(out)) == 0
        rows = out.read_text().strip().split("\n")
        assert len(rows) == 3 and len(rows[0].split(",")) == 3

    def test_check_theorem1(self, tmp_path):
        out = tmp_path / "thm.json"
        code = run_cli("check-theorem1", "--hops", "2", "--decay", "0.5",
                       "--trials", "5", "--seed", "1", "--out", str(out))
        assert code == 0
        assert json.loads(out.read_text())["max_rel_err"] < 1e-9

    def test_figure3_check(self, tmp_path):
        out = tmp_path / "fig3.json"
        code = run_cli("figure3-check", "--seed", "2", "--trials", "20",
                       "--out", str(out))
        assert code == 0
        assert json.loads(out.read_text())["pass"] is True

    def test_sample_variance_csv(self, tmp_path):
        out = tmp_path / "var.csv"
        code = run_cli("sample-variance", "--kind", "interaction", "--n", "40",
                       "--neighborhoods", "3", "--draws", "2000",
                       "--out", str(out))
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "strategy,neighborhood_id,analytic_var,empirical_var"
        assert len(lines) == 1 + 3 * 3

    def test_snr_sweep_csv(self, synth_files, tmp_path):
        out = tmp_path / "snr.csv"
        cfg = write_config(tmp_path, max_epochs=2, patience=2)
        code = run_cli("snr-sweep", "--nodes", synth_files["nodes"],
                       "--links", synth_files["links"],
                       "--manifest", synth_files["manifest"],
                       "--split", synth_files["split"], "--config", cfg,
                       "--snr", "inf,1", "--out", str(out))
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "snr,test_f1"
        assert len(lines) == 3
