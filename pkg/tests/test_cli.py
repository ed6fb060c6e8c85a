import json
import subprocess
import sys

import pytest
import torch
from click.testing import CliRunner

from neurospell import cli as cli_mod
from neurospell.channel import save_model, synthetic_confusion, truncate_topk
from neurospell.checkpoint import save_checkpoint
from neurospell.corpus import LETTERS
from neurospell.denoiser import DenoiserConfig, Seq2SeqModel


@pytest.fixture
def runner():
    return CliRunner()


class TestConfigInit:
    def test_prints_yaml(self, runner):
        res = runner.invoke(cli_mod.cli, ["config", "init"])
        assert res.exit_code == 0
        assert "curriculum:" in res.output

    def test_writes_file(self, runner, tmp_path):
        out = str(tmp_path / "cfg.yaml")
        res = runner.invoke(cli_mod.cli, ["config", "init", "-o", out])
        assert res.exit_code == 0
        from neurospell.config import load_config

        load_config(out)  # round-trips through the validator


class TestEvaluate:
    def test_writes_reports(self, runner, tmp_path):
        refs = tmp_path / "refs.txt"
        hyps = tmp_path / "hyps.txt"
        refs.write_text("the cat sat\ndogs run fast\n")
        hyps.write_text("the cat sat\ndogs walk fast\n")
        prefix = str(tmp_path / "report")
        res = runner.invoke(
            cli_mod.cli,
            ["evaluate", "--refs", str(refs), "--hyps", str(hyps), "-o", prefix],
        )
        assert res.exit_code == 0, res.output
        with open(prefix + ".json") as fh:
            assert json.load(fh)["corpus"]["sentences"] == 2


class TestStats:
    def test_batch(self, runner, tmp_path):
        inp = tmp_path / "in.csv"
        out = str(tmp_path / "out.csv")
        inp.write_text("ttest,1;2;3;5,2;2;4;4\n")
        res = runner.invoke(cli_mod.cli, ["stats", "-i", str(inp), "-o", out])
        assert res.exit_code == 0, res.output
        with open(out) as fh:
            assert fh.readline().startswith("test,statistic")


class TestChannelCommands:
    def test_export_channel(self, runner, tmp_path):
        out = str(tmp_path / "ch.json")
        res = runner.invoke(cli_mod.cli, ["export-channel", "-o", out])
        assert res.exit_code == 0, res.output
        with open(out) as fh:
            data = json.load(fh)
        assert data["k"] == 3

    def test_import_distributions(self, runner, tmp_path):
        rows = [",".join([c] + [f"{1 / 26:.10f}"] * 26) for c in LETTERS]
        csv_path = tmp_path / "d.csv"
        csv_path.write_text("\n".join(rows) + "\n")
        out = str(tmp_path / "ch.json")
        res = runner.invoke(
            cli_mod.cli, ["import-distributions", str(csv_path), "-o", out, "--k", "5"]
        )
        assert res.exit_code == 0, res.output
        with open(out) as fh:
            assert json.load(fh)["k"] == 5


class TestBuildCurriculum:
    def test_exports_stages(self, runner, tmp_path):
        ch_path = str(tmp_path / "ch.json")
        save_model(truncate_topk(synthetic_confusion(0.6), 3), ch_path)
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(
            "corpus:\n  path: bundled:sample_corpus.txt\n"
            "curriculum:\n  n_stages: 2\n  epochs_per_stage: 1\n"
        )
        outdir = str(tmp_path / "stages")
        res = runner.invoke(
            cli_mod.cli,
            ["build-curriculum", "-c", str(cfg_path), "--channel", ch_path, "-o", outdir],
        )
        assert res.exit_code == 0, res.output
        import os

        assert os.path.exists(os.path.join(outdir, "stage_1.jsonl"))
        assert os.path.exists(os.path.join(outdir, "stage_2.jsonl"))


class TestDecodeCommand:
    def test_decodes_jsonl(self, runner, tmp_path):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(
            "denoiser:\n  d_model: 16\n  n_heads: 2\n  enc_layers: 1\n"
            "  dec_layers: 1\n  ff_dim: 32\n  max_len: 64\n  beam: 1\n"
        )
        torch.manual_seed(0)
        cfg = DenoiserConfig(
            d_model=16, n_heads=2, enc_layers=1, dec_layers=1, ff_dim=32, max_len=64
        )
        model = Seq2SeqModel(cfg)
        ckpt = str(tmp_path / "d.ckpt")
        save_checkpoint(model, cfg.arch_dict(), ckpt)
        inp = tmp_path / "noisy.jsonl"
        inp.write_text(json.dumps({"noisy": "teh cat"}) + "\n")
        out = str(tmp_path / "decoded.jsonl")
        res = runner.invoke(
            cli_mod.cli,
            ["decode", "-c", str(cfg_path), "--ckpt", ckpt, "-i", str(inp), "-o", out],
        )
        assert res.exit_code == 0, res.output
        with open(out) as fh:
            row = json.loads(fh.readline())
        assert set(row) == {"noisy", "decoded"}


class TestSynthData:
    def test_writes_recordings(self, runner, tmp_path):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(
            "sigproc:\n  trials_per_letter: 1\n  n_channels: 4\n  rate: 250.0\n"
        )
        outdir = str(tmp_path / "recs")
        res = runner.invoke(
            cli_mod.cli, ["synth-data", "-c", str(cfg_path), "-o", outdir]
        )
        assert res.exit_code == 0, res.output
        import os

        assert len([f for f in os.listdir(outdir) if f.endswith(".rec")]) == 26


class TestExitCodes:
    def _run(self, *args, cwd):
        return subprocess.run(
            [sys.executable, "-m", "neurospell.cli", *args],
            capture_output=True, text=True, cwd=cwd,
        )

    def test_config_error_is_exit_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("channel:\n  k: 99\n")
        res = self._run("run", "-c", str(bad), cwd=str(tmp_path))
        assert res.returncode == 2
        assert "config error" in res.stderr

    def test_stage_failure_is_exit_3(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("corpus:\n  path: bundled:no_such.txt\n")
        res = self._run(
            "run", "-c", str(cfg), "-o", str(tmp_path / "out"), cwd=str(tmp_path)
        )
        assert res.returncode == 3
        assert "stage failure" in res.stderr
