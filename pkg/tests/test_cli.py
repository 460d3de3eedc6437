import csv
import json

import pytest

from hgnn_ima.cli import effective_config, main

FAST = {"layers": 1, "hidden_dim": 8, "heads": 2, "fusion_dim": 8, "max_iters": 4, "dropout_rate": 0.0}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "fast.json"
    cfg.write_text(json.dumps(FAST))
    assert main(["synth", "--size", "tiny", "--seed", "0", "--out", str(root / "data")]) == 0
    assert main(["synth", "--size", "tiny", "--seed", "0", "--missing", "director:vision",
                 "--out", str(root / "data_missing")]) == 0
    assert main(["train", "--data", str(root / "data" / "manifest.json"), "--config", str(cfg),
                 "--out", str(root / "run")]) == 0
    return root


def run(capsys, argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestConfig:
    def test_precedence(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 3, "lr": 0.5, "heads": 2, "hidden_dim": 8}))
        cfg = effective_config(str(p), ["lr=0.25", "seed=4"], seed=9)
        assert cfg.train.lr == 0.25 and cfg.model.seed == 9 and cfg.model.heads == 2

    def test_unknown_override(self, capsys):
        code, _, err = run(capsys, ["train", "--data", "x.json", "--set", "bogus_key=1"])
        assert code == 2 and err.startswith("ERROR unknown_key")
        assert err.count("\n") == 1

    def test_unknown_file_key(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"nonsense": 1}))
        code, _, err = run(capsys, ["train", "--data", "x.json", "--config", p])
        assert code == 2 and "nonsense" in err


class TestCommands:
    def test_train_artifacts(self, workspace):
        run_dir = workspace / "run"
        for name in ("checkpoint.json", "config.json", "report.json", "timing.json"):
            assert (run_dir / name).is_file()
        card = json.loads((run_dir / "config.json").read_text())
        assert {"config", "dataset_hash", "schema_hash"} <= set(card)

    def test_train_deterministic(self, workspace, capsys):
        again = workspace / "run2"
        code, _, _ = run(capsys, ["train", "--data", workspace / "data" / "manifest.json",
                                  "--config", workspace / "fast.json", "--out", again])
        assert code == 0
        for name in ("checkpoint.json", "config.json", "report.json"):
            assert (again / name).read_bytes() == (workspace / "run" / name).read_bytes()

    def test_eval_matches_report(self, workspace, capsys):
        code, out, _ = run(capsys, ["eval", "--data", workspace / "data" / "manifest.json",
                                    "--checkpoint", workspace / "run" / "checkpoint.json"])
        assert code == 0
        rows = list(csv.reader(out.splitlines(), delimiter="\t"))
        report = json.loads((workspace / "run" / "report.json").read_text())["report"]
        assert abs(float(rows[1][1]) - report["test_micro_f1"]) <= 1e-12
        assert abs(float(rows[1][2]) - report["test_macro_f1"]) <= 1e-12

    def test_eval_refuses_schema_mismatch(self, workspace, capsys):
        code, _, err = run(capsys, ["eval", "--data", workspace / "data_missing" / "manifest.json",
                                    "--checkpoint", workspace / "run" / "checkpoint.json"])
        assert code == 2 and err.startswith("ERROR schema_mismatch")

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, err = run(capsys, ["train", "--data", tmp_path / "nope.json", "--out", tmp_path])
        assert code == 2 and err.startswith("ERROR missing_file")

    def test_ablate(self, workspace, capsys):
        out_dir = workspace / "abl"
        code, out, _ = run(capsys, ["ablate", "full", "-cross", "--data", workspace / "data" / "manifest.json",
                                    "--config", workspace / "fast.json", "--seeds", "0,1", "--out", out_dir])
        assert code == 0
        names = [line.split("\t")[0] for line in out.strip().splitlines()[1:]]
        assert names == ["full", "-cross"]
        doc = json.loads((out_dir / "ablation.json").read_text())
        assert doc["seeds"] == [0, 1] and set(doc["variants"]) == {"full", "-cross"}

    def test_ablate_unknown_variant(self, workspace, capsys):
        code, _, err = run(capsys, ["ablate", "bogus", "--data", workspace / "data" / "manifest.json"])
        assert code == 2 and err.startswith("ERROR unknown_variant")

    def test_export_attention(self, workspace, capsys):
        code, out, _ = run(capsys, ["export-attention", "--data", workspace / "data" / "manifest.json",
                                    "--checkpoint", workspace / "run" / "checkpoint.json",
                                    "--out", workspace / "att"])
        assert code == 0 and "positive_pct" in out
        header = (workspace / "att" / "attention.csv").read_text().splitlines()[0]
        assert header.startswith("target,source,edge_type,head,alpha_text,alpha_vision")

    def test_export_bad_layer(self, workspace, capsys):
        code, _, err = run(capsys, ["export-attention", "--data", workspace / "data" / "manifest.json",
                                    "--checkpoint", workspace / "run" / "checkpoint.json",
                                    "--layer", "5", "--out", workspace / "att"])
        assert code == 2 and err.startswith("ERROR bad_layer")

    def test_probe_unknown_size(self, capsys):
        code, _, err = run(capsys, ["probe", "--sizes", "galactic"])
        assert code == 2 and err.startswith("ERROR unknown_size")

    def test_usage_error(self, capsys):
        code, _, err = run(capsys, ["frobnicate"])
        assert code == 2 and err.startswith("ERROR usage")


class TestGradcheck:
    def test_pass(self, capsys):
        code, out, _ = run(capsys, ["gradcheck", "--blocks", "W_modal,fusion"])
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[-1].startswith("PASS")
        assert {l.split("\t")[0].split(".")[0] for l in lines[1:-1]} == {"modal_att", "fusion"}

    def test_injected_fault_fails(self, capsys):
        code, out, _ = run(capsys, ["gradcheck", "--inject-fault", "--blocks", "classifier"])
        assert code == 1 and out.strip().splitlines()[-1].startswith("FAIL")

    def test_bad_block(self, capsys):
        code, _, err = run(capsys, ["gradcheck", "--blocks", "nothing_like_this"])
        assert code == 2 and err.startswith("ERROR bad_blocks")
