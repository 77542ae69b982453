"""CLI tests: every verb end to end on synthetic artifacts, flag
overrides, rerun determinism, and the exit-code contract."""

import pytest

from brainalign.cli import main

from helpers import treehash


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(["synth", "--out", str(root / "data"), "--seed", "0",
               "--train", "96", "--test", "32", "--classes", "4",
               "--stimuli", "16", "--stim-size", "24", "--resolution", "32",
               "--noise", "0.05", "--channels", "4,6,8"])
    assert rc == 0
    return root


class TestVerbs:
    def test_stagewise_run(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "data" / "synth.cfg")
        assert main(["train", "--config", cfg, "--rule", "bp", "--seed", "0",
                     "--epochs", "1", "--ckpt", str(tmp_path / "bp.ckpt"),
                     "--metrics", str(tmp_path / "m.csv")]) == 0
        assert (tmp_path / "bp.ckpt").exists()
        assert (tmp_path / "m.csv").read_text().startswith("epoch,loss")

        assert main(["extract", "--ckpt", str(tmp_path / "bp.ckpt"),
                     "--stimuli", str(synth_dir / "data" / "stimuli"),
                     "--resolution", "32", "--out", str(tmp_path / "feats")]) == 0
        assert (tmp_path / "feats" / "features_conv1.npy").exists()

        assert main(["rdm", "--features", str(tmp_path / "feats"),
                     "--out", str(tmp_path / "rdms")]) == 0
        assert (tmp_path / "rdms" / "fc1.csv").exists()

        assert main(["rsa", "--config", cfg,
                     "--model-rdm", str(tmp_path / "rdms" / "conv1.csv"),
                     "--brain-dir", str(synth_dir / "data" / "brain"),
                     "--out", str(tmp_path / "rsa.csv")]) == 0
        lines = (tmp_path / "rsa.csv").read_text().splitlines()
        assert lines[0] == "model,roi,rho,ci_low,ci_high,n_pairs"
        assert len(lines) == 5  # 4 ROIs

        assert main(["sweep", "--rdm-dir", str(tmp_path / "rdms"),
                     "--brain-dir", str(synth_dir / "data" / "brain"),
                     "--out", str(tmp_path / "sweep.csv")]) == 0
        sweep = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(sweep) == 1 + 5 + 1  # header + 5 taps + best row

        assert main(["filters", "--ckpt", str(tmp_path / "bp.ckpt"),
                     "--out-scores", str(tmp_path / "fs.csv"),
                     "--out-grid", str(tmp_path / "fg.csv")]) == 0
        assert (tmp_path / "fs.csv").exists() and (tmp_path / "fg.csv").exists()

    def test_report_verb_with_overrides(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "data" / "synth.cfg")
        args = ["report", "--config", cfg, "--out", str(tmp_path / "run"),
                "--rules", "random", "--seeds", "0", "--epochs", "1"]
        assert main(args) == 0
        h1 = treehash(tmp_path / "run")
        assert main(args) == 0
        assert treehash(tmp_path / "run") == h1  # verb rerun is byte-identical

    def test_extract_rejects_unsupported_resolution(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "data" / "synth.cfg")
        main(["train", "--config", cfg, "--rule", "random", "--seed", "1",
              "--ckpt", str(tmp_path / "r.ckpt")])
        rc = main(["extract", "--ckpt", str(tmp_path / "r.ckpt"),
                   "--stimuli", str(synth_dir / "data" / "stimuli"),
                   "--resolution", "48", "--out", str(tmp_path / "f")])
        assert rc == 2


class TestExitCodes:
    def test_missing_config_is_2(self):
        assert main(["report", "--config", "/nonexistent.cfg"]) == 2

    def test_unknown_rule_is_2(self, synth_dir):
        cfg = str(synth_dir / "data" / "synth.cfg")
        assert main(["train", "--config", cfg, "--rule", "adamw", "--seed", "0"]) == 2

    def test_missing_data_is_3(self, tmp_path):
        assert main(["rsa", "--model-rdm", "/no/such.csv", "--brain-dir", "/no",
                     "--out", str(tmp_path / "x.csv")]) == 3

    def test_bad_checkpoint_is_3(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage\n")
        assert main(["filters", "--ckpt", str(bad),
                     "--out-scores", str(tmp_path / "s.csv"),
                     "--out-grid", str(tmp_path / "g.csv")]) == 3
