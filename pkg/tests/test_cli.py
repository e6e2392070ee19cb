import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from accor.cli import main, sha256_file
from accor.dataio import read_dataset, write_dataset
from accor.frames import FRAME_SHAPE, Dataset

SMALL_SCENE = """
[dataset]
per_class = 4
n_classes = 10
"""

SMALL_MODEL = """
[model]
conv_channels = 4, 4, 4
kernel_size = 3
embed_dim = 8
attention_heads = 2
[train]
epochs = 1
batch_size = 8
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scene.ini").write_text(SMALL_SCENE)
    (root / "model.ini").write_text(SMALL_MODEL)
    assert main(["gen-synth", "--config", str(root / "scene.ini"), "--seed", "3", "--out", str(root / "small.acc")]) == 0
    return root


@pytest.fixture(scope="module")
def full_scene(tmp_path_factory):
    path = tmp_path_factory.mktemp("full") / "d.acc"
    assert main(["gen-synth", "--out", str(path)]) == 0
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestGenSynth:
    def test_default_scene_counts(self, full_scene):
        ds = read_dataset(full_scene)
        assert len(ds) == 2000 and set(ds.class_counts().values()) == {200}
        lines = (full_scene.parent / "d.acc.manifest.json").read_text()
        assert json.loads(lines)["config"]["dataset"]["per_class"] == 200

    def test_counts_printed(self, tmp_path, capsys):
        (tmp_path / "s.ini").write_text("[dataset]\nper_class = 2\nn_classes = 3\n")
        assert run("gen-synth", "--config", tmp_path / "s.ini", "--out", tmp_path / "d.acc") == 0
        out = capsys.readouterr().out.splitlines()
        assert out[-1] == "total\t6" and sum(line.endswith("\t2") for line in out) == 3

    def test_same_seed_same_hash(self, workdir, tmp_path):
        assert run("gen-synth", "--config", workdir / "scene.ini", "--seed", 3, "--out", tmp_path / "again.acc") == 0
        assert sha256_file(tmp_path / "again.acc") == sha256_file(workdir / "small.acc")
        assert run("gen-synth", "--config", workdir / "scene.ini", "--seed", 4, "--out", tmp_path / "other.acc") == 0
        assert sha256_file(tmp_path / "other.acc") != sha256_file(workdir / "small.acc")

    def test_manifest(self, workdir):
        m = json.loads((workdir / "small.acc.manifest.json").read_text())
        assert m["command"] == "gen-synth" and m["seed"] == 3
        assert m["config"]["dataset"]["per_class"] == 4
        assert m["config"]["chirp"]["bandwidth"] == 4e9  # defaults are materialised
        assert m["outputs"] == {"small.acc": sha256_file(workdir / "small.acc")}
        assert "tool_version" in m

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        (tmp_path / "bad.ini").write_text("[dataset]\nper_klass = 3\n")
        assert run("gen-synth", "--config", tmp_path / "bad.ini", "--out", tmp_path / "x.acc") == 2
        assert "per_klass" in capsys.readouterr().err
        assert not (tmp_path / "x.acc").exists()

    def test_aliasing_template_named(self, tmp_path, capsys):
        (tmp_path / "far.ini").write_text(
            "[dataset]\nper_class = 1\n"
            "[class.near]\nlabel = 0\nscatterers = 0,0,0.5,1\n"
            "[class.far_wall]\nlabel = 1\nscatterers = 0,0,4.5,1\n"
        )
        assert run("gen-synth", "--config", tmp_path / "far.ini", "--out", tmp_path / "x.acc") == 2
        assert "far_wall" in capsys.readouterr().err

    def test_band_flag(self, tmp_path):
        (tmp_path / "s.ini").write_text("[dataset]\nper_class = 1\nn_classes = 2\n")
        assert run("gen-synth", "--config", tmp_path / "s.ini", "--band", 67, "--out", tmp_path / "b.acc") == 0
        assert int(read_dataset(tmp_path / "b.acc").band) == 67


class TestTrainEvalAblate:
    def test_train_outputs(self, workdir, capsys):
        out = workdir / "train"
        assert run("train", "--config", workdir / "model.ini", "--dataset", workdir / "small.acc",
                   "--alpha", 0.4, "--tau", 0.1, "--out", out) == 0
        for name in ("model.acck", "report.txt", "results.csv", "manifest.json"):
            assert (out / name).is_file(), name
        rows = list(csv.DictReader((out / "results.csv").open()))
        assert len(rows) == 1 and rows[0]["alpha"] == "0.4" and "per_class_9" in rows[0]
        m = json.loads((out / "manifest.json").read_text())
        assert m["config"]["loss"] == {"alpha": 0.4, "tau": 0.1, "class_weights": None}
        assert m["input_hashes"]["dataset"] == sha256_file(workdir / "small.acc")
        assert "mean accuracy" in capsys.readouterr().out

    def test_train_multiple_runs(self, workdir):
        out = workdir / "train3"
        assert run("train", "--config", workdir / "model.ini", "--dataset", workdir / "small.acc",
                   "--runs", 2, "--seed", 5, "--out", out) == 0
        assert (out / "model_seed5.acck").is_file() and (out / "model_seed6.acck").is_file()
        seeds = [r["seed"] for r in csv.DictReader((out / "results.csv").open())]
        assert seeds == ["5", "6"]

    def test_rerun_reproduces(self, workdir, tmp_path, capsys):
        out = workdir / "train_rr"
        assert run("train", "--config", workdir / "model.ini", "--dataset", workdir / "small.acc", "--out", out) == 0
        assert run("rerun", "--manifest", out / "manifest.json", "--out", tmp_path / "again") == 0
        assert "bit-exactly" in capsys.readouterr().out
        for name in ("model.acck", "results.csv", "report.txt"):
            assert sha256_file(out / name) == sha256_file(tmp_path / "again" / name)

    def test_rerun_gen_synth(self, workdir, tmp_path):
        assert run("rerun", "--manifest", workdir / "small.acc.manifest.json", "--out", tmp_path / "r.acc") == 0
        assert sha256_file(tmp_path / "r.acc") == sha256_file(workdir / "small.acc")

    def test_rerun_detects_changed_input(self, workdir, tmp_path, capsys):
        data = tmp_path / "copy.acc"
        data.write_bytes((workdir / "small.acc").read_bytes())
        assert run("eval", "--config", workdir / "model.ini", "--dataset", data, "--out", tmp_path / "ev") == 0
        ds = read_dataset(data)
        ds.data[0, 0, 0] += 1
        write_dataset(ds, data)
        assert run("rerun", "--manifest", tmp_path / "ev" / "manifest.json", "--out", tmp_path / "ev2") == 1
        assert "changed" in capsys.readouterr().err

    def test_rerun_detects_tampered_output_hash(self, workdir, tmp_path):
        out = tmp_path / "ev"
        assert run("eval", "--config", workdir / "model.ini", "--dataset", workdir / "small.acc", "--out", out) == 0
        m = json.loads((out / "manifest.json").read_text())
        m["outputs"]["results.csv"] = "0" * 64
        (out / "manifest.json").write_text(json.dumps(m))
        assert run("rerun", "--manifest", out / "manifest.json", "--out", tmp_path / "ev2") == 1

    def test_ablate_default_sweep_table(self, workdir, capsys):
        out = workdir / "ablate"
        assert run("ablate", "--config", workdir / "model.ini", "--dataset", workdir / "small.acc", "--out", out) == 0
        table = (out / "table.txt").read_text()
        rows = [line for line in table.splitlines() if "alpha =" in line]
        assert [r.split("|")[1].strip() for r in rows] == [
            "alpha = 0.6", "alpha = 0.5", "alpha = 0.4", "alpha = 0.3", "alpha = 0.2", "alpha = 0.1",
            "alpha = 0 (only CE)",
        ]
        assert len(list(csv.DictReader((out / "results.csv").open()))) == 7
        assert (out / "model_alpha0_seed0.acck").is_file()
        assert table in capsys.readouterr().out

    def test_eval_checkpoint(self, workdir):
        out = workdir / "ev_ckpt"
        assert run("eval", "--dataset", workdir / "small.acc", "--checkpoint", workdir / "train" / "model.acck",
                   "--split", "all", "--out", out) == 0
        rows = list(csv.DictReader((out / "results.csv").open()))
        assert len(rows) == 1 and 0.0 <= float(rows[0]["overall_accuracy"]) <= 1.0
        assert sha256_file(out / "model.acck") == sha256_file(workdir / "train" / "model.acck")

    def test_untrained_eval_in_chance_band(self, full_scene, tmp_path):
        assert run("eval", "--dataset", full_scene, "--out", tmp_path / "ev") == 0
        rows = list(csv.DictReader((tmp_path / "ev" / "results.csv").open()))
        assert 0.02 <= float(rows[0]["overall_accuracy"]) <= 0.25
        report = (tmp_path / "ev" / "report.txt").read_text()
        assert "confusion matrix" in report


class TestErrors:
    def test_missing_dataset(self, tmp_path, capsys):
        assert run("train", "--dataset", tmp_path / "nope.acc", "--out", tmp_path / "o") == 2
        assert "nope.acc" in capsys.readouterr().err

    def test_corrupt_dataset(self, tmp_path, capsys):
        (tmp_path / "bad.acc").write_bytes(b"garbage" * 10)
        assert run("train", "--dataset", tmp_path / "bad.acc", "--out", tmp_path / "o") == 2
        assert "magic" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, workdir, tmp_path):
        (tmp_path / "m.acck").write_bytes(b"ACCORCK1")
        assert run("eval", "--dataset", workdir / "small.acc", "--checkpoint", tmp_path / "m.acck",
                   "--out", tmp_path / "o") == 2

    def test_class_count_mismatch(self, workdir, tmp_path, capsys):
        ds = Dataset(np.zeros((4,) + FRAME_SHAPE), [0, 1, 0, 1], ["a", "b"])
        write_dataset(ds, tmp_path / "two.acc")
        assert run("eval", "--dataset", tmp_path / "two.acc", "--checkpoint", workdir / "train" / "model.acck",
                   "--out", tmp_path / "o") == 2
        assert "classes" in capsys.readouterr().err

    @pytest.mark.parametrize("alphas", ["0.4,x", "1.5", ","])
    def test_bad_alphas(self, workdir, tmp_path, alphas):
        assert run("ablate", "--dataset", workdir / "small.acc", "--alphas", alphas, "--out", tmp_path / "o") == 2

    def test_invalid_alpha_flag(self, workdir, tmp_path):
        assert run("train", "--dataset", workdir / "small.acc", "--alpha", 2.0, "--out", tmp_path / "o") == 2

    def test_band_without_frames(self, workdir, tmp_path, capsys):
        assert run("train", "--dataset", workdir / "small.acc", "--band", 67, "--out", tmp_path / "o") == 2
        assert "67" in capsys.readouterr().err

    def test_diverged_training_exit_1(self, workdir, tmp_path):
        (tmp_path / "div.ini").write_text(SMALL_MODEL + "divergence_threshold = 1e-9\n")
        assert run("train", "--config", tmp_path / "div.ini", "--dataset", workdir / "small.acc",
                   "--out", tmp_path / "o") == 1

    def test_missing_manifest(self, tmp_path):
        assert run("rerun", "--manifest", tmp_path / "m.json", "--out", tmp_path / "o") == 2

    def test_usage_error_from_argparse(self):
        with pytest.raises(SystemExit) as info:
            main(["train"])
        assert info.value.code == 2


class TestImport:
    def test_import_round_trip(self, workdir, tmp_path, capsys):
        from accor.dataio import LayoutDescriptor, export_external

        ds = read_dataset(workdir / "small.acc").subset([0, 1, 4, 5])
        layout = LayoutDescriptor(encoding="planar", dtype="float32", label_map={n: i for i, n in enumerate(ds.class_names)})
        export_external(ds, tmp_path / "ext", layout)
        (tmp_path / "layout.txt").write_text(layout.to_text())
        assert run("import", "--config", tmp_path / "layout.txt", "--dataset", tmp_path / "ext",
                   "--out", tmp_path / "imp.acc") == 0
        back = read_dataset(tmp_path / "imp.acc")
        np.testing.assert_array_equal(back.data, ds.data)
        assert back.labels.tolist() == ds.labels.tolist()
        assert (tmp_path / "imp.acc.manifest.json").is_file()


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "accor", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("accor ")
