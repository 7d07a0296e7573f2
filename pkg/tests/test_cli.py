import numpy as np
import numpy.testing as npt
import pytest

from aspectrec.cli import main
from aspectrec.config import parse_kv
from aspectrec.dataio import load_dataset, read_pgm
from aspectrec.pipeline import EvalReport, load_feature_archive, load_model

SYNTH_SPEC = """\
images_per_class = 6
image_size = 30
speckle = 0.3
sweeps = 1
seed = 9
"""

TRAIN_CONFIG = """\
image_size = 30
gabor_wavelength = 4.0
block_size = 15
orientations = 0.0,1.5707963267948966
mlp_hidden = 8
mlp_learning_rate = 0.05
mlp_max_epochs = 10
mlp_stop_error_rate = 0.5
blstm_layers = 6
blstm_learning_rate = 0.01
blstm_epochs = 10
blstm_stop_accuracy = none
train_subsample_intervals =
seed = 5
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "synth.cfg"
    spec.write_text(SYNTH_SPEC)
    config = root / "pipeline.cfg"
    config.write_text(TRAIN_CONFIG)
    dataset = root / "data"
    assert main(["synth", str(spec), str(dataset)]) == 0
    model = root / "model.bin"
    assert main(["train", str(dataset), str(model),
                 "--config", str(config)]) == 0
    return {"root": root, "spec": spec, "config": config,
            "dataset": dataset, "model": model}


class TestSynth:
    def test_row_count_and_round_trip(self, workspace):
        dataset = workspace["dataset"]
        rows = (dataset / "meta.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4 * 6
        images = load_dataset(dataset)
        assert len(images) == 24
        # written graymaps reload losslessly at the stored bit depth
        for img in images[:3]:
            stored = read_pgm(dataset / img.source)
            npt.assert_array_equal(stored, img.pixels)

    def test_byte_identical_rerun(self, workspace, tmp_path):
        other = tmp_path / "again"
        assert main(["synth", str(workspace["spec"]), str(other)]) == 0
        for name in sorted(p.name for p in other.iterdir()):
            assert (other / name).read_bytes() == \
                (workspace["dataset"] / name).read_bytes()

    def test_custom_scatterer_lines(self, tmp_path):
        spec = tmp_path / "s.cfg"
        spec.write_text("images_per_class = 2\nimage_size = 16\n"
                        "class_count = 2\nspeckle = 0\n"
                        "scatterer = 0, 0, 0, 1.0, 0, inf\n"
                        "scatterer = 1, 3, 3, 1.0, 0, inf\n")
        out = tmp_path / "d"
        assert main(["synth", str(spec), str(out)]) == 0
        assert len(load_dataset(out)) == 4

    def test_bad_spec_is_validation_error(self, tmp_path):
        spec = tmp_path / "bad.cfg"
        spec.write_text("images_per_class = 2\nnonsense = 1\n")
        assert main(["synth", str(spec), str(tmp_path / "d")]) == 1


class TestExtract:
    def test_archive_records(self, workspace, tmp_path):
        archive = tmp_path / "feats.bin"
        assert main(["extract", str(workspace["dataset"]), str(archive),
                     "--config", str(workspace["config"])]) == 0
        cfg, images, features = load_feature_archive(archive)
        assert features.shape == (24, 2 * 2 * 2 * 256)
        assert len(images) == 24
        assert [im.class_id for im in images] == [c for c in range(4)
                                                  for _ in range(6)]

    def test_rerun_byte_identical(self, workspace, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        for path in (a, b):
            assert main(["extract", str(workspace["dataset"]), str(path),
                         "--config", str(workspace["config"])]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_default_config_dimension_on_full_size_chips(self, tmp_path):
        spec = tmp_path / "s.cfg"
        spec.write_text("images_per_class = 5\nimage_size = 128\n"
                        "class_count = 2\nspeckle = 0.3\nseed = 3\n"
                        "scatterer = 0, -9, -7, 1.4, 45, 60\n"
                        "scatterer = 0, 8, 10, 1.2, 200, 80\n"
                        "scatterer = 1, 7, -11, 1.4, 45, 60\n"
                        "scatterer = 1, -6, 9, 1.2, 200, 80\n")
        dataset = tmp_path / "d"
        assert main(["synth", str(spec), str(dataset)]) == 0
        archive = tmp_path / "f.bin"
        # default pipeline config: ten 128x128 chips -> ten 75264-dim rows
        assert main(["extract", str(dataset), str(archive)]) == 0
        _, images, features = load_feature_archive(archive)
        assert features.shape == (10, 75264)

    def test_corrupt_image_fails_without_partial_archive(self, workspace,
                                                         tmp_path, capsys):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(workspace["dataset"], broken)
        victim = sorted(broken.glob("*.pgm"))[5]
        victim.write_bytes(b"P5\n4 4\n255\n")  # truncated payload
        archive = tmp_path / "feats.bin"
        assert main(["extract", str(broken), str(archive),
                     "--config", str(workspace["config"])]) == 1
        err = capsys.readouterr().err
        assert victim.name in err
        assert not archive.exists()


class TestTrain:
    def test_model_loads_and_has_expected_shapes(self, workspace):
        bundle = load_model(workspace["model"])
        assert bundle.config.classes == 4
        assert bundle.mlp_params.hidden_dim == 8
        assert bundle.blstm_model.layer_sizes == (6,)

    def test_deterministic_byte_identical(self, workspace, tmp_path):
        again = tmp_path / "again.bin"
        assert main(["train", str(workspace["dataset"]), str(again),
                     "--config", str(workspace["config"])]) == 0
        assert again.read_bytes() == workspace["model"].read_bytes()

    def test_train_from_feature_archive(self, workspace, tmp_path):
        archive = tmp_path / "feats.bin"
        assert main(["extract", str(workspace["dataset"]), str(archive),
                     "--config", str(workspace["config"])]) == 0
        model = tmp_path / "m.bin"
        assert main(["train", str(archive), str(model)]) == 0
        assert load_model(model).config.classes == 4

    def test_train_fraction_subsets_classes(self, workspace, tmp_path,
                                            capsys):
        model = tmp_path / "frac.bin"
        assert main(["train", str(workspace["dataset"]), str(model),
                     "--config", str(workspace["config"]),
                     "--train-fraction", "0.5"]) == 0
        capsys.readouterr()
        assert load_model(model).config.classes == 4

    def test_single_class_refused(self, workspace, tmp_path, capsys):
        import csv
        import shutil

        solo = tmp_path / "solo"
        shutil.copytree(workspace["dataset"], solo)
        meta = solo / "meta.csv"
        rows = list(csv.reader(meta.open()))
        keep = [rows[0]] + [r for r in rows[1:] if r[1] == "0"]
        with meta.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(keep)
        assert main(["train", str(solo), str(tmp_path / "m.bin"),
                     "--config", str(workspace["config"])]) == 1
        assert "2 classes" in capsys.readouterr().err


class TestEval:
    def test_noise_zero_equals_no_noise(self, workspace, tmp_path):
        out_a = tmp_path / "a.kv"
        out_b = tmp_path / "b.kv"
        assert main(["eval", str(workspace["model"]),
                     str(workspace["dataset"]), "--out", str(out_a)]) == 0
        assert main(["eval", str(workspace["model"]),
                     str(workspace["dataset"]), "--noise", "0.0",
                     "--out", str(out_b)]) == 0
        kv_a = dict(parse_kv(out_a.read_text()))
        kv_b = dict(parse_kv(out_b.read_text()))
        for key, value in kv_a.items():
            if key.startswith("report.confusion") or \
                    key.startswith("report.total"):
                assert kv_b[key] == value

    def test_confusion_row_sums_match_class_counts(self, workspace,
                                                   tmp_path):
        out = tmp_path / "r.kv"
        assert main(["eval", str(workspace["model"]),
                     str(workspace["dataset"]), "--out", str(out)]) == 0
        kv = dict(parse_kv(out.read_text()))
        total = 0
        for c in range(4):
            row = [int(v) for v in kv[f"report.confusion.{c}"].split(",")]
            assert sum(row) == 6  # six test images per class
            total += sum(row)
        assert total == int(kv["report.total_steps"])

    def test_aspect_flags_and_empty_report(self, workspace, tmp_path,
                                           capsys):
        assert main(["eval", str(workspace["model"]),
                     str(workspace["dataset"]),
                     "--aspect-range", "10:11",
                     "--aspect-interval", "5"]) == 0
        out = capsys.readouterr().out
        assert "no samples" in out

    def test_bad_model_file_is_validation_error(self, workspace, tmp_path,
                                                capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"JUNKJUNKJUNK")
        assert main(["eval", str(bad), str(workspace["dataset"])]) == 1
        assert "magic" in capsys.readouterr().err

    def test_inspect_model(self, workspace, capsys):
        assert main(["inspect-model", str(workspace["model"])]) == 0
        out = capsys.readouterr().out
        assert "mlp.w1" in out
        assert "blstm.layer0.fw.W_I" in out
        assert "classes = 4" in out


class TestReportFormat:
    def test_per_class_accuracy_prints_two_decimals(self):
        confusion = np.zeros((10, 10), dtype=np.int64)
        for c in range(10):
            confusion[c, c] = 195
        confusion[5, 5] = 194
        confusion[5, 3] = 1  # one sample confused
        report = EvalReport(confusion=confusion)
        table = report.format_table()
        assert "99.49" in table
        kv = dict(report.to_kv_pairs())
        assert kv["report.class_accuracy.5"] == f"{194 / 195:.6f}"

    def test_accounting_identities(self):
        rng = np.random.default_rng(0)
        confusion = rng.integers(0, 30, size=(4, 4)).astype(np.int64)
        report = EvalReport(confusion=confusion)
        assert report.total_steps == int(confusion.sum())
        assert report.total_accuracy == pytest.approx(
            np.trace(confusion) / confusion.sum())
        acc = report.per_class_accuracy()
        npt.assert_allclose(acc, np.diag(confusion) / confusion.sum(axis=1))

    def test_empty_report_is_explicit(self):
        report = EvalReport(confusion=np.zeros((3, 3), dtype=np.int64))
        assert "no samples" in report.format_table()
        assert np.isnan(report.total_accuracy)
