import math
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

from aspectrec.dataio import (AspectImage, Scatterer, SynthSpec,
                              build_sequences, confusable_spec, contaminate,
                              load_dataset, per_class_subset, read_pgm,
                              subsample_aspects, synth_generate, write_pgm)


def make_image(aspect, class_id=0, serial="A", depression=15.0, source=""):
    return AspectImage(pixels=np.zeros((4, 4)), aspect_deg=aspect,
                       depression_deg=depression, class_id=class_id,
                       serial=serial, source=source or f"a{aspect}")


def write_dataset(tmp_path, rows, pixels_by_file):
    lines = ["file,classId,serial,depressionDeg,aspectDeg"]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    (tmp_path / "meta.csv").write_text("\n".join(lines) + "\n")
    for fname, pixels in pixels_by_file.items():
        write_pgm(tmp_path / fname, pixels, maxval=65535)


class TestPgm:
    def test_round_trip_16_bit(self, tmp_path):
        rng = np.random.default_rng(0)
        img = np.floor(rng.random((6, 5)) * 65536) / 65535
        img = np.clip(img, 0, 1)
        path = tmp_path / "x.pgm"
        write_pgm(path, img, maxval=65535)
        npt.assert_allclose(read_pgm(path), img, atol=0.5 / 65535)

    def test_max_value_reads_exactly_one(self, tmp_path):
        path = tmp_path / "one.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n"
                         + np.array([65535, 0, 1, 2], ">u2").tobytes())
        img = read_pgm(path)
        assert img[0, 0] == 1.0
        assert img[0, 1] == 0.0

    def test_8_bit_scaling(self, tmp_path):
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P5\n2 1\n255\n" + bytes([255, 51]))
        npt.assert_allclose(read_pgm(path), [[1.0, 0.2]], atol=1e-12)

    def test_non_graymap_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"PNG nonsense")
        with pytest.raises(ValueError, match="not a binary P5"):
            read_pgm(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(ValueError, match="truncated"):
            read_pgm(path)


class TestLoadDataset:
    def test_happy_path(self, tmp_path):
        rng = np.random.default_rng(1)
        imgs = {f"i{k}.pgm": rng.random((4, 4)) for k in range(3)}
        rows = [(f"i{k}.pgm", k % 2, "S", 15.0, 10.0 * k) for k in range(3)]
        write_dataset(tmp_path, rows, imgs)
        loaded = load_dataset(tmp_path)
        assert len(loaded) == 3
        assert [im.class_id for im in loaded] == [0, 1, 0]
        assert [im.aspect_deg for im in loaded] == [0.0, 10.0, 20.0]

    def test_aspect_out_of_range_names_row(self, tmp_path):
        write_dataset(tmp_path, [("i.pgm", 0, "S", 15.0, 400.0)],
                      {"i.pgm": np.zeros((2, 2))})
        with pytest.raises(ValueError, match=":2"):
            load_dataset(tmp_path)

    def test_missing_image_named(self, tmp_path):
        write_dataset(tmp_path, [("gone.pgm", 0, "S", 15.0, 5.0)], {})
        with pytest.raises(ValueError, match="gone.pgm"):
            load_dataset(tmp_path)

    def test_bad_header_rejected(self, tmp_path):
        (tmp_path / "meta.csv").write_text("file,classId\n")
        with pytest.raises(ValueError, match="header"):
            load_dataset(tmp_path)


class TestBuildSequences:
    def test_full_circles_plus_remainder(self):
        # 56 aspect bins, 4 duplicates everywhere and a 5th in eight bins:
        # 232 images -> 4 full-circle sweeps + one remainder sequence
        images = []
        for b in range(56):
            aspect = b * (360.0 / 56)
            copies = 5 if b % 7 == 0 else 4
            for j in range(copies):
                images.append(make_image(aspect, source=f"b{b}_{j}"))
        assert len(images) == 232
        seqs = build_sequences(images, circles=4).groups[(0, "A", 15.0)]
        assert len(seqs) == 5
        for sweep in seqs[:4]:
            assert len(sweep) == 56  # every aspect bin covered
            aspects = [im.aspect_deg for im in sweep]
            assert aspects == sorted(aspects)
        assert len(seqs[4]) == 8

    def test_single_copy_yields_one_sequence(self):
        images = [make_image(a) for a in range(0, 360, 10)]
        seqs = build_sequences(images, circles=4).groups[(0, "A", 15.0)]
        assert len(seqs) == 1
        assert len(seqs[0]) == 36

    def test_partition_property(self):
        rng = np.random.default_rng(2)
        images = [make_image(float(rng.integers(0, 36)) * 10.0,
                             class_id=int(rng.integers(0, 2)),
                             source=f"s{k}")
                  for k in range(100)]
        seqset = build_sequences(images, circles=4)
        flat = [im for _, seq in seqset.iter_sequences() for im in seq]
        assert sorted(im.source for im in flat) == \
            sorted(im.source for im in images)

    def test_circle_sweeps_have_small_wraparound_gaps(self):
        # dense metadata: 120 bins at 3 degrees, 4 copies each
        images = [make_image(b * 3.0, source=f"g{b}_{j}")
                  for b in range(120) for j in range(4)]
        seqs = build_sequences(images, circles=4).groups[(0, "A", 15.0)]
        spacing = 3.0
        for sweep in seqs[:4]:
            aspects = np.array([im.aspect_deg for im in sweep])
            gaps = np.diff(np.concatenate([aspects, [aspects[0] + 360.0]]))
            assert gaps.max() <= 2.0 * spacing

    def test_groups_keyed_by_class_serial_depression(self):
        images = [make_image(0.0, class_id=0, serial="A"),
                  make_image(0.0, class_id=0, serial="B"),
                  make_image(0.0, class_id=1, serial="A", depression=17.0)]
        seqset = build_sequences(images)
        assert len(seqset.groups) == 3


class TestSynthGenerate:
    def test_deterministic_under_seed(self):
        spec = confusable_spec(images_per_class=6, image_size=32, seed=5)
        first = synth_generate(spec)
        second = synth_generate(spec)
        for a, b in zip(first, second):
            npt.assert_array_equal(a.pixels, b.pixels)

    def test_seed_changes_pixels(self):
        spec = confusable_spec(images_per_class=4, image_size=32, seed=5)
        other = replace(spec, seed=6)
        a = synth_generate(spec)[0]
        b = synth_generate(other)[0]
        assert not np.array_equal(a.pixels, b.pixels)

    def test_zero_speckle_flat_profile_identical_everywhere(self):
        spec = SynthSpec(
            class_count=2, images_per_class=5, image_size=24,
            scatterers=((Scatterer(0, 0, 1.0, 0.0, math.inf),),
                        (Scatterer(3, 3, 1.0, 0.0, math.inf),)),
            speckle=0.0, sweeps=1, seed=1)
        images = synth_generate(spec)
        class0 = [im for im in images if im.class_id == 0]
        for im in class0[1:]:
            npt.assert_array_equal(im.pixels, class0[0].pixels)

    def test_intensities_in_unit_interval(self):
        for im in synth_generate(confusable_spec(images_per_class=4,
                                                 image_size=32, seed=2)):
            assert im.pixels.min() >= 0.0
            assert im.pixels.max() <= 1.0

    def test_confusable_pair_ambiguous_yet_sweep_distinct(self):
        spec = confusable_spec(images_per_class=24, image_size=48, seed=3)
        train = synth_generate(spec)
        test = synth_generate(replace(spec, seed=4))

        # closed-form sweep energy profiles differ between classes 0 and 1
        aspects = np.arange(0.0, 360.0, 15.0)
        profiles = []
        for c in (0, 1):
            profiles.append([sum(s.amplitude_at(a)
                                 for s in spec.scatterers[c])
                             for a in aspects])
        assert float(np.linalg.norm(np.subtract(*profiles))) > 0.0

        # pixel-space nearest neighbor at the ambiguous aspect is near chance
        def at_ambiguous(images):
            return [im for im in images
                    if im.class_id in (0, 1)
                    and min((im.aspect_deg - 45.0) % 360.0,
                            (45.0 - im.aspect_deg) % 360.0) <= 30.0]

        train_amb, test_amb = at_ambiguous(train), at_ambiguous(test)
        assert len(test_amb) >= 8
        correct = 0
        for im in test_amb:
            dists = [np.sum((im.pixels - tr.pixels) ** 2) for tr in train_amb]
            correct += train_amb[int(np.argmin(dists))].class_id == im.class_id
        assert correct / len(test_amb) <= 0.60

    def test_sweeps_duplicate_aspects(self):
        spec = confusable_spec(images_per_class=6, image_size=32, sweeps=2,
                               seed=7)
        images = [im for im in synth_generate(spec) if im.class_id == 0]
        assert len(images) == 12
        aspects = sorted(im.aspect_deg for im in images)
        assert aspects == sorted(list(np.arange(0, 360, 60)) * 2)
        seqs = build_sequences(images, circles=4).groups[(0, "S0", 15.0)]
        assert [len(s) for s in seqs] == [6, 6]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            confusable_spec(images_per_class=0)
        with pytest.raises(ValueError):
            SynthSpec(class_count=1, images_per_class=1, image_size=16,
                      scatterers=((Scatterer(0, 0, 1, 0, 10),),))


class TestContaminate:
    def _image(self, side=16):
        rng = np.random.default_rng(3)
        return AspectImage(pixels=np.floor(rng.random((side, side)) * 256) / 255.0
                           * 0.9,
                           aspect_deg=0.0, depression_deg=15.0, class_id=0)

    def test_zero_level_identity(self):
        img = self._image()
        out = contaminate(img, 0.0, seed=1)
        npt.assert_array_equal(out.pixels, img.pixels)

    def test_full_level_replaces_everything(self):
        img = AspectImage(pixels=np.full((128, 128), 2.0) / 2.0 * 0 + 0.0,
                          aspect_deg=0.0, depression_deg=15.0, class_id=0)
        out = contaminate(img, 1.0, seed=2)
        assert np.all(out.pixels != img.pixels) or np.all(img.pixels == 0)
        mean = float(out.pixels.mean())
        assert 0.45 <= mean <= 0.55

    def test_level_15_percent_exact_count(self):
        img = AspectImage(pixels=np.full((128, 128), 0.25),
                          aspect_deg=0.0, depression_deg=15.0, class_id=0)
        out = contaminate(img, 0.15, seed=3)
        changed = int(np.sum(out.pixels != img.pixels))
        assert changed == math.floor(0.15 * 128 * 128)
        assert changed == 2457

    def test_deterministic_under_seed(self):
        img = self._image()
        a = contaminate(img, 0.3, seed=9)
        b = contaminate(img, 0.3, seed=9)
        npt.assert_array_equal(a.pixels, b.pixels)
        c = contaminate(img, 0.3, seed=10)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_untouched_pixels_preserved(self):
        img = self._image()
        out = contaminate(img, 0.2, seed=4)
        same = out.pixels == img.pixels
        assert int(np.sum(~same)) == math.floor(0.2 * img.pixels.size)

    def test_level_out_of_range(self):
        with pytest.raises(ValueError):
            contaminate(self._image(), 1.5, seed=0)


class TestSubsampleAspects:
    def _dense_sweep(self):
        return [make_image(float(a), source=f"d{a}") for a in range(360)]

    def test_full_range_quantities(self):
        seq = self._dense_sweep()
        for interval, expected in ((6.0, 60), (9.0, 40)):
            kept = subsample_aspects(seq, (0.0, 360.0), interval)
            assert len(kept) == expected

    def test_half_range_quantities(self):
        seq = self._dense_sweep()
        for interval, expected in ((30.0, 6), (45.0, 4)):
            kept = subsample_aspects(seq, (0.0, 180.0), interval)
            assert len(kept) == expected

    def test_interval_larger_than_range(self):
        kept = subsample_aspects(self._dense_sweep(), (10.0, 40.0), 90.0)
        assert len(kept) == 1

    def test_kept_aspects_spaced_and_in_range(self):
        kept = subsample_aspects(self._dense_sweep(), (30.0, 200.0), 17.0)
        aspects = [im.aspect_deg for im in kept]
        assert all(30.0 <= a < 200.0 for a in aspects)
        assert all(b - a >= 17.0 for a, b in zip(aspects, aspects[1:]))

    def test_empty_result_allowed(self):
        assert subsample_aspects([make_image(300.0)], (0.0, 100.0), 5.0) == []

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            subsample_aspects([], (100.0, 100.0), 5.0)
        with pytest.raises(ValueError):
            subsample_aspects([], (0.0, 100.0), 0.0)


class TestPerClassSubset:
    def test_keeps_fraction_per_class(self):
        images = [make_image(float(a % 360), class_id=c, source=f"{c}_{a}")
                  for c in range(3) for a in range(20)]
        subset = per_class_subset(images, 0.25, seed=1)
        counts = {}
        for im in subset:
            counts[im.class_id] = counts.get(im.class_id, 0) + 1
        assert counts == {0: 5, 1: 5, 2: 5}

    def test_deterministic(self):
        images = [make_image(float(a), class_id=0, source=f"s{a}")
                  for a in range(30)]
        a = [im.source for im in per_class_subset(images, 0.5, seed=3)]
        b = [im.source for im in per_class_subset(images, 0.5, seed=3)]
        assert a == b
