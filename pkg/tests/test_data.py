import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_image, synth_patches
from rdncnn.data import (DatasetStream, Image, NoiseSpec, PgmError, add_awgn,
                         extract_patches, load_image, make_dataset, save_image)
from rdncnn.metrics import psnr


class TestPgm:
    def test_round_trip(self, tmp_path):
        img = random_image(7, 5, seed=0)
        path = tmp_path / "img.pgm"
        save_image(img, path)
        loaded = load_image(path)
        assert (loaded.width, loaded.height) == (5, 7)
        np.testing.assert_array_equal(loaded.pixels, img.pixels)
        save_image(loaded, tmp_path / "img2.pgm")
        assert (tmp_path / "img.pgm").read_bytes() == (tmp_path / "img2.pgm").read_bytes()

    def test_explicit_header_example(self, tmp_path):
        path = tmp_path / "tiny.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7]))
        img = load_image(path)
        np.testing.assert_array_equal(img.pixels, [[0, 128], [255, 7]])

    def test_comments_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1 # trailing\n255\n" + bytes([9, 10]))
        img = load_image(path)
        np.testing.assert_array_equal(img.pixels, [[9, 10]])

    def test_high_maxval_rejected(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(PgmError, match="maxval"):
            load_image(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 1 2 3")
        with pytest.raises(PgmError, match="P5"):
            load_image(path)

    def test_truncated_raster_reports_offset(self, tmp_path):
        path = tmp_path / "short.pgm"
        payload = b"P5\n2 2\n255\n" + bytes([1, 2])
        path.write_bytes(payload)
        with pytest.raises(PgmError, match="truncated") as err:
            load_image(path)
        assert err.value.offset == len(payload)


class TestAwgn:
    def test_sigma_zero_is_identity(self):
        img = random_image(16, 16, seed=1)
        noisy = add_awgn(img, NoiseSpec(sigma=0.0, seed=0))
        np.testing.assert_array_equal(noisy.clamped, img.pixels)
        np.testing.assert_array_equal(noisy.real, img.pixels.astype(np.float32))

    def test_noise_moments(self):
        img = random_image(256, 256, seed=2)
        noisy = add_awgn(img, NoiseSpec(sigma=25.0, seed=3))
        noise = noisy.real.astype(np.float64) - img.pixels
        assert abs(noise.mean()) < 0.5
        assert abs(noise.std() - 25.0) < 0.5

    def test_noise_whiteness_lag1(self):
        img = Image(width=256, height=256,
                    pixels=np.full((256, 256), 128, dtype=np.uint8))
        noise = add_awgn(img, NoiseSpec(sigma=25.0, seed=4)).real.astype(np.float64) - 128.0
        flat = noise.ravel() - noise.mean()
        rho = np.dot(flat[:-1], flat[1:]) / np.dot(flat, flat)
        assert abs(rho) < 0.02
        cols = (noise - noise.mean(axis=0))
        rho_v = np.sum(cols[:-1] * cols[1:]) / np.sum(cols * cols)
        assert abs(rho_v) < 0.02

    def test_psnr_matches_closed_form(self):
        img = random_image(256, 256, seed=5)
        noisy = add_awgn(img, NoiseSpec(sigma=25.0, seed=6))
        expected = 10.0 * math.log10(255.0 ** 2 / 25.0 ** 2)
        assert psnr(img.pixels.astype(np.float64), noisy.real) == pytest.approx(
            expected, abs=0.15)

    def test_deterministic(self):
        img = random_image(32, 32, seed=7)
        a = add_awgn(img, NoiseSpec(sigma=15.0, seed=8))
        b = add_awgn(img, NoiseSpec(sigma=15.0, seed=8))
        np.testing.assert_array_equal(a.real, b.real)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(sigma=-1.0)


class TestPatches:
    def test_single_full_patch(self):
        px = np.arange(1600, dtype=np.float32).reshape(40, 40)
        patches = extract_patches(px, 40, 10)
        assert patches.shape == (1, 1, 40, 40)
        np.testing.assert_array_equal(patches[0, 0], px)

    def test_count_formula_examples(self):
        assert extract_patches(np.zeros((40, 41), np.float32), 40, 1).shape[0] == 2
        assert extract_patches(np.zeros((180, 180), np.float32), 40, 10).shape[0] == 225

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 10), st.integers(1, 8))
    def test_count_formula_property(self, h, w, s, stride):
        if s > min(h, w):
            return
        patches = extract_patches(np.zeros((h, w), np.float32), s, stride)
        expected = ((h - s) // stride + 1) * ((w - s) // stride + 1)
        assert patches.shape[0] == expected

    def test_non_overlapping_patches_reconstruct(self):
        px = np.random.default_rng(0).uniform(0, 1, (12, 18)).astype(np.float32)
        s = 6
        patches = extract_patches(px, s, s)
        rows, cols = 12 // s, 18 // s
        rebuilt = np.block([[patches[r * cols + c, 0] for c in range(cols)]
                            for r in range(rows)])
        np.testing.assert_array_equal(rebuilt, px)

    def test_oversized_patch_rejected(self):
        with pytest.raises(ValueError, match="fit"):
            extract_patches(np.zeros((8, 8), np.float32), 9, 1)


class TestDatasetStream:
    def test_single_patch_stream(self):
        clean = synth_patches(1, 8, seed=0)
        stream = DatasetStream(clean, sigma=25, batch_size=1, noise_seed=0, shuffle_seed=0)
        batches = list(stream.batches(0))
        assert len(batches) == 1
        assert batches[0][0].shape == (1, 1, 8, 8)

    def test_identical_seeds_identical_batches(self):
        clean = synth_patches(10, 8, seed=1)
        a = DatasetStream(clean, 25, 4, noise_seed=2, shuffle_seed=3)
        b = DatasetStream(clean, 25, 4, noise_seed=2, shuffle_seed=3)
        for (ca, na), (cb, nb) in zip(a.batches(1), b.batches(1)):
            np.testing.assert_array_equal(ca, cb)
            np.testing.assert_array_equal(na, nb)

    def test_epochs_get_fresh_noise(self):
        clean = synth_patches(4, 8, seed=2)
        stream = DatasetStream(clean, 25, 4, noise_seed=0, shuffle_seed=0)
        _, noisy1 = stream.epoch_pairs(0)
        _, noisy2 = stream.epoch_pairs(1)
        assert not np.array_equal(noisy1, noisy2)

    def test_noisy_equals_clean_plus_noise(self):
        clean = synth_patches(4, 8, seed=3)
        stream = DatasetStream(clean, 25, 4, noise_seed=1, shuffle_seed=1)
        c, n = stream.epoch_pairs(0)
        noise = n - c
        assert abs(noise.std() - 25 / 255) < 0.01

    def test_make_dataset_from_directory(self, tmp_path):
        for i in range(2):
            save_image(random_image(20, 20, seed=i), tmp_path / f"img{i}.pgm")
        stream = make_dataset(tmp_path, NoiseSpec(sigma=25, seed=0),
                              patch_size=10, stride=5, batch_size=4, shuffle_seed=0)
        assert stream.num_patches == 2 * 9

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no .pgm"):
            make_dataset(tmp_path, NoiseSpec(sigma=25), patch_size=10, stride=5,
                         batch_size=4, shuffle_seed=0)
