"""Stain deconvolution and 36-feature extraction."""

import numpy as np
import pytest

from histocurate import stain
from histocurate.errors import DataError


def synthesize_rgb(concentrations, matrix_rows, i0=255.0, eps=1.0):
    """Independent forward Beer-Lambert model: concentrations -> RGB."""
    od = concentrations @ matrix_rows
    return (i0 + eps) * 10.0 ** (-od) - eps


class TestStainMatrix:
    def test_rows_unit_norm(self):
        m = stain.StainMatrix(np.array([[2.0, 0, 0], [0, 3.0, 0], [1.0, 1.0, 1.0]]))
        np.testing.assert_allclose(np.linalg.norm(m.rows, axis=1), 1.0, atol=1e-9)

    def test_default_rows_unit_norm(self):
        np.testing.assert_allclose(
            np.linalg.norm(stain.DEFAULT_STAIN_MATRIX.rows, axis=1), 1.0, atol=1e-6
        )

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            stain.StainMatrix(np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 0, 1.0]]))

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            stain.StainMatrix(np.array([[0.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]))


class TestDeconvolve:
    def test_white_pixel_zero_concentration(self):
        img = np.full((1, 1, 3), 255.0)
        conc = stain.stain_deconvolve(img)
        np.testing.assert_allclose(conc, 0.0, atol=1e-12)

    def test_recovers_known_concentration(self):
        m = stain.DEFAULT_STAIN_MATRIX
        conc = np.array([[[0.7, 0.0, 0.0]]])
        img = synthesize_rgb(conc, m.rows)
        recovered = stain.stain_deconvolve(img, m)
        np.testing.assert_allclose(recovered, conc, atol=1e-3)

    def test_black_pixel_finite(self):
        conc = stain.stain_deconvolve(np.zeros((1, 1, 3)))
        assert np.all(np.isfinite(conc))
        od_black = np.log10((255.0 + 1.0) / 1.0)
        od = -np.log10((np.zeros(3) + 1.0) / 256.0)
        np.testing.assert_allclose(od, od_black)

    def test_random_round_trip(self):
        rng = np.random.default_rng(7)
        m = stain.DEFAULT_STAIN_MATRIX
        conc = rng.uniform(0.0, 2.0, size=(50, 8, 8, 3))
        for c in conc:
            img = synthesize_rgb(c, m.rows)
            np.testing.assert_allclose(stain.stain_deconvolve(img, m), c, atol=1e-3)


class TestFeatures36:
    def test_constant_image(self):
        img = np.full((32, 32, 3), 77, dtype=np.uint8)
        f = stain.features_36(img)
        assert f.shape == (36,)
        stds = f[1::3]
        np.testing.assert_allclose(stds, 0.0, atol=1e-9)
        means, medians = f[0::3], f[2::3]
        np.testing.assert_allclose(means, medians, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        img = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
        np.testing.assert_array_equal(stain.features_36(img), stain.features_36(img))

    def test_checkerboard_rgb_means(self):
        a, b = np.array([10, 200, 30]), np.array([90, 20, 250])
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        checker = (np.add.outer(np.arange(16), np.arange(16)) % 2).astype(bool)
        img[checker] = a
        img[~checker] = b
        f = stain.features_36(img)
        np.testing.assert_allclose(f[[0, 3, 6]], (a + b) / 2.0, atol=1e-9)

    def test_dihedral_invariance(self):
        rng = np.random.default_rng(9)
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        base = stain.features_36(img)
        for k in range(4):
            rotated = np.ascontiguousarray(np.rot90(img, k))
            np.testing.assert_allclose(stain.features_36(rotated), base, atol=1e-9)
            flipped = np.ascontiguousarray(np.fliplr(rotated))
            np.testing.assert_allclose(stain.features_36(flipped), base, atol=1e-9)

    def test_all_entries_finite(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
            assert np.all(np.isfinite(stain.features_36(img)))

    def test_feature_names_count(self):
        names = stain.feature_names()
        assert len(names) == 36 and len(set(names)) == 36


class TestExactMedian:
    def test_matches_numpy_median(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(1, 500))
            values = rng.normal(0, 3, n)
            got = stain._exact_median(values, -4.0, 5.0, 1024)
            assert got == np.median(values)

    def test_integer_values(self):
        rng = np.random.default_rng(12)
        values = rng.integers(0, 256, 1000).astype(np.float64)
        assert stain._exact_median(values, 0.0, 256.0, 256) == np.median(values)

    def test_values_outside_range_still_exact(self):
        values = np.array([-100.0, 0.5, 0.6, 0.7, 900.0])
        assert stain._exact_median(values, 0.0, 1.0, 8) == np.median(values)


class TestStainStats:
    def test_negative_std_rejected(self):
        with pytest.raises(ValueError):
            stain.StainStats("s", np.zeros(3), np.array([-1.0, 0, 0]), 1)

    def test_image_transfer_stats_constant(self):
        img = np.full((8, 8, 3), 120, dtype=np.uint8)
        st = stain.image_transfer_stats(img, "s")
        np.testing.assert_allclose(st.std, 0.0, atol=1e-12)

    def test_empty_tiles_error(self):
        with pytest.raises(DataError, match="no tissue tiles"):
            stain.slide_stain_stats(None, "s", [], seed=0)
