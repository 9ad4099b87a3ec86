"""Binary artifact formats: round trips and corruption handling."""

import numpy as np
import pytest

from histocurate import formats as fm
from histocurate.errors import FormatError
from histocurate.retrieval import EmbeddingStore, SlideEmbeddings


def sample_dump(rng, n=20, dim=36):
    return fm.FeatureDump(
        rng.integers(0, 5, n).astype(np.uint32),
        rng.integers(0, 4096, (n, 2)).astype(np.uint32),
        rng.normal(0, 1, (n, dim)).astype(np.float32),
    )


class TestFeatureDump:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(70)
        dump = sample_dump(rng)
        path = tmp_path / "f.rvfv"
        fm.write_feature_dump(path, dump)
        loaded = fm.read_feature_dump(path)
        np.testing.assert_array_equal(loaded.slide_indices, dump.slide_indices)
        np.testing.assert_array_equal(loaded.coords, dump.coords)
        np.testing.assert_array_equal(loaded.features, dump.features)

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(71)
        dump = sample_dump(rng)
        a, b = tmp_path / "a.rvfv", tmp_path / "b.rvfv"
        fm.write_feature_dump(a, dump)
        fm.write_feature_dump(b, fm.read_feature_dump(a))
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "f.rvfv"
        rng = np.random.default_rng(72)
        fm.write_feature_dump(path, sample_dump(rng))
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            fm.read_feature_dump(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "f.rvfv"
        rng = np.random.default_rng(73)
        fm.write_feature_dump(path, sample_dump(rng))
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError, match="truncated"):
            fm.read_feature_dump(path)

    def test_header_layout(self, tmp_path):
        # magic, u32 version, u32 dim, u64 count, then fixed-width rows
        path = tmp_path / "f.rvfv"
        rng = np.random.default_rng(74)
        dump = sample_dump(rng, n=3, dim=4)
        fm.write_feature_dump(path, dump)
        raw = path.read_bytes()
        assert raw[:4] == b"RVFV"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 4
        assert int.from_bytes(raw[12:20], "little") == 3
        assert len(raw) == 20 + 3 * (12 + 4 * 4)


class TestClusterModel:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(75)
        centroids = rng.normal(0, 1, (10, 36)).astype(np.float32).astype(np.float64)
        path = tmp_path / "m.rvcm"
        fm.write_cluster_model(path, centroids, 123.5)
        loaded, inertia = fm.read_cluster_model(path)
        np.testing.assert_array_equal(loaded, centroids)
        assert inertia == 123.5

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.rvcm"
        fm.write_cluster_model(path, np.zeros((2, 2)), 0.0)
        data = bytearray(path.read_bytes())
        data[:4] = b"ABCD"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            fm.read_cluster_model(path)

    def test_rewrite_byte_identical(self, tmp_path):
        rng = np.random.default_rng(76)
        centroids = rng.normal(0, 1, (5, 8))
        a, b = tmp_path / "a.rvcm", tmp_path / "b.rvcm"
        fm.write_cluster_model(a, centroids, 7.25)
        loaded, inertia = fm.read_cluster_model(a)
        fm.write_cluster_model(b, loaded, inertia)
        assert a.read_bytes() == b.read_bytes()


class TestEmbeddingStoreFormat:
    def make_store(self, rng, dim=8):
        slides = [
            SlideEmbeddings(
                "s0",
                "diag_0",
                np.array([(0, 0), (256, 0), (0, 256)], dtype=np.uint32),
                rng.normal(0, 1, (3, dim)).astype(np.float32),
            ),
            SlideEmbeddings(
                "s1",
                None,
                np.array([(0, 0), (256, 0), (512, 0)], dtype=np.uint32),
                rng.normal(0, 1, (3, dim)).astype(np.float32),
            ),
        ]
        return EmbeddingStore(dim, slides)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(77)
        store = self.make_store(rng)
        path = tmp_path / "e.rves"
        store.save(path)
        loaded = EmbeddingStore.load(path)
        assert loaded.dim == store.dim and len(loaded) == 2
        for orig, back in zip(store.slides, loaded.slides):
            assert orig.slide_id == back.slide_id
            assert orig.diagnosis == back.diagnosis
            np.testing.assert_array_equal(orig.coords, back.coords)
            np.testing.assert_array_equal(orig.vectors, back.vectors)

    def test_rewrite_byte_identical(self, tmp_path):
        rng = np.random.default_rng(78)
        store = self.make_store(rng)
        a, b = tmp_path / "a.rves", tmp_path / "b.rves"
        store.save(a)
        EmbeddingStore.load(a).save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_corrupt_magic_rejected(self, tmp_path):
        rng = np.random.default_rng(79)
        path = tmp_path / "e.rves"
        self.make_store(rng).save(path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            EmbeddingStore.load(path)

    def test_truncation_rejected(self, tmp_path):
        rng = np.random.default_rng(80)
        path = tmp_path / "e.rves"
        self.make_store(rng).save(path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError, match="truncated"):
            EmbeddingStore.load(path)

    def test_header_layout(self, tmp_path):
        rng = np.random.default_rng(81)
        path = tmp_path / "e.rves"
        self.make_store(rng, dim=4).save(path)
        raw = path.read_bytes()
        assert raw[:4] == b"RVES"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 4
        assert int.from_bytes(raw[12:16], "little") == 2
        # first slide block: u16 len + "s0"
        assert int.from_bytes(raw[16:18], "little") == 2
        assert raw[18:20] == b"s0"
