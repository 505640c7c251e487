import numpy as np
import pytest
from scipy import stats

from dafa_lab import synthdata as S
from dafa_lab.errors import InvalidGaps


def two_class(std=1.0, n=100, d=3):
    means = np.zeros((2, d))
    means[0, 0], means[1, 0] = 1.0, -1.0
    return S.MixtureSpec(means, np.array([std, std]), n)


class TestMixtureSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            S.MixtureSpec(np.zeros((1, 3)), np.ones(1), 10)
        with pytest.raises(ValueError):
            S.MixtureSpec(np.zeros((2, 3)), np.ones(3), 10)
        with pytest.raises(ValueError):
            S.MixtureSpec(np.zeros((2, 3)), np.array([1.0, 0.0]), 10)
        with pytest.raises(ValueError):
            S.MixtureSpec(np.zeros((2, 3)), np.ones(2), -1)

    def test_shapes(self):
        spec = two_class(d=5)
        assert spec.d == 5 and spec.num_classes == 2
        assert len(spec.classes) == 2


class TestBoxMuller:
    def test_normality(self):
        z = S.box_muller(0, 200_000, 9)
        assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
        assert stats.kstest(z, "norm").pvalue > 1e-3

    def test_odd_length_and_streams(self):
        assert S.box_muller(1, 7, 0).shape == (7,)
        assert not np.array_equal(S.box_muller(1, 8, 0), S.box_muller(1, 8, 1))
        np.testing.assert_array_equal(S.box_muller(1, 8, 0), S.box_muller(1, 8, 0))

    def test_finite(self):
        assert np.all(np.isfinite(S.box_muller(3, 100_001)))


class TestSample:
    def test_empty(self):
        ds = S.sample(two_class(n=0), 0)
        assert len(ds) == 0 and ds.points.shape == (0, 3)

    def test_vanishing_variance(self):
        ds = S.sample(two_class(std=1e-9, n=50), 4)
        means = np.where(ds.labels[:, None] == 0, [1.0, 0, 0], [-1.0, 0, 0])
        assert np.max(np.abs(ds.points - means)) < 1e-6

    def test_balanced_and_shuffled(self):
        ds = S.sample(two_class(n=500), 2)
        np.testing.assert_array_equal(ds.class_counts(), [500, 500])
        assert not np.all(ds.labels[:500] == 0)

    def test_law_of_large_numbers(self):
        spec = S.MixtureSpec(np.array([[0.5, -1.0, 2.0], [3.0, 0.0, -0.5]]), np.array([1.3, 0.7]), 50_000)
        ds = S.sample(spec, 8)
        for c, (mean, std) in enumerate(spec.classes):
            emp = ds.points[ds.labels == c].mean(axis=0)
            assert np.all(np.abs(emp - mean) <= 3 * std / np.sqrt(50_000))

    def test_deterministic_bytes(self, tmp_path):
        spec = two_class(n=40)
        a = S.sample(spec, 11).to_csv(tmp_path / "a.csv").read_bytes()
        b = S.sample(spec, 11).to_csv(tmp_path / "b.csv").read_bytes()
        assert a == b
        assert a != S.sample(spec, 12).to_csv(tmp_path / "c.csv").read_bytes()

    def test_splits_differ(self):
        spec = two_class(n=20)
        assert not np.array_equal(S.sample(spec, 0, 0).points, S.sample(spec, 0, 1).points)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = S.sample(two_class(n=10, d=4), 1)
        path = ds.to_csv(tmp_path / "d.csv")
        assert path.read_text().splitlines()[0] == "y,x0,x1,x2,x3"
        back = S.LabeledDataset.from_csv(path)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_allclose(back.points, ds.points, rtol=1e-8)


class TestFairnessPreset:
    def test_default_geometry(self):
        spec = S.fairness_spec()
        dist = spec.centroid_distances()
        assert dist[0, 1] == pytest.approx(1.2, abs=1e-9)
        assert dist[0, 2] == pytest.approx(3.0, abs=1e-9)
        assert dist[0, 3] == pytest.approx(3.0, abs=1e-9)
        avg = dist.sum(axis=1) / 3
        assert int(np.argmin(avg)) == 0
        assert spec.stds[0] == 1.3 and np.all(spec.stds[1:] <= 1.3)

    def test_equal_gaps_symmetric(self):
        dist = S.fairness_spec(near_gap=2.0, far_gap=2.0).centroid_distances()
        np.testing.assert_allclose(dist[0, 1:], 2.0, atol=1e-9)

    def test_invalid_gaps(self):
        with pytest.raises(InvalidGaps):
            S.fairness_spec(near_gap=3.0, far_gap=1.0)
        with pytest.raises(InvalidGaps):
            S.fairness_spec(near_gap=0.0)
        with pytest.raises(InvalidGaps):
            S.fairness_spec(sigma_hard=0.9)

    def test_preset_splits(self):
        spec, train, test = S.preset_fairness(samples_per_class=50, seed=3)
        assert len(train) == len(test) == 200
        assert not np.array_equal(train.points, test.points)
        _, train2, _ = S.preset_fairness(samples_per_class=50, seed=3)
        np.testing.assert_array_equal(train.points, train2.points)


class TestPairPreset:
    def test_geometry(self):
        spec = S.pair_spec(6, 1.2)
        assert spec.centroid_distances()[0, 1] == pytest.approx(1.2)
        np.testing.assert_allclose(spec.means.sum(axis=0), 0.0)

    def test_invalid(self):
        with pytest.raises(InvalidGaps):
            S.pair_spec(4, 0.0)
