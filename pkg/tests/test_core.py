"""Core domain types: RNG contract, datasets, normalization, splits."""

import math

import numpy as np
import pytest

from copysampler import (
    DegenerateColumnError,
    HalfspaceOracle,
    LabeledSample,
    SampleSpace,
    StratificationError,
    SyntheticDataset,
    fit_normalization,
    prefix,
    random_sampler,
    stratified_split,
    uniform_sample,
)
from copysampler.core import TARGET_MEAN, TARGET_STD, RandomSource, round_half_up


class TestRandomSource:
    def test_same_seed_same_stream(self):
        a = RandomSource(123).uniform(32)
        b = RandomSource(123).uniform(32)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(RandomSource(1).uniform(8), RandomSource(2).uniform(8))

    def test_derive_is_stable_and_keyed(self):
        a = RandomSource.derive(7, "dataset", "random", 0)
        b = RandomSource.derive(7, "dataset", "random", 0)
        c = RandomSource.derive(7, "dataset", "random", 1)
        assert a.seed == b.seed
        assert a.seed != c.seed

    def test_algorithm_is_pinned(self):
        assert RandomSource(0).algorithm_id == "pcg64"


class TestUniformSample:
    def test_range_containment_1d(self, rng):
        space = SampleSpace(1)
        for _ in range(100):
            z = uniform_sample(space, rng)
            assert 0.0 <= z[0] <= 1.0

    def test_mean_matches_uniform_d3(self):
        # CLT: mean of 1e4 draws has sd sqrt(1/12)/100 ~ 0.0029 per coordinate
        rng = RandomSource(11)
        space = SampleSpace(3)
        draws = np.array([uniform_sample(space, rng) for _ in range(10_000)])
        assert np.all(np.abs(draws.mean(axis=0) - 0.5) < 0.02)

    def test_deterministic(self):
        space = SampleSpace(4)
        z1 = uniform_sample(space, RandomSource(5))
        z2 = uniform_sample(space, RandomSource(5))
        np.testing.assert_array_equal(z1, z2)

    def test_bad_dimension_rejected(self):
        with pytest.raises(ValueError):
            SampleSpace(0)


def _dataset(n=5, d=2, seed=9):
    rng = RandomSource(seed)
    X = rng.uniform((n, d))
    y = (rng.uniform(n) < 0.5).astype(int)
    return SyntheticDataset(X, y, k=2, generator_id="test", seed=seed, query_count=n)


class TestPrefix:
    def test_empty_prefix(self):
        ds = _dataset()
        assert len(prefix(ds, 0)) == 0

    def test_full_prefix_is_identity(self):
        ds = _dataset()
        out = prefix(ds, len(ds))
        np.testing.assert_array_equal(out.X, ds.X)
        np.testing.assert_array_equal(out.y, ds.y)
        assert out.generator_id == ds.generator_id
        assert out.seed == ds.seed

    def test_order_preserved(self):
        ds = _dataset(5)
        out = prefix(ds, 3)
        np.testing.assert_array_equal(out.X, ds.X[:3])
        np.testing.assert_array_equal(out.y, ds.y[:3])

    def test_out_of_range(self):
        ds = _dataset(5)
        with pytest.raises(ValueError):
            prefix(ds, 6)
        with pytest.raises(ValueError):
            prefix(ds, -1)

    def test_prefix_monotonicity(self):
        ds = _dataset(40)
        rng = RandomSource(3)
        for _ in range(20):
            j2 = rng.integers(41)
            j1 = rng.integers(j2 + 1)
            direct = prefix(ds, j1)
            nested = prefix(prefix(ds, j2), j1)
            np.testing.assert_array_equal(direct.X, nested.X)
            np.testing.assert_array_equal(direct.y, nested.y)

    def test_query_count_invariant(self):
        with pytest.raises(ValueError):
            SyntheticDataset(np.zeros((3, 1)), np.zeros(3), 1, "t", 0, query_count=2)


class TestDatasetSerialization:
    def test_round_trip_bit_exact(self, tmp_path, halfspace, rng):
        ds = random_sampler(50, halfspace, rng)
        path = ds.to_csv(tmp_path / "ds.csv")
        back = SyntheticDataset.from_csv(path)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.y, ds.y)
        assert back.generator_id == ds.generator_id
        assert back.seed == ds.seed
        assert back.query_count == ds.query_count
        assert back.k == ds.k

    def test_serialization_is_deterministic(self, tmp_path, halfspace):
        a = random_sampler(20, halfspace, RandomSource(1)).to_csv(tmp_path / "a.csv")
        b = random_sampler(20, HalfspaceOracle(w=(1.0, 0.0), c=0.5),
                           RandomSource(1)).to_csv(tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_header_and_sidecar(self, tmp_path):
        ds = _dataset(3, d=2)
        path = ds.to_csv(tmp_path / "ds.csv")
        first = path.read_text().splitlines()[0]
        assert first == "x0,x1,label"
        assert (tmp_path / "ds.meta.json").exists()

    def test_empty_dataset_round_trip(self, tmp_path):
        ds = SyntheticDataset(np.empty((0, 2)), np.empty(0, dtype=int), 2, "t", 0, 0)
        back = SyntheticDataset.from_csv(ds.to_csv(tmp_path / "e.csv"))
        assert len(back) == 0
        assert back.d == 2


class TestNormalization:
    def test_three_point_column(self):
        # independent oracle: straight mean/population-std arithmetic
        col = np.array([[0.0], [1.0], [2.0]])
        sigma = math.sqrt(((col - 1.0) ** 2).mean())
        t = fit_normalization(col)
        got = t.transform(col)[:, 0]
        step = TARGET_STD / sigma
        np.testing.assert_allclose(got, [0.5 - step, 0.5, 0.5 + step], atol=1e-15)

    def test_conforming_column_is_identity(self):
        rng = RandomSource(2)
        raw = rng.normal(400)
        raw = (raw - raw.mean()) / raw.std() * TARGET_STD + TARGET_MEAN
        t = fit_normalization(raw[:, None])
        np.testing.assert_allclose(t.transform(raw[:, None]), raw[:, None], atol=1e-12)
        assert abs(t.scale[0] - 1.0) < 1e-9
        assert abs(t.shift[0]) < 1e-9

    def test_defining_property(self):
        rng = RandomSource(8)
        raw = rng.normal((300, 4)) * 3.0 + 7.0
        out = fit_normalization(raw).transform(raw)
        np.testing.assert_allclose(out.mean(axis=0), TARGET_MEAN, atol=1e-9)
        np.testing.assert_allclose(out.std(axis=0), TARGET_STD, atol=1e-9)

    def test_constant_column_raises(self):
        raw = np.column_stack([np.arange(5.0), np.full(5, 3.3)])
        with pytest.raises(DegenerateColumnError):
            fit_normalization(raw)

    def test_round_trip_identity(self):
        rng = RandomSource(4)
        for _ in range(5):
            raw = rng.normal((50, 3)) * rng.uniform(3) * 10
            t = fit_normalization(raw)
            np.testing.assert_allclose(t.inverse(t.transform(raw)), raw, atol=1e-12)


class TestStratifiedSplit:
    def test_exact_divisibility(self):
        rng = RandomSource(1)
        X = rng.uniform((100, 2))
        y = np.repeat([0, 1], 50)
        (Xtr, ytr), (Xte, yte) = stratified_split(X, y, 0.8, RandomSource(2))
        assert np.bincount(ytr).tolist() == [40, 40]
        assert np.bincount(yte).tolist() == [10, 10]

    def test_rounding_rule(self):
        # 7/3 class split at 0.8: round-half-up gives 6 and 2 (sums to 8)
        X = np.arange(20.0).reshape(10, 2)
        y = np.array([0] * 7 + [1] * 3)
        (Xtr, ytr), (_, yte) = stratified_split(X, y, 0.8, RandomSource(3))
        counts = np.bincount(ytr, minlength=2)
        assert counts[0] in (5, 6)
        assert counts[1] in (2, 3)
        assert counts.sum() == 8

    def test_deterministic(self):
        X = RandomSource(5).uniform((30, 2))
        y = np.repeat([0, 1, 2], 10)
        first = stratified_split(X, y, 0.7, RandomSource(9))
        second = stratified_split(X, y, 0.7, RandomSource(9))
        np.testing.assert_array_equal(first[0][0], second[0][0])
        np.testing.assert_array_equal(first[1][1], second[1][1])

    def test_singleton_class_raises(self):
        X = np.zeros((4, 1))
        y = np.array([0, 0, 0, 1])
        with pytest.raises(StratificationError):
            stratified_split(X, y, 0.8, RandomSource(0))

    def test_disjoint_and_exhaustive(self):
        X = RandomSource(6).uniform((25, 3))
        y = np.array([0] * 13 + [1] * 12)
        (Xtr, ytr), (Xte, yte) = stratified_split(X, y, 0.6, RandomSource(7))
        assert len(ytr) + len(yte) == 25
        rows = {tuple(r) for r in np.vstack([Xtr, Xte])}
        assert len(rows) == 25  # nothing lost or duplicated

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            stratified_split(np.zeros((4, 1)), np.array([0, 0, 1, 1]), 1.0, RandomSource(0))


class TestRoundHalfUp:
    @pytest.mark.parametrize("x,expect", [(0.5, 1), (1.5, 2), (2.4, 2), (-0.5, 0), (35.631, 36)])
    def test_values(self, x, expect):
        assert round_half_up(x) == expect


class TestSampleOutputsInsideSpace:
    def test_all_sampler_outputs_clipped(self, halfspace):
        ds = random_sampler(500, halfspace, RandomSource(12))
        assert np.all(ds.X >= 0.0) and np.all(ds.X <= 1.0)


class TestLabeledSample:
    def test_fields(self):
        s = LabeledSample(np.array([0.1, 0.2]), 1)
        assert s.label == 1
        assert s.point.shape == (2,)
