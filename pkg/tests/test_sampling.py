import numpy as np
from scipy import stats

from varinit.sampling import CHUNK, derive_seed, standard_normal, weight_rng


class TestStandardNormal:
    def test_deterministic(self):
        np.testing.assert_array_equal(standard_normal(1000, 7), standard_normal(1000, 7))

    def test_seeds_differ(self):
        assert not np.array_equal(standard_normal(100, 1), standard_normal(100, 2))

    def test_prefix_property(self):
        full = standard_normal(CHUNK + 1001, 5)
        for k in (0, 1, 2, 999, CHUNK - 1, CHUNK, CHUNK + 1):
            np.testing.assert_array_equal(standard_normal(k, 5), full[:k])

    def test_distribution(self):
        z = standard_normal(200_000, 11)
        assert abs(z.mean()) < 0.01
        assert abs(z.var() - 1) < 0.01
        assert stats.kstest(z, "norm").pvalue > 1e-3

    def test_odd_length_and_empty(self):
        assert standard_normal(3, 0).shape == (3,)
        assert standard_normal(0, 0).shape == (0,)

    def test_large_seed_accepted(self):
        assert standard_normal(4, 2**64 + 3).shape == (4,)


class TestDerivedSeeds:
    def test_stable_and_distinct(self):
        assert derive_seed(0, 1) == derive_seed(0, 1)
        assert len({derive_seed(0, i) for i in range(100)}) == 100
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)

    def test_weight_rng_reproducible(self):
        a = weight_rng(3).uniform(size=5)
        b = weight_rng(3).uniform(size=5)
        np.testing.assert_array_equal(a, b)
