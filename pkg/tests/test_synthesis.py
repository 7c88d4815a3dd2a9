import numpy as np
import pytest

from mvfad.synthesis import (
    PerlinParams,
    foreground_mask,
    perlin_field,
    procedural_texture,
    synthesize_anomaly,
)

PARAMS = PerlinParams()


class TestForegroundMask:
    def test_all_zero_depth(self):
        assert not foreground_mask(np.zeros((4, 4))).any()

    def test_all_positive_depth(self):
        assert foreground_mask(np.full((4, 4), 1.3)).all()

    def test_checkerboard(self):
        depth = np.indices((6, 6)).sum(axis=0) % 2
        expected = depth.astype(bool)  # elementwise comparison oracle
        np.testing.assert_array_equal(foreground_mask(depth.astype(float)), expected)

    def test_negative_depth_rejected(self):
        with pytest.raises(ValueError):
            foreground_mask(np.array([[0.5, -0.1]]))


class TestPerlinField:
    def test_same_seed_bit_identical(self):
        a = perlin_field(32, 48, PARAMS, seed=123)
        b = perlin_field(32, 48, PARAMS, seed=123)
        np.testing.assert_array_equal(a, b)

    def test_range_scan(self):
        for seed in range(10):
            f = perlin_field(40, 40, PARAMS, seed=seed)
            assert f.min() >= 0.0 and f.max() <= 1.0

    def test_distinct_seeds_differ(self):
        for seed in range(10):
            a = perlin_field(16, 16, PARAMS, seed=seed)
            b = perlin_field(16, 16, PARAMS, seed=seed + 1000)
            assert (a != b).any()

    def test_too_small_image_rejected(self):
        with pytest.raises(ValueError):
            perlin_field(3, 3, PerlinParams(grid_periods=(4, 4)), seed=0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            PerlinParams(grid_periods=(0, 4))
        with pytest.raises(ValueError):
            PerlinParams(octaves=0)
        with pytest.raises(ValueError):
            PerlinParams(persistence=0.0)
        with pytest.raises(ValueError):
            PerlinParams(threshold=1.0)


def make_inputs(seed, size=32):
    rng = np.random.default_rng(seed)
    x_plus = rng.random((size, size, 3))
    depth = np.where(rng.random((size, size)) < 0.7, rng.uniform(0.5, 2.0, (size, size)), 0.0)
    source = rng.random((size, size, 3))
    return x_plus, depth, source


class TestSynthesizeAnomaly:
    def test_deterministic_in_seed(self):
        x_plus, depth, source = make_inputs(0)
        a = synthesize_anomaly(x_plus, depth, source, PARAMS, seed=9)
        b = synthesize_anomaly(x_plus, depth, source, PARAMS, seed=9)
        np.testing.assert_array_equal(a.x_minus, b.x_minus)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.beta == b.beta

    def test_contracts_over_50_random_samples(self):
        # mask containment, off-mask identity (bit-exact), beta law.
        for seed in range(50):
            x_plus, depth, source = make_inputs(seed)
            s = synthesize_anomaly(x_plus, depth, source, PARAMS, seed=seed)
            fg = foreground_mask(depth)
            assert not (s.mask & ~fg).any()
            np.testing.assert_array_equal(s.x_minus[~s.mask], x_plus[~s.mask])
            assert 0.15 <= s.beta < 1.0
            assert s.x_minus.min() >= 0.0 and s.x_minus.max() <= 1.0

    def test_nonempty_mask_changes_pixels(self):
        for seed in range(10):
            x_plus, depth, source = make_inputs(seed + 500)
            s = synthesize_anomaly(x_plus, depth, source, PARAMS, seed=seed)
            if s.mask.any():
                assert (s.x_minus != x_plus).any()

    def test_all_background_depth_degenerates(self):
        x_plus, _, source = make_inputs(3)
        s = synthesize_anomaly(x_plus, np.zeros((32, 32)), source, PARAMS, seed=1)
        assert s.degenerate
        assert not s.mask.any()
        np.testing.assert_array_equal(s.x_minus, x_plus)

    def test_shape_mismatch_rejected(self):
        x_plus, depth, source = make_inputs(4)
        with pytest.raises(ValueError):
            synthesize_anomaly(x_plus, depth[:16], source, PARAMS, seed=0)
        with pytest.raises(ValueError):
            synthesize_anomaly(x_plus, depth, source[:16], PARAMS, seed=0)

    def test_custom_beta_range(self):
        x_plus, depth, source = make_inputs(5)
        for seed in range(20):
            s = synthesize_anomaly(x_plus, depth, source, PARAMS, seed=seed,
                                   beta_range=(0.2, 0.3))
            assert 0.2 <= s.beta < 0.3


class TestProceduralTexture:
    def test_deterministic_and_in_range(self):
        a = procedural_texture(20, 30, seed=1)
        b = procedural_texture(20, 30, seed=1)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (20, 30, 3)
        assert a.min() >= 0.0 and a.max() <= 1.0

    def test_distinct_seeds_differ(self):
        assert (procedural_texture(8, 8, 1) != procedural_texture(8, 8, 2)).any()
